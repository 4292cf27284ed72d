"""Put the repository root on the import path for the test suite."""
