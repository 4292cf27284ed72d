"""Tests for the encoder-decoder forecaster."""
import numpy as np
import pytest

from pbca_forecast.autodiff import Graph, finite_diff_check
from pbca_forecast.exceptions import ContractError, ShapeError
from pbca_forecast.model import (
    DecoderMode,
    ForecastModel,
    build_loss,
    forward,
    is_regularized,
    loss,
    loss_and_gradients,
    parameter_shapes,
    predict_many,
)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _step(params, prefix, x, h, c):
    n = h.size
    z = params[f"{prefix}.W"] @ x + params[f"{prefix}.R"] @ h + params[f"{prefix}.b"][:, 0]
    zi, zf, zo, zc = z[:n], z[n : 2 * n], z[2 * n : 3 * n], z[3 * n :]
    i = _sigmoid(zi + params[f"{prefix}.p_i"][:, 0] * c)
    f = _sigmoid(zf + params[f"{prefix}.p_f"][:, 0] * c)
    c = f * c + i * np.tanh(zc)
    o = _sigmoid(zo + params[f"{prefix}.p_o"][:, 0] * c)
    return o * np.tanh(c), c


def _reference_forecast(params, window, T_prime, pi1=False):
    """Plain numpy forward pass of a univariate A or π(1) model, free running."""
    T = len(window)
    n = params["out.W"].shape[1]
    forward_states, backward_states = [], [None] * T
    h, c = np.zeros(n), np.zeros(n)
    for x in window:
        h, c = _step(params, "enc0.fwd", np.array([x]), h, c)
        forward_states.append(h)
    h, c = np.zeros(n), np.zeros(n)
    for j in reversed(range(T)):
        h, c = _step(params, "enc0.bwd", np.array([window[j]]), h, c)
        backward_states[j] = h
    states = np.vstack([np.column_stack(forward_states), np.column_stack(backward_states)])
    projected = params["att0.U_a"] @ states

    s, cell = np.zeros(n), np.zeros(n)
    y = window[-1]
    predictions = []
    for i in range(1, T_prime + 1):
        lags = np.array([i + T - j for j in range(1, T + 1)])
        keys = projected
        valid = np.ones(T, dtype=bool)
        if pi1:
            keys = projected * params["att0.pi"][0, np.minimum(lags, T + T_prime) - 1]
            valid = lags <= T
        query = params["att0.W_a"] @ s
        scores = np.array([params["att0.v_a"][0] @ np.tanh(query + keys[:, j]) for j in range(T)])
        exp = np.where(valid, np.exp(scores - scores[valid].max()), 0.0)
        weights = exp / exp.sum()
        context = states @ weights
        s, cell = _step(params, "dec", np.concatenate([[y], context]), s, cell)
        y = float(params["out.W"][0] @ s + params["out.b"][0, 0])
        predictions.append(y)
    return np.array(predictions)


class TestParameterShapes:
    """Test the parameter layout per variant."""

    def test_univariate_names(self, make_config):
        """Test names, order and decoder input size of a π(2) model."""
        shapes = parameter_shapes(make_config("pi2"))
        names = list(shapes)
        assert names[0] == "enc0.fwd.W"
        assert names[-2:] == ["out.W", "out.b"]
        assert shapes["att0.pi"] == (6, 10)
        assert shapes["dec.W"] == (12, 7)
        assert "enc1.fwd.W" not in shapes

    def test_content_has_no_pi(self, make_config):
        """Test that RNN-A declares no π."""
        assert not any(name.endswith(".pi") for name in parameter_shapes(make_config("A")))

    def test_pi3(self, make_config):
        """Test one encoder per variable and one attention over 2Kn states."""
        shapes = parameter_shapes(make_config("pi3", K=2))
        assert "enc1.bwd.p_o" in shapes
        assert shapes["att0.U_a"] == (4, 12)
        assert shapes["att0.pi"] == (12, 10)
        assert "att1.W_a" not in shapes
        assert shapes["dec.W"] == (12, 13)

    def test_multivariate(self, make_config):
        """Test one attention block per variable."""
        shapes = parameter_shapes(make_config("multi-pi1", K=2))
        assert shapes["att0.pi"] == shapes["att1.pi"] == (1, 10)
        assert shapes["att1.U_a"] == (4, 6)
        assert shapes["dec.W"] == (12, 13)

    def test_single_variable_reductions(self, make_config):
        """Test that π(3) and multi-* over K=1 match their univariate layout."""
        assert parameter_shapes(make_config("pi3")) == parameter_shapes(make_config("pi2"))
        assert parameter_shapes(make_config("multi-pi1")) == parameter_shapes(make_config("pi1"))
        assert parameter_shapes(make_config("multi-A")) == parameter_shapes(make_config("A"))


def test_is_regularized():
    """Test which names enter the default penalty."""
    assert is_regularized("dec.W")
    assert is_regularized("att0.v_a")
    assert not is_regularized("dec.b")
    assert not is_regularized("att0.pi")
    assert not is_regularized("out.b")


class TestForecastModel:
    """Test model construction."""

    def test_initialize_is_seeded(self, make_config):
        """Test that one seed gives one set of parameters."""
        a = ForecastModel.initialize(make_config("pi1"))
        b = ForecastModel.initialize(make_config("pi1"))
        c = ForecastModel.initialize(make_config("pi1", seed=4))
        assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
        assert not np.array_equal(a.params["dec.W"], c.params["dec.W"])

    def test_initial_values(self, make_model):
        """Test π ones, zero output bias and the forget bias."""
        model = make_model("pi2")
        assert np.array_equal(model.params["att0.pi"], np.ones((6, 10)))
        assert model.params["out.b"][0, 0] == 0.0
        assert model.params["dec.b"][3:6, 0].tolist() == [1.0, 1.0, 1.0]

    def test_shape_mismatch(self, make_model):
        """Test that parameters must match the config."""
        model = make_model("pi1")
        params = dict(model.params)
        params["att0.pi"] = np.ones((6, 10))
        with pytest.raises(ShapeError, match="att0.pi"):
            ForecastModel(config=model.config, params=params)
        del params["att0.pi"]
        with pytest.raises(ShapeError, match="missing"):
            ForecastModel(config=model.config, params=params)

    def test_copy_is_deep(self, make_model):
        """Test that a copy does not share arrays."""
        model = make_model("A")
        clone = model.copy()
        clone.params["out.b"][0, 0] = 5.0
        assert model.params["out.b"][0, 0] == 0.0

    def test_weights(self, make_model):
        """Test the penalized subset."""
        model = make_model("pi1")
        names = {name for name, _ in model.weights()}
        assert "dec.W" in names and "att0.pi" not in names and "out.b" not in names
        wide = ForecastModel(config=model.config.with_overrides(regularize_all=True), params=model.params)
        assert {name for name, _ in wide.weights()} == set(model.params)


class TestForward:
    """Test forecasts of single examples."""

    def setup_method(self):
        """Set up an example window."""
        rng = np.random.default_rng(11)
        self.window = rng.normal(size=(8, 1))
        self.targets = rng.normal(size=2)

    def test_zero_parameters_predict_output_bias(self, make_model):
        """Test that all-zero parameters predict b_out everywhere."""
        model = make_model("pi1")
        params = {name: np.zeros_like(value) for name, value in model.params.items()}
        params["out.b"][0, 0] = 0.7
        result = forward(ForecastModel(config=model.config, params=params), self.window)
        assert result.predictions.tolist() == [0.7, 0.7]

    def test_zero_parameters_flat_attention(self, make_model):
        """Test a flat content-attention profile of 1/T."""
        model = make_model("A")
        params = {name: np.zeros_like(value) for name, value in model.params.items()}
        result = forward(ForecastModel(config=model.config, params=params), self.window)
        np.testing.assert_allclose(result.attention[0], np.full((2, 8), 1 / 8))

    @pytest.mark.parametrize("variant", ["A", "pi1"])
    def test_matches_numpy_reference(self, make_model, variant):
        """Test against a plain numpy implementation."""
        model = make_model(variant)
        if variant == "pi1":
            model.params["att0.pi"] = np.random.default_rng(5).uniform(0.5, 1.5, size=(1, 10))
        result = forward(model, self.window)
        expected = _reference_forecast(model.params, self.window[:, 0], 2, pi1=variant == "pi1")
        np.testing.assert_allclose(result.predictions, expected, rtol=0, atol=1e-12)

    def test_teacher_forcing_agrees_on_first_step(self, make_model):
        """Test that both modes share the first prediction only."""
        model = make_model("pi2")
        free = forward(model, self.window, self.targets, DecoderMode.FREE_RUNNING).predictions
        forced = forward(model, self.window, self.targets, DecoderMode.TEACHER_FORCED).predictions
        assert free[0] == forced[0]
        assert free[1] != forced[1]

    def test_teacher_forcing_needs_targets(self, make_model):
        """Test that teacher forcing without targets is refused."""
        with pytest.raises(ContractError):
            forward(make_model("A"), self.window, None, DecoderMode.TEACHER_FORCED)

    def test_window_shape(self, make_model):
        """Test that the window must be (T, K)."""
        with pytest.raises(ShapeError):
            forward(make_model("A"), self.window[:7])
        with pytest.raises(ShapeError):
            forward(make_model("A"), self.window, np.zeros(3), DecoderMode.TEACHER_FORCED)

    def test_attention_rows(self, make_model):
        """Test weight rows on the simplex with the masked lag at zero."""
        result = forward(make_model("pi1"), self.window)
        weights = result.attention[0]
        assert weights.shape == (2, 8)
        np.testing.assert_allclose(weights.sum(axis=1), [1.0, 1.0], atol=1e-12)
        assert weights[1, 0] == 0.0
        assert weights[0, 0] > 0.0

    def test_multivariate_attention_blocks(self, make_model, rng):
        """Test one weight matrix per variable."""
        model = make_model("multi-pi2", K=2)
        result = forward(model, rng.normal(size=(8, 2)))
        assert len(result.attention) == 2
        assert all(block.shape == (2, 8) for block in result.attention)

    def test_deterministic(self, make_model):
        """Test that the same inputs give bit-identical outputs."""
        model = make_model("pi3", K=1)
        a = forward(model, self.window).predictions
        b = forward(model, self.window).predictions
        assert np.array_equal(a, b)


class TestReductions:
    """Test that special parameter values collapse variants onto each other."""

    def setup_method(self):
        """Set up an example window."""
        self.window = np.random.default_rng(13).normal(size=(8, 1))

    def test_pi1_ones_without_masking_is_content(self, make_model, make_config):
        """Test π(1) = 1 recovers RNN-A."""
        pi1 = make_model("pi1", masking=False)
        params = {name: value for name, value in pi1.params.items() if name != "att0.pi"}
        content = ForecastModel(config=make_config("A"), params=params)
        a = forward(pi1, self.window).predictions
        b = forward(content, self.window).predictions
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_pi3_single_variable_is_pi2(self, make_model, make_config):
        """Test that π(3) over K=1 forecasts like π(2)."""
        pi3 = make_model("pi3")
        pi3.params["att0.pi"] = np.random.default_rng(2).normal(size=(6, 10))
        pi2 = ForecastModel(config=make_config("pi2"), params=pi3.params)
        assert np.array_equal(forward(pi3, self.window).predictions, forward(pi2, self.window).predictions)

    def test_multi_single_variable_is_univariate(self, make_model, make_config):
        """Test that multi-π(1) over K=1 forecasts like π(1)."""
        multi = make_model("multi-pi1")
        uni = ForecastModel(config=make_config("pi1"), params=multi.params)
        assert np.array_equal(forward(multi, self.window).predictions, forward(uni, self.window).predictions)


class TestLoss:
    """Test the regularized squared loss."""

    def test_examples(self):
        """Test hand-computed values."""
        assert loss([1.0, 2.0], [1.0, 2.0], {}, 0.0) == 0.0
        assert loss([0.0], [1.0], {}, 0.0) == 1.0
        assert loss([1.0], [1.0], {"w": np.array([3.0])}, 1e-4) == pytest.approx(9e-4)

    def test_bias_and_pi_excluded(self):
        """Test that biases and π stay out unless asked."""
        weights = {"dec.b": np.array([3.0]), "att0.pi": np.array([2.0])}
        assert loss([0.0], [0.0], weights, 1.0) == 0.0
        assert loss([0.0], [0.0], weights, 1.0, regularize_all=True) == pytest.approx(13.0)

    def test_length_mismatch(self):
        """Test that predictions and targets must pair up."""
        with pytest.raises(ContractError):
            loss([1.0, 2.0], [1.0], {}, 0.0)

    def test_graph_loss_matches(self, make_model, rng):
        """Test the graph loss against the closed form."""
        model = make_model("pi2", l2=1e-3)
        window, targets = rng.normal(size=(8, 1)), rng.normal(size=2)
        value, _ = loss_and_gradients(model, window, targets, DecoderMode.TEACHER_FORCED)
        predictions = forward(model, window, targets, DecoderMode.TEACHER_FORCED).predictions
        expected = loss(predictions, targets, model.params, 1e-3)
        assert value == pytest.approx(expected, rel=1e-12)


class TestGradients:
    """Test backpropagation through the whole forecaster."""

    @pytest.mark.parametrize(
        ("variant", "K"),
        [("A", 1), ("pi1", 1), ("pi2", 1), ("pi3", 2), ("multi-pi1", 2)],
    )
    def test_finite_differences(self, make_model, variant, K):
        """Test backprop against central differences."""
        rng = np.random.default_rng(17)
        model = make_model(variant, K=K, target=K - 1)
        for name in model.params:
            if name.endswith(".pi"):
                model.params[name] = rng.uniform(0.5, 1.5, size=model.params[name].shape)
        window, targets = rng.normal(size=(8, K)), rng.normal(size=2)

        def build(graph):
            return build_loss(graph, model.config, window, targets, DecoderMode.TEACHER_FORCED, l2=1e-3)

        assert finite_diff_check(build, model.params) < 1e-4

    def test_free_running_finite_differences(self, make_model):
        """Test backprop when predictions feed back into the decoder."""
        rng = np.random.default_rng(19)
        model = make_model("pi1")
        window, targets = rng.normal(size=(8, 1)), rng.normal(size=2)

        def build(graph):
            return build_loss(graph, model.config, window, targets, DecoderMode.FREE_RUNNING)

        assert finite_diff_check(build, model.params) < 1e-4

    def test_masked_lags_get_no_gradient(self, make_model, rng):
        """Test that π coordinates of lags beyond T stay untouched."""
        model = make_model("pi2")
        _, grads = loss_and_gradients(model, rng.normal(size=(8, 1)), rng.normal(size=2))
        assert not grads["att0.pi"][:, 8:].any()
        assert grads["att0.pi"][:, :8].any()

    def test_every_parameter_has_a_gradient(self, make_model, rng):
        """Test that gradients cover the parameter set."""
        model = make_model("multi-A", K=2)
        _, grads = loss_and_gradients(model, rng.normal(size=(8, 2)), rng.normal(size=2))
        assert set(grads) == set(model.params)
        assert all(grads[name].shape == model.params[name].shape for name in model.params)


def test_predict_many(make_model, rng):
    """Test stacked predictions and attention."""
    model = make_model("pi1")
    windows = rng.normal(size=(3, 8, 1))
    predictions, attention = predict_many(model, windows)
    assert predictions.shape == (3, 2)
    assert attention[0].shape == (3, 2, 8)
    assert np.array_equal(predictions[1], forward(model, windows[1]).predictions)
    with pytest.raises(ContractError):
        predict_many(model, windows[:0])


def test_build_loss_declares_every_parameter(make_config, rng):
    """Test that one loss graph touches the whole parameter set."""
    config = make_config("pi2")
    graph = Graph()
    build_loss(graph, config, rng.normal(size=(8, 1)), rng.normal(size=2))
    assert len(graph) > 0
    assert set(graph.parameters) == set(parameter_shapes(config))
