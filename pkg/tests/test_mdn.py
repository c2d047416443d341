import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mobidens.mdn import (
    ModelFormatError,
    count_parameters,
    forward,
    forward_batch,
    forward_params,
    head_width,
    init_model,
    layer_shapes,
    load_model,
    network_backward,
    network_forward,
    save_model,
    transform_heads,
    transform_heads_backward,
)
from mobidens.mixture import Kind
from mobidens.scenario import REFERENCE_SCENARIOS, Scenario


def explicit_count(K, H):
    return 4 * 8 * K + 8 * K + 8 * K * 8 * K + 8 * K + 8 * K * H + H


@pytest.mark.parametrize("K", range(1, 11))
def test_parameter_count(K):
    assert count_parameters("mobius", K) == explicit_count(K, 5 * K)
    assert count_parameters("gaussian", K) == explicit_count(K, 6 * K)
    assert init_model("mobius", K, 0).n_parameters == explicit_count(K, 5 * K)


def test_layer_widths():
    assert layer_shapes("gaussian", 1)[-1] == (8, 6)
    assert layer_shapes("mobius", 10) == [(4, 80), (80, 80), (80, 50)]
    assert head_width(Kind.MOBIUS, 3) == 15


def test_init_is_deterministic_glorot():
    a, b = init_model("mobius", 3, 7), init_model("mobius", 3, 7)
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)
    for w, bias in zip(a.weights, a.biases):
        limit = math.sqrt(6 / sum(w.shape))
        assert np.all(np.abs(w) <= limit)
        # a uniform sample fills most of its range
        assert np.abs(w).max() > 0.8 * limit
        assert not np.any(bias)
    c = init_model("mobius", 3, 8)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_zero_model_transform_arithmetic():
    m = init_model("mobius", 2, 0)
    zero = m.with_parameters([np.zeros_like(p) for p in m.parameters()])
    mix = forward(zero, REFERENCE_SCENARIOS[3])
    assert mix.weights == pytest.approx((0.5, 0.5), abs=1e-15)
    for c in mix.components:
        assert c.gamma == pytest.approx(math.log(2) + 0.01, abs=1e-15)
        assert c.beta == pytest.approx(math.log(2) + 0.01, abs=1e-15)
        assert c.a == pytest.approx(0.4995, abs=1e-15)
        assert c.mu == 0.0


def test_gaussian_zero_model():
    m = init_model("gaussian", 3, 0)
    zero = m.with_parameters([np.zeros_like(p) for p in m.parameters()])
    for c in forward(zero, REFERENCE_SCENARIOS[0]).components:
        assert (c.mean_x, c.mean_y, c.rho) == (0.0, 0.0, 0.0)
        assert c.sigma_x == pytest.approx(math.log(2) + 0.001)


@settings(max_examples=1000, deadline=None)
@given(
    st.sampled_from(["mobius", "gaussian"]),
    st.integers(1, 4),
    st.integers(0, 2 ** 32 - 1),
    st.floats(0.1, 30.0),
    st.floats(0.01, 2.0), st.floats(0.01, 1.0), st.floats(0.0, 0.99), st.floats(-math.pi, math.pi, exclude_min=True),
)
def test_head_ranges(kind, K, seed, scale, d, dp, r, theta):
    m = init_model(kind, K, seed)
    m = m.with_parameters([p * scale + (scale if i % 2 else 0) for i, p in enumerate(m.parameters())])
    mix = forward(m, Scenario(d, dp, r, theta))  # constructing params re-validates every range
    assert abs(sum(mix.weights) - 1) < 1e-9 and min(mix.weights) >= 0
    for c in mix.components:
        if kind == "mobius":
            assert c.gamma > 0 and c.beta > 0 and 0 <= c.a < 1 and -math.pi < c.mu <= math.pi
        else:
            assert c.sigma_x > 0 and c.sigma_y > 0 and abs(c.rho) < 1


def test_saturated_orientation_maps_to_pi():
    raw = np.zeros((1, 5))
    raw[0, 4] = -1e3
    params = transform_heads("mobius", 1, raw)
    from mobidens.mdn import mixtures_from_params
    assert mixtures_from_params("mobius", params)[0].components[0].mu == math.pi


def test_forward_is_pure_and_batched():
    m = init_model("gaussian", 3, 11)
    one = [forward(m, s) for s in REFERENCE_SCENARIOS]
    many = forward_batch(m, REFERENCE_SCENARIOS)
    for a, b in zip(one, many):
        assert np.allclose(a.weights, b.weights, rtol=1e-13)
        for p, q in zip(a.components, b.components):
            assert np.allclose(list(vars(p).values()), list(vars(q).values()), rtol=1e-13, atol=1e-15)
    assert forward_batch(m, REFERENCE_SCENARIOS) == many
    assert forward(m, REFERENCE_SCENARIOS[2]) == forward(m, REFERENCE_SCENARIOS[2])


@pytest.mark.parametrize("kind", ["mobius", "gaussian"])
def test_backward_matches_finite_differences(kind):
    # d(sum(c * params))/d(network parameters), checked through heads and layers
    K = 2
    m = init_model(kind, K, 4)
    X = np.array([s.as_vector() for s in REFERENCE_SCENARIOS])
    rng = np.random.default_rng(0)
    coef = {k: rng.normal(size=(len(X), K)) for k in forward_params(m, REFERENCE_SCENARIOS)}

    def objective(model):
        p = forward_params(model, REFERENCE_SCENARIOS)
        return sum(float(np.sum(coef[k] * p[k])) for k in p)

    raw, acts = network_forward(m, X)
    params = transform_heads(kind, K, raw)
    d_raw = transform_heads_backward(kind, K, raw, params, coef)
    grads = network_backward(m, acts, d_raw)
    P = m.parameters()
    h = 1e-6
    for blk in range(len(P)):
        for idx in list(np.ndindex(P[blk].shape))[:: max(1, P[blk].size // 7)]:
            up = [p.copy() for p in P]; dn = [p.copy() for p in P]
            up[blk][idx] += h; dn[blk][idx] -= h
            fd = (objective(m.with_parameters(up)) - objective(m.with_parameters(dn))) / (2 * h)
            assert grads[blk][idx] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_save_load_round_trip(tmp_path):
    m = init_model("mobius", 3, 5)
    m = m.with_parameters([p + 0.1 * np.sin(np.arange(p.size)).reshape(p.shape) for p in m.parameters()])
    path = tmp_path / "m.json"
    save_model(m, path)
    doc = json.loads(path.read_text())
    assert {"format_version", "kind", "K", "seed", "activation", "transforms", "layers"} <= set(doc)
    back = load_model(path)
    for p, q in zip(m.parameters(), back.parameters()):
        assert np.array_equal(p, q)
    assert forward_batch(m, REFERENCE_SCENARIOS) == forward_batch(back, REFERENCE_SCENARIOS)
    assert (back.kind, back.K, back.seed) == (Kind.MOBIUS, 3, 5)


def _saved_doc(tmp_path):
    path = tmp_path / "m.json"
    save_model(init_model("mobius", 3, 1), path)
    return path, json.loads(path.read_text())


def test_truncated_file_is_rejected(tmp_path):
    path, _ = _saved_doc(tmp_path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ModelFormatError, match="not a complete model"):
        load_model(path)


def test_output_bias_count_mismatch(tmp_path):
    path, doc = _saved_doc(tmp_path)
    doc["layers"][2]["biases"] = doc["layers"][2]["biases"][:14]
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="14 biases, expected 15"):
        load_model(path)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d.pop("kind"), "missing field 'kind'"),
        (lambda d: d.update(K="3"), "field 'K'"),
        (lambda d: d.update(kind="cauchy"), "field 'kind'"),
        (lambda d: d.update(format_version=9), "format_version"),
        (lambda d: d["layers"][0].update(rows=5), "dimension mismatch"),
        (lambda d: d.update(activation="relu"), "activation"),
        (lambda d: d["layers"][1]["weights"].__setitem__(0, "x"), "non-numeric"),
        (lambda d: d.update(K=2), "dimension mismatch"),
    ],
)
def test_malformed_fields_are_named(tmp_path, mutate, message):
    path, doc = _saved_doc(tmp_path)
    mutate(doc)
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match=message):
        load_model(path)


def test_invalid_k_rejected():
    with pytest.raises(ValueError):
        init_model("mobius", 0, 0)
