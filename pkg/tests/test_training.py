import math

import numpy as np
import pytest

from mobidens import training
from mobidens.geometry import GridSpec
from mobidens.mdn import HEAD_BLOCKS, forward, init_model
from mobidens.mixture import DensityField, Kind, evaluate_on_grid
from mobidens.scenario import REFERENCE_SCENARIOS, Scenario
from mobidens.training import (
    TrainConfig,
    TrainingDiverged,
    TrainingSet,
    TrainReport,
    loss_and_gradient,
    loss_and_gradient_reference,
    loss_gradient,
    quartic_loss,
    train,
)

G = GridSpec(40)


def rwp_like(s: Scenario) -> DensityField:
    # smooth dome plus a bump at the charger, zero outside the disk
    xy = G.coordinates()
    r2 = (xy ** 2).sum(axis=1)
    cx, cy = s.charger
    bump = np.exp(-((xy[:, 0] - cx) ** 2 + (xy[:, 1] - cy) ** 2) / (2 * s.d_prime ** 2))
    v = np.where(r2 <= 1, (1 - r2) + 2 * bump, 0.0)
    return DensityField(G, v / (v.sum() * G.cell_area), s)


@pytest.fixture(scope="module")
def small_set():
    return TrainingSet([(s, rwp_like(s)) for s in REFERENCE_SCENARIOS[1:4]])


def self_fit_set(model):
    # truth produced by the training pipeline itself: the exact-fit point of the loss
    scen = REFERENCE_SCENARIOS[:3]
    probe = TrainingSet([(s, rwp_like(s)) for s in scen])
    fhat = training._Evaluation(model, probe).fhat
    return TrainingSet([(s, DensityField(G, row, s)) for s, row in zip(scen, fhat)])


def fd_gradient_check(model, ts, h=1e-5, rel=1e-4, abs_=1e-8):
    grads = loss_gradient(model, ts)
    params = model.parameters()
    worst = 0.0
    for blk, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            up = [q.copy() for q in params]; dn = [q.copy() for q in params]
            up[blk][idx] += h; dn[blk][idx] -= h
            fd = (quartic_loss(model.with_parameters(up), ts) - quartic_loss(model.with_parameters(dn), ts)) / (2 * h)
            g = grads[blk][idx]
            err = abs(g - fd)
            if not (err < abs_ or err < rel * abs(fd)):
                worst = max(worst, err / max(abs(fd), 1e-300))
                pytest.fail(f"block {blk} {idx}: analytic {g!r} vs finite difference {fd!r}")
    return worst


@pytest.mark.parametrize("kind, K", [("mobius", 2), ("gaussian", 3)])
def test_gradient_matches_finite_differences(small_set, kind, K):
    fd_gradient_check(init_model(kind, K, 21), small_set)


def test_exact_fit_has_zero_gradient():
    m = init_model("mobius", 2, 3)
    ts = self_fit_set(m)
    loss, grads = loss_and_gradient(m, ts)
    assert loss == 0.0
    assert all(not np.any(g) for g in grads)


def test_zero_gradient_model_stops_after_patience():
    m = init_model("mobius", 2, 3)
    ts = self_fit_set(m)
    trained, rep = train(m, ts, TrainConfig(max_epochs=5000))
    assert rep.converged and rep.epochs_run == 400
    assert len(rep.loss_history) == 400
    for p, q in zip(m.parameters(), trained.parameters()):
        assert np.array_equal(p, q)


def test_max_epochs_reports_not_converged(small_set):
    _, rep = train(init_model("gaussian", 1, 0), small_set, TrainConfig(max_epochs=1))
    assert rep.epochs_run == 1 and rep.converged is False


@pytest.mark.parametrize("kind", ["mobius", "gaussian"])
def test_first_adam_step_is_lr_times_sign(small_set, kind):
    m = init_model(kind, 2, 8)
    grads = loss_gradient(m, small_set)
    lr = 0.005
    trained, _ = train(m, small_set, TrainConfig(learning_rate=lr, max_epochs=1))
    for p0, p1, g in zip(m.parameters(), trained.parameters(), grads):
        big = np.abs(g) > 1e-4
        np.testing.assert_allclose((p1 - p0)[big], -lr * np.sign(g[big]), rtol=1e-3)
        assert np.all(np.abs(p1 - p0) <= lr * (1 + 1e-12))


def test_training_is_deterministic(small_set):
    runs = [train(init_model("mobius", 2, 5), small_set, TrainConfig(max_epochs=60, seed=1)) for _ in range(2)]
    (m1, r1), (m2, r2) = runs
    assert r1.loss_history == r2.loss_history
    assert (r1.epochs_run, r1.final_loss, r1.converged) == (r2.epochs_run, r2.final_loss, r2.converged)
    for p, q in zip(m1.parameters(), m2.parameters()):
        assert np.array_equal(p, q)


def test_training_reduces_loss(small_set):
    m = init_model("gaussian", 2, 2)
    _, rep = train(m, small_set, TrainConfig(max_epochs=300))
    assert rep.final_loss < 0.5 * rep.initial_loss


@pytest.mark.parametrize("kind", ["mobius", "gaussian"])
def test_loss_invariant_under_component_permutation(small_set, kind):
    K = 3
    m = init_model(kind, K, 13)
    perm = np.array([2, 0, 1])
    cols = np.concatenate([j * K + perm for j in range(len(HEAD_BLOCKS[Kind.parse(kind)]))])
    params = m.parameters()
    params[4] = params[4][:, cols]
    params[5] = params[5][cols]
    permuted = m.with_parameters(params)
    assert quartic_loss(permuted, small_set) == pytest.approx(quartic_loss(m, small_set), rel=1e-12)


@pytest.mark.parametrize("kind, K", [("mobius", 1), ("mobius", 3), ("gaussian", 2)])
def test_fast_path_matches_reference(small_set, kind, K):
    m = init_model(kind, K, 17)
    loss, grads = loss_and_gradient(m, small_set)
    ref_loss, ref_grads = loss_and_gradient_reference(m, small_set)
    assert loss == pytest.approx(ref_loss, rel=1e-12)
    for g, r in zip(grads, ref_grads):
        np.testing.assert_allclose(g, r, rtol=1e-9, atol=1e-12 * np.abs(r).max())


def test_windows_of_one_scenario_share_evaluation():
    s = REFERENCE_SCENARIOS[2]
    f = rwp_like(s)
    g = DensityField(G, f.values * 0.9 + 0.1 * rwp_like(REFERENCE_SCENARIOS[3]).values, s)
    m = init_model("gaussian", 2, 1)
    both = TrainingSet([(s, f), (s, g)])
    assert not both.one_per_scenario and len(both.scenarios) == 1
    expected = 0.5 * (quartic_loss(m, TrainingSet([(s, f)])) + quartic_loss(m, TrainingSet([(s, g)])))
    assert quartic_loss(m, both) == pytest.approx(expected, rel=1e-13)


def test_loss_is_mean_quartic_error():
    s = REFERENCE_SCENARIOS[1]
    m = init_model("gaussian", 1, 4)
    pred = evaluate_on_grid(forward(m, s), G).values
    truth = rwp_like(s)
    assert quartic_loss(m, TrainingSet([(s, truth)])) == pytest.approx(np.mean((pred - truth.values) ** 4), rel=1e-12)


def test_non_finite_loss_aborts_with_diagnostic(small_set, monkeypatch):
    real = training.loss_and_gradient
    calls = {"n": 0}

    def flaky(model, ts):
        calls["n"] += 1
        loss, grads = real(model, ts)
        return (math.nan if calls["n"] == 4 else loss), grads

    monkeypatch.setattr(training, "loss_and_gradient", flaky)
    with pytest.raises(TrainingDiverged) as exc:
        train(init_model("gaussian", 1, 0), small_set, TrainConfig(max_epochs=10))
    assert exc.value.epoch == 3
    assert "epoch 3" in str(exc.value)


def test_overflowing_update_names_the_block(small_set):
    with pytest.raises(TrainingDiverged, match="layer"):
        train(init_model("gaussian", 1, 0), small_set, TrainConfig(learning_rate=1e308, max_epochs=10))


def test_training_set_validation():
    with pytest.raises(ValueError):
        TrainingSet([])
    bad = DensityField(G, np.ones(G.size))
    with pytest.raises(ValueError, match="outside"):
        TrainingSet([(REFERENCE_SCENARIOS[0], bad)])
    with pytest.raises(ValueError, match="grid"):
        TrainingSet([(REFERENCE_SCENARIOS[0], rwp_like(REFERENCE_SCENARIOS[0])),
                     (REFERENCE_SCENARIOS[1], DensityField(GridSpec(10), np.zeros(100)))])


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(stop_patience_epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(adam_beta1=1.0)


def test_report_round_trip(tmp_path, small_set):
    _, rep = train(init_model("gaussian", 1, 0), small_set, TrainConfig(max_epochs=5))
    rep.save(tmp_path / "r.json")
    back = TrainReport.load(tmp_path / "r.json")
    assert back.loss_history == rep.loss_history and back.converged == rep.converged
    assert all(math.isfinite(v) for v in back.loss_history)


def test_callback_sees_every_epoch(small_set):
    seen = []
    train(init_model("gaussian", 1, 0), small_set, TrainConfig(max_epochs=7), callback=lambda e, m, l: seen.append(e))
    assert seen == list(range(1, 8))
