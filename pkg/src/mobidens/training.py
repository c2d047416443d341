"""Quartic loss, its exact gradient, and full-batch Adam training."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .densities import BRACKET_FLOOR, _log_norm_const, _mobius_terms, gaussian_logpdf_partials
from .special import digamma
from .geometry import GridSpec
from .mdn import (
    MdnModel,
    network_backward,
    network_forward,
    parameter_block_names,
    scenario_matrix,
    transform_heads,
    transform_heads_backward,
)
from .mixture import DensityField, Kind
from .scenario import Scenario

log = logging.getLogger(__name__)

class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, block: str, loss: float):
        self.epoch, self.block, self.loss = epoch, block, loss
        super().__init__(f"non-finite loss ({loss}) at epoch {epoch}; offending parameter block: {block}")


class TrainingSet:
    """(scenario, ground-truth field) pairs on a shared grid.

    Items sharing a scenario share one network evaluation, so windows of
    the same simulation run cost almost nothing extra.
    """

    def __init__(self, items: Sequence[tuple[Scenario, DensityField]]):
        items = list(items)
        if not items:
            raise ValueError("training set is empty")
        grid = items[0][1].grid
        for s, f in items:
            if not isinstance(s, Scenario):
                raise TypeError(f"expected Scenario, got {type(s).__name__}")
            if f.grid != grid:
                raise ValueError(f"grid mismatch: {f.grid} vs {grid}")
        self.items = items
        self.grid: GridSpec = grid
        xy = grid.coordinates()
        self.x, self.y = xy[:, 0], xy[:, 1]
        self.inside = grid.inside_mask()
        self.truth = np.stack([f.values for _, f in items])
        if np.any(self.truth[:, ~self.inside] != 0.0):
            raise ValueError("ground-truth fields must be exactly 0 outside the unit disk")
        self.scenarios: list[Scenario] = []
        index = {}
        self.item_scenario = np.empty(len(items), dtype=int)
        for i, (s, _) in enumerate(items):
            if s not in index:
                index[s] = len(self.scenarios)
                self.scenarios.append(s)
            self.item_scenario[i] = index[s]
        self.X = scenario_matrix(self.scenarios)
        self.one_per_scenario = len(self.scenarios) == len(items)
        self.truth_inside = np.ascontiguousarray(self.truth[:, self.inside])
        xin, yin = self.x[self.inside], self.y[self.inside]
        s = xin * xin + yin * yin
        self.disk_points = tuple(np.ascontiguousarray(v) for v in (xin, yin, s, np.log(np.maximum(1.0 - s, BRACKET_FLOOR))))

    def __len__(self):
        return len(self.items)


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    stop_delta: float = 5e-5
    stop_patience_epochs: int = 400
    max_epochs: int = 20000
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "adam_epsilon", "stop_delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam decay rates must lie in [0, 1)")
        if self.stop_patience_epochs < 1:
            raise ValueError("stop_patience_epochs must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class TrainReport:
    epochs_run: int
    final_loss: float
    loss_history: list
    converged: bool
    initial_loss: float = float("nan")
    wall_time_s: float = 0.0
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"format_version": 1, **asdict(self)}, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "TrainReport":
        doc = json.loads(Path(path).read_text())
        doc.pop("format_version", None)
        return cls(**doc)


class _Evaluation:
    """Forward pass of the whole pipeline, kept for the reverse pass."""

    def __init__(self, model: MdnModel, ts: TrainingSet):
        self.model, self.ts = model, ts
        self.raw, self.acts = network_forward(model, ts.X)
        self.params = params = transform_heads(model.kind, model.K, self.raw)
        w = np.ascontiguousarray(params["weights"])
        if model.kind is Kind.MOBIUS:
            g, b = params["gamma"], params["beta"]
            self.log_c = _log_norm_const(g, b)
            with np.errstate(over="ignore"):
                self.part, self.comp, self.cache = _kernels.mobius_forward(
                    self.log_c, g, b, params["a"], params["mu"], w, *ts.disk_points, BRACKET_FLOOR)
            truth = ts.truth_inside  # outside the disk both fields are exactly 0
        else:
            with np.errstate(over="ignore"):
                self.part, self.comp = _kernels.gaussian_forward(
                    params["mean_x"], params["mean_y"], params["sigma_x"], params["sigma_y"], params["rho"], w, ts.x, ts.y)
            truth = ts.truth
        n_items = truth.shape[0]
        self.resid = self.part[ts.item_scenario] - truth if not ts.one_per_scenario else self.part - truth
        with np.errstate(over="ignore", invalid="ignore"):
            r2 = self.resid * self.resid
            self.loss = float(np.sum(r2 * r2) / (n_items * ts.grid.size))

    @property
    def fhat(self) -> np.ndarray:
        """Model density on the full grid, one row per unique scenario."""
        if self.model.kind is Kind.GAUSSIAN:
            return self.part
        out = np.zeros((len(self.ts.scenarios), self.ts.grid.size))
        out[:, self.ts.inside] = self.part
        return out

    def gradient(self) -> list[np.ndarray]:
        model, ts, params = self.model, self.ts, self.params
        n_items = len(ts)
        g_items = (4.0 / (n_items * ts.grid.size)) * self.resid * self.resid * self.resid
        if ts.one_per_scenario:
            grad_f = g_items
        else:
            grad_f = np.zeros_like(self.part)
            for i, u in enumerate(ts.item_scenario):  # fixed accumulation order
                grad_f[u] += g_items[i]
        w = np.ascontiguousarray(params["weights"])
        if model.kind is Kind.MOBIUS:
            g, b = params["gamma"], params["beta"]
            psi_gb = digamma(g + b)
            dlogc_dg = psi_gb - digamma(g)
            dlogc_db = math.log(2.0) + psi_gb - digamma(b)
            d = _kernels.mobius_backward(grad_f, dlogc_dg, dlogc_db, g, b, params["a"], params["mu"], w,
                                         *ts.disk_points, self.comp, self.cache, BRACKET_FLOOR)
            names = ("weights", "gamma", "beta", "a", "mu")
        else:
            d = _kernels.gaussian_backward(grad_f, params["mean_x"], params["mean_y"], params["sigma_x"],
                                           params["sigma_y"], params["rho"], w, ts.x, ts.y, self.comp)
            names = ("weights", "mean_x", "mean_y", "sigma_x", "sigma_y", "rho")
        d_params = dict(zip(names, d))
        d_raw = transform_heads_backward(model.kind, model.K, self.raw, params, d_params)
        return network_backward(model, self.acts, d_raw)


def quartic_loss(model: MdnModel, ts: TrainingSet) -> float:
    """Mean over items and grid points of (model density - truth)^4."""
    return _Evaluation(model, ts).loss


def loss_and_gradient(model: MdnModel, ts: TrainingSet):
    """Quartic loss and its gradient with respect to every trainable array,
    in :meth:`MdnModel.parameters` order."""
    ev = _Evaluation(model, ts)
    return ev.loss, ev.gradient()


def loss_gradient(model: MdnModel, ts: TrainingSet) -> list[np.ndarray]:
    return loss_and_gradient(model, ts)[1]


def loss_and_gradient_reference(model: MdnModel, ts: TrainingSet):
    """Same quantity as :func:`loss_and_gradient`, computed with broadcast
    numpy expressions from :mod:`mobidens.densities`. Slow; for cross-checks."""
    raw, acts = network_forward(model, ts.X)
    params = transform_heads(model.kind, model.K, raw)
    if model.kind is Kind.MOBIUS:
        x, y = ts.x[ts.inside], ts.y[ts.inside]
        p = [params[k][:, :, None] for k in ("gamma", "beta", "a", "mu")]
        terms = _mobius_terms(*p, x[None, None, :], y[None, None, :], (x * x + y * y)[None, None, :])
    else:
        p = [params[k][:, :, None] for k in ("mean_x", "mean_y", "sigma_x", "sigma_y", "rho")]
        terms = gaussian_logpdf_partials(*p, ts.x[None, None, :], ts.y[None, None, :])
    comp = np.exp(terms[0])
    part = np.einsum("uk,ukp->up", params["weights"], comp)
    if model.kind is Kind.MOBIUS:
        fhat = np.zeros((len(ts.scenarios), ts.grid.size))
        fhat[:, ts.inside] = part
    else:
        fhat = part
    resid = fhat[ts.item_scenario] - ts.truth
    loss = float(np.mean(resid ** 4))
    g = np.zeros_like(fhat)
    np.add.at(g, ts.item_scenario, 4.0 * resid ** 3 / resid.size)
    if model.kind is Kind.MOBIUS:
        g = g[:, ts.inside]
    d_params = {"weights": np.einsum("up,ukp->uk", g, comp)}
    d_log = g[:, None, :] * params["weights"][:, :, None] * comp
    names = ("gamma", "beta", "a", "mu") if model.kind is Kind.MOBIUS else ("mean_x", "mean_y", "sigma_x", "sigma_y", "rho")
    for name, partial in zip(names, terms[1:]):
        d_params[name] = np.sum(d_log * partial, axis=2)
    d_raw = transform_heads_backward(model.kind, model.K, raw, params, d_params)
    return loss, network_backward(model, acts, d_raw)


def _diagnose(model: MdnModel, grads) -> str:
    names = parameter_block_names(model)
    for name, arr in zip(names, model.parameters()):
        if not np.all(np.isfinite(arr)):
            return name
    if grads is not None:
        for name, arr in zip(names, grads):
            if not np.all(np.isfinite(arr)):
                return f"{name} (gradient)"
    return "output head (mixture density overflow)"


def train(model: MdnModel, ts: TrainingSet, cfg: TrainConfig | None = None, progress_every: int = 0,
          callback=None):
    """Full-batch Adam until the loss change stays below ``stop_delta`` for
    ``stop_patience_epochs`` consecutive epochs, or ``max_epochs`` is hit.

    ``loss_history[e]`` is the loss after the update of epoch ``e + 1``; the
    first delta is taken against the loss of the initial model.
    ``callback(epoch, model, loss)`` is called after every epoch if given.
    """
    cfg = cfg or TrainConfig()
    t0 = time.perf_counter()
    params = [p.copy() for p in model.parameters()]
    current = model.with_parameters(params)
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, lr, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.learning_rate, cfg.adam_epsilon

    with np.errstate(invalid="ignore", over="ignore"):
        loss, grads = loss_and_gradient(current, ts)
    if not math.isfinite(loss):
        raise TrainingDiverged(0, _diagnose(current, grads), loss)
    initial = prev = loss
    history = []
    streak = 0
    converged = False
    for epoch in range(1, cfg.max_epochs + 1):
        c1 = 1.0 - b1 ** epoch
        c2 = 1.0 - b2 ** epoch
        for p, gr, mi, vi in zip(params, grads, m, v):
            mi *= b1
            mi += (1.0 - b1) * gr
            vi *= b2
            vi += (1.0 - b2) * gr * gr
            p -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
        for name, p in zip(parameter_block_names(model), params):
            if not np.all(np.isfinite(p)):
                raise TrainingDiverged(epoch, name, math.nan)
        current = model.with_parameters(params)
        with np.errstate(invalid="ignore", over="ignore"):
            loss, grads = loss_and_gradient(current, ts)
        if not (math.isfinite(loss) and all(np.all(np.isfinite(gr)) for gr in grads)):
            raise TrainingDiverged(epoch, _diagnose(current, grads), loss)
        history.append(loss)
        streak = streak + 1 if abs(loss - prev) < cfg.stop_delta else 0
        prev = loss
        if progress_every and epoch % progress_every == 0:
            log.info("epoch %d loss %.6g", epoch, loss)
        if callback is not None:
            callback(epoch, current, loss)
        if streak >= cfg.stop_patience_epochs:
            converged = True
            break
    trained = model.with_parameters(params)
    trained.meta.update({"train_seed": cfg.seed, "epochs": len(history), "final_loss": history[-1]})
    report = TrainReport(len(history), history[-1], history, converged, initial, time.perf_counter() - t0, asdict(cfg))
    return trained, report
