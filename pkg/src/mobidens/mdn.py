"""Feedforward mixture density network: scenario 4-vector -> mixture parameters.

Architecture: 4 -> 8K -> 8K -> H with tanh hidden units, where the head
width H is 5K for Mobius mixtures and 6K for Gaussian ones. Raw head
outputs are laid out in contiguous blocks of K columns:

    mobius:   logits | gamma | beta | a | mu
    gaussian: logits | mean_x | mean_y | sigma_x | sigma_y | rho
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .densities import GaussianParams, MobiusParams
from .mixture import Kind, MixtureModel, softmax
from .scenario import REFERENCE_SCENARIOS, Scenario

FORMAT_VERSION = 1
ACTIVATION = "tanh"
N_INPUTS = 4

GAMMA_FLOOR = 0.01
BETA_FLOOR = 0.01
SIGMA_FLOOR = 0.001
A_CAP = 0.999
RHO_CAP = 0.999

HEAD_BLOCKS = {
    Kind.MOBIUS: ("logits", "gamma", "beta", "a", "mu"),
    Kind.GAUSSIAN: ("logits", "mean_x", "mean_y", "sigma_x", "sigma_y", "rho"),
}

TRANSFORMS = {
    Kind.MOBIUS: {
        "weights": "softmax(logits)",
        "gamma": f"softplus(o) + {GAMMA_FLOOR}",
        "beta": f"softplus(o) + {BETA_FLOOR}",
        "a": f"{A_CAP} * logistic(o)",
        "mu": "pi * tanh(o)",
    },
    Kind.GAUSSIAN: {
        "weights": "softmax(logits)",
        "mean_x": "o",
        "mean_y": "o",
        "sigma_x": f"softplus(o) + {SIGMA_FLOOR}",
        "sigma_y": f"softplus(o) + {SIGMA_FLOOR}",
        "rho": f"{RHO_CAP} * tanh(o)",
    },
}


class ModelFormatError(ValueError):
    pass


def head_width(kind, K: int) -> int:
    return len(HEAD_BLOCKS[Kind.parse(kind)]) * K


def layer_shapes(kind, K: int) -> list[tuple[int, int]]:
    hidden = 8 * K
    return [(N_INPUTS, hidden), (hidden, hidden), (hidden, head_width(kind, K))]


def count_parameters(kind, K: int) -> int:
    return sum(rows * cols + cols for rows, cols in layer_shapes(kind, K))


@dataclass
class MdnModel:
    kind: Kind
    K: int
    weights: list  # (fan_in, fan_out) arrays
    biases: list
    seed: int | None = None
    activation: str = ACTIVATION
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = Kind.parse(self.kind)
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        shapes = layer_shapes(self.kind, self.K)
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError(f"expected {len(shapes)} layers")
        for i, (shape, w, b) in enumerate(zip(shapes, self.weights, self.biases)):
            if w.shape != shape:
                raise ValueError(f"layer {i}: weight shape {w.shape}, expected {shape}")
            if b.shape != (shape[1],):
                raise ValueError(f"layer {i}: {b.size} biases, expected {shape[1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order: W0, b0, W1, b1, W2, b2."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_parameters(self, arrays) -> "MdnModel":
        arrays = list(arrays)
        return MdnModel(self.kind, self.K, arrays[0::2], arrays[1::2], self.seed, self.activation, dict(self.meta))

    def copy(self) -> "MdnModel":
        return self.with_parameters([p.copy() for p in self.parameters()])


def parameter_block_names(model: MdnModel) -> list[str]:
    names = []
    for i in range(len(model.weights)):
        names += [f"layer {i} weights", f"layer {i} biases"]
    return names


def init_model(kind, K: int, seed: int) -> MdnModel:
    """Glorot-uniform weights and zero biases, drawn deterministically from ``seed``."""
    kind = Kind.parse(kind)
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in layer_shapes(kind, K):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MdnModel(kind, K, weights, biases, seed)


def scenario_matrix(scenarios) -> np.ndarray:
    return np.array([s.as_vector() for s in scenarios], dtype=float).reshape(-1, N_INPUTS)


def network_forward(model: MdnModel, X: np.ndarray):
    """Raw head outputs for inputs ``X`` of shape (n, 4), plus the activations
    needed by :func:`network_backward`."""
    acts = [X]
    h = X
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = z if i == last else np.tanh(z)
        acts.append(h)
    return h, acts


def network_backward(model: MdnModel, acts, d_out: np.ndarray) -> list[np.ndarray]:
    """Gradients (same order as :meth:`MdnModel.parameters`) given dL/d(raw outputs)."""
    grads = [None] * (2 * len(model.weights))
    delta = d_out
    for i in range(len(model.weights) - 1, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (1.0 - acts[i] ** 2)
    return grads


def _softplus(o):
    return np.logaddexp(0.0, o)


def _logistic(o):
    return 0.5 * (1.0 + np.tanh(0.5 * o))


def transform_heads(kind, K: int, raw: np.ndarray) -> dict[str, np.ndarray]:
    """Map raw outputs of shape (n, H) to constrained parameter arrays of shape (n, K)."""
    kind = Kind.parse(kind)
    blocks = {name: raw[:, j * K:(j + 1) * K] for j, name in enumerate(HEAD_BLOCKS[kind])}
    out = {"weights": softmax(blocks["logits"])}
    if kind is Kind.MOBIUS:
        out["gamma"] = _softplus(blocks["gamma"]) + GAMMA_FLOOR
        out["beta"] = _softplus(blocks["beta"]) + BETA_FLOOR
        out["a"] = A_CAP * _logistic(blocks["a"])
        out["mu"] = np.pi * np.tanh(blocks["mu"])
    else:
        out["mean_x"] = blocks["mean_x"].copy()
        out["mean_y"] = blocks["mean_y"].copy()
        out["sigma_x"] = _softplus(blocks["sigma_x"]) + SIGMA_FLOOR
        out["sigma_y"] = _softplus(blocks["sigma_y"]) + SIGMA_FLOOR
        out["rho"] = RHO_CAP * np.tanh(blocks["rho"])
    return out


def transform_heads_backward(kind, K: int, raw: np.ndarray, params: dict, d_params: dict) -> np.ndarray:
    """Chain dL/d(params) back through the head transforms to dL/d(raw)."""
    kind = Kind.parse(kind)
    names = HEAD_BLOCKS[kind]
    blocks = {name: raw[:, j * K:(j + 1) * K] for j, name in enumerate(names)}
    d_raw = np.zeros_like(raw)

    def put(name, value):
        j = names.index(name)
        d_raw[:, j * K:(j + 1) * K] = value

    w, dw = params["weights"], d_params["weights"]
    put("logits", w * (dw - (w * dw).sum(axis=1, keepdims=True)))
    if kind is Kind.MOBIUS:
        put("gamma", d_params["gamma"] * _logistic(blocks["gamma"]))
        put("beta", d_params["beta"] * _logistic(blocks["beta"]))
        sig = _logistic(blocks["a"])
        put("a", d_params["a"] * A_CAP * sig * (1.0 - sig))
        put("mu", d_params["mu"] * np.pi * (1.0 - np.tanh(blocks["mu"]) ** 2))
    else:
        put("mean_x", d_params["mean_x"])
        put("mean_y", d_params["mean_y"])
        put("sigma_x", d_params["sigma_x"] * _logistic(blocks["sigma_x"]))
        put("sigma_y", d_params["sigma_y"] * _logistic(blocks["sigma_y"]))
        put("rho", d_params["rho"] * RHO_CAP * (1.0 - np.tanh(blocks["rho"]) ** 2))
    return d_raw


def mixtures_from_params(kind, params: dict) -> list[MixtureModel]:
    kind = Kind.parse(kind)
    out = []
    for i in range(params["weights"].shape[0]):
        w = params["weights"][i]
        w = w / math.fsum(w)
        if kind is Kind.MOBIUS:
            comps = [
                # tanh saturating to exactly -1 gives mu = -pi, the same orientation as pi
                MobiusParams(float(g), float(b), float(a), float(m) if m > -np.pi else float(np.pi))
                for g, b, a, m in zip(params["gamma"][i], params["beta"][i], params["a"][i], params["mu"][i])
            ]
        else:
            comps = [
                GaussianParams(*map(float, vals))
                for vals in zip(params["mean_x"][i], params["mean_y"][i], params["sigma_x"][i], params["sigma_y"][i], params["rho"][i])
            ]
        out.append(MixtureModel(kind, comps, w))
    return out


def forward_params(model: MdnModel, scenarios) -> dict[str, np.ndarray]:
    raw, _ = network_forward(model, scenario_matrix(scenarios))
    return transform_heads(model.kind, model.K, raw)


def forward(model: MdnModel, s: Scenario) -> MixtureModel:
    return forward_batch(model, [s])[0]


def forward_batch(model: MdnModel, scenarios) -> list[MixtureModel]:
    return mixtures_from_params(model.kind, forward_params(model, scenarios))


# -- persistence ---------------------------------------------------------------

def _num_list(values) -> str:
    return "[" + ", ".join(f"{float(v):.17g}" for v in np.ravel(values)) + "]"


def save_model(model: MdnModel, path) -> None:
    layers = []
    for w, b in zip(model.weights, model.biases):
        layers.append(
            '    {"rows": %d, "cols": %d,\n     "weights": %s,\n     "biases": %s}'
            % (w.shape[0], w.shape[1], _num_list(w), _num_list(b))
        )
    header = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind.value,
        "K": model.K,
        "seed": model.seed,
        "activation": model.activation,
        "transforms": TRANSFORMS[model.kind],
        "meta": model.meta,
    }
    head = json.dumps(header, indent=2)[:-2]  # reopen the object to append layers
    text = head + ',\n  "layers": [\n' + ",\n".join(layers) + "\n  ]\n}\n"
    Path(path).write_text(text)


def _require(doc, key, types, where="model file"):
    if key not in doc:
        raise ModelFormatError(f"{where}: missing field '{key}'")
    value = doc[key]
    if not isinstance(value, types) or (isinstance(value, bool) and types is int):
        raise ModelFormatError(f"{where}: field '{key}' has invalid type {type(value).__name__}")
    return value


def load_model(path) -> MdnModel:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a complete model document ({exc})") from None
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: top level must be an object")
    version = _require(doc, "format_version", int)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format_version {version}")
    try:
        kind = Kind.parse(_require(doc, "kind", str))
    except ValueError as exc:
        raise ModelFormatError(f"{path}: field 'kind': {exc}") from None
    K = _require(doc, "K", int)
    if K < 1:
        raise ModelFormatError(f"{path}: field 'K' must be >= 1, got {K}")
    seed = doc.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ModelFormatError(f"{path}: field 'seed' must be an integer or null")
    activation = _require(doc, "activation", str)
    if activation != ACTIVATION:
        raise ModelFormatError(f"{path}: field 'activation': unsupported activation {activation!r}")
    layers = _require(doc, "layers", list)
    shapes = layer_shapes(kind, K)
    if len(layers) != len(shapes):
        raise ModelFormatError(f"{path}: field 'layers' has {len(layers)} entries, expected {len(shapes)}")
    weights, biases = [], []
    for i, (layer, (rows, cols)) in enumerate(zip(layers, shapes)):
        where = f"{path}: layers[{i}]"
        if not isinstance(layer, dict):
            raise ModelFormatError(f"{where}: must be an object")
        r = _require(layer, "rows", int, where)
        c = _require(layer, "cols", int, where)
        if (r, c) != (rows, cols):
            raise ModelFormatError(f"{where}: dimension mismatch, shape ({r}, {c}) but {kind.value} K={K} expects ({rows}, {cols})")
        w = _require(layer, "weights", list, where)
        b = _require(layer, "biases", list, where)
        if len(w) != rows * cols:
            raise ModelFormatError(f"{where}: dimension mismatch, {len(w)} weights, expected {rows * cols}")
        if len(b) != cols:
            raise ModelFormatError(f"{where}: dimension mismatch, {len(b)} biases, expected {cols}")
        try:
            w_arr = np.array(w, dtype=float).reshape(rows, cols)
            b_arr = np.array(b, dtype=float)
        except (TypeError, ValueError):
            raise ModelFormatError(f"{where}: non-numeric entries in 'weights' or 'biases'") from None
        if not (np.all(np.isfinite(w_arr)) and np.all(np.isfinite(b_arr))):
            raise ModelFormatError(f"{where}: non-finite entries")
        weights.append(w_arr)
        biases.append(b_arr)
    meta = doc.get("meta") or {}
    return MdnModel(kind, K, weights, biases, seed, activation, dict(meta))


__all__ = [
    "MdnModel", "ModelFormatError", "REFERENCE_SCENARIOS", "Scenario", "count_parameters", "forward",
    "forward_batch", "init_model", "load_model", "save_model",
]
