"""Small fully connected networks over a flat float64 parameter vector.

Parameters live in one contiguous array whose layout is derived from the
MlpSpec, so gradient vectors, optimizer moments, and checkpoints all share
the same indexing. Hidden activations are tanh (smooth, which keeps
finite-difference audits tight); outputs are linear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import NumericalError, Tape, Var, backward, linear, tanh

_ACTIVATIONS = ("tanh",)


@dataclass(frozen=True)
class MlpSpec:
    in_dim: int
    hidden: tuple[int, ...]
    out_dim: int
    activation: str = "tanh"

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0 or any(h <= 0 for h in self.hidden):
            raise ValueError("layer widths must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer."""
        dims = [self.in_dim, *self.hidden, self.out_dim]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def layout(self) -> list[tuple[str, tuple[int, ...], int]]:
        """(name, shape, flat offset) records; weights then bias per layer."""
        records = []
        off = 0
        for i, (fi, fo) in enumerate(self.layer_dims):
            records.append((f"layer{i}.w", (fo, fi), off))
            off += fo * fi
            records.append((f"layer{i}.b", (fo,), off))
            off += fo
        return records

    @property
    def param_count(self) -> int:
        return sum(fo * fi + fo for fi, fo in self.layer_dims)

    def to_dict(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "hidden": list(self.hidden),
            "out_dim": self.out_dim,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(d["in_dim"], tuple(d["hidden"]), d["out_dim"], d["activation"])


class ParamVector:
    """Flat float64 parameter vector tied to an MlpSpec layout."""

    __slots__ = ("values", "spec")

    def __init__(self, values: np.ndarray, spec: MlpSpec):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim != 1 or values.size != spec.param_count:
            raise ValueError(
                f"expected {spec.param_count} parameters, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise NumericalError("non-finite parameter values")
        self.values = values
        self.spec = spec

    def views(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(w, b) array views per layer, sharing memory with `values`."""
        out = []
        recs = self.spec.layout()
        for i in range(0, len(recs), 2):
            _, wshape, woff = recs[i]
            _, bshape, boff = recs[i + 1]
            w = self.values[woff:woff + wshape[0] * wshape[1]].reshape(wshape)
            b = self.values[boff:boff + bshape[0]]
            out.append((w, b))
        return out

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.spec)


def init_params(spec: MlpSpec, rng: np.random.Generator) -> ParamVector:
    """Uniform fan-in scaled init, the usual dense-layer default."""
    chunks = []
    for fi, fo in spec.layer_dims:
        bound = 1.0 / np.sqrt(fi)
        chunks.append(rng.uniform(-bound, bound, size=fo * fi))
        chunks.append(rng.uniform(-bound, bound, size=fo))
    return ParamVector(np.concatenate(chunks), spec)


def zero_output_head(params: ParamVector) -> ParamVector:
    """Zero the last layer so the network is exactly the zero function."""
    out = params.copy()
    (w, b) = out.views()[-1]
    w[:] = 0.0
    b[:] = 0.0
    return out


def mlp_forward(params: ParamVector, x: np.ndarray) -> np.ndarray:
    """Plain numpy forward pass; accepts (in,) or (batch, in)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.spec.in_dim:
        raise ValueError(
            f"input width {h.shape[1]} != spec.in_dim {params.spec.in_dim}"
        )
    layers = params.views()
    for w, b in layers[:-1]:
        h = np.tanh(h @ w.T + b)
    w, b = layers[-1]
    h = h @ w.T + b
    return h[0] if single else h


def leaf_views(tape: Tape, params: ParamVector) -> list[tuple[Var, Var]]:
    """Wrap each layer's (w, b) views as tape leaves."""
    return [(tape.var(w), tape.var(b)) for w, b in params.views()]


def mlp_apply(leaves: list[tuple[Var, Var]], x: Var) -> Var:
    """Tape forward pass through leaves produced by leaf_views."""
    h = x
    for w, b in leaves[:-1]:
        h = tanh(linear(h, w, b))
    w, b = leaves[-1]
    return linear(h, w, b)


def _flatten_layer_grads(grads: list[np.ndarray], spec: MlpSpec) -> np.ndarray:
    flat = np.concatenate([g.ravel() for g in grads])
    if flat.size != spec.param_count:
        raise ValueError("gradient length mismatch")
    if not np.all(np.isfinite(flat)):
        recs = spec.layout()
        for (name, shape, off) in recs:
            n = int(np.prod(shape))
            if not np.all(np.isfinite(flat[off:off + n])):
                raise NumericalError(f"non-finite gradient in {name}")
    return flat


def grad_scalar(loss_fn, params: ParamVector) -> np.ndarray:
    """Exact reverse-mode gradient of a scalar loss of the parameters.

    loss_fn(tape, leaves) must build a scalar Var from the (w, b) leaf
    pairs. Returns a flat gradient aligned with the ParamVector layout.
    """
    tape = Tape()
    leaves = leaf_views(tape, params)
    out = loss_fn(tape, leaves)
    flat_leaves = [v for pair in leaves for v in pair]
    grads = backward(out, flat_leaves)
    return _flatten_layer_grads(grads, params.spec)


def loss_value(loss_fn, params: ParamVector) -> float:
    tape = Tape()
    out = loss_fn(tape, leaf_views(tape, params))
    return float(out.value)


def finite_diff_check(
    loss_fn,
    params: ParamVector,
    epsilon: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative disagreement between reverse-mode and central differences.

    Checks every coordinate, or a random subset of max_coords for large nets.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    analytic = grad_scalar(loss_fn, params)
    n = params.spec.param_count
    coords = np.arange(n)
    if max_coords is not None and max_coords < n:
        if rng is None:
            rng = np.random.default_rng(0)
        coords = rng.choice(n, size=max_coords, replace=False)
    worst = 0.0
    work = params.copy()
    for i in coords:
        orig = work.values[i]
        work.values[i] = orig + epsilon
        f_plus = loss_value(loss_fn, work)
        work.values[i] = orig - epsilon
        f_minus = loss_value(loss_fn, work)
        work.values[i] = orig
        fd = (f_plus - f_minus) / (2.0 * epsilon)
        denom = max(abs(fd), abs(analytic[i]), 1e-6)
        worst = max(worst, abs(analytic[i] - fd) / denom)
    return worst
