"""Dense float64 matrix primitives, a named parameter store, and a
finite-difference gradient checker.

All arithmetic is double precision. Matrices are 2-D row-major
``numpy.ndarray``s; vectors are 1-D. Outputs of the public operations
here are guaranteed free of NaN/Inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError

__all__ = [
    "matmul",
    "activation",
    "sigmoid",
    "tanh",
    "softmax",
    "glorot_uniform",
    "ParamStore",
    "GradCheckReport",
    "finite_diff_check",
]


def _ensure_finite(out: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NumericError(f"{op} produced non-finite entries")
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-D arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _ensure_finite(a @ b, "matmul")


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh}


def activation(x: np.ndarray, kind: str) -> np.ndarray:
    """Elementwise sigmoid or tanh."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}, expected one of {sorted(_ACTIVATIONS)}")
    return _ensure_finite(fn(x), f"activation[{kind}]")


def softmax(v: np.ndarray) -> np.ndarray:
    """Max-shifted softmax of a 1-D vector; output sums to 1."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"softmax expects a nonempty 1-D vector, got shape {v.shape}")
    e = np.exp(v - v.max())
    return _ensure_finite(e / e.sum(), "softmax")


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator,
                   shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Uniform init in [-s, s] with s = sqrt(6 / (fan_in + fan_out))."""
    s = math.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-s, s, size=shape)


@dataclass
class _Entry:
    value: np.ndarray
    grad: np.ndarray
    trainable: bool


class ParamStore:
    """Named (value, grad) array pairs.

    Arrays are registered once and mutated in place afterwards, so any
    views handed out at registration stay live across SGD updates.
    Non-trainable entries (e.g. batch-norm running statistics) are
    checkpointed but skipped by the optimizer and the gradient checker.
    """

    def __init__(self):
        self._entries: dict[str, _Entry] = {}

    def register(self, name: str, value: np.ndarray,
                 trainable: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Add an entry and return its (value, grad) arrays."""
        if name in self._entries:
            raise ValueError(f"parameter {name!r} already registered")
        value = np.ascontiguousarray(value, dtype=np.float64)
        grad = np.zeros_like(value)
        self._entries[name] = _Entry(value, grad, trainable)
        return value, grad

    def names(self, trainable_only: bool = False) -> list[str]:
        if trainable_only:
            return [n for n, e in self._entries.items() if e.trainable]
        return list(self._entries)

    def value(self, name: str) -> np.ndarray:
        return self._entries[name].value

    def grad(self, name: str) -> np.ndarray:
        return self._entries[name].grad

    def is_trainable(self, name: str) -> bool:
        return self._entries[name].trainable

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def zero_grads(self) -> None:
        for e in self._entries.values():
            e.grad.fill(0.0)

    def num_values(self) -> int:
        return sum(e.value.size for e in self._entries.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        """Deep copy of all values (for best-checkpoint retention)."""
        return {n: e.value.copy() for n, e in self._entries.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for n, v in snap.items():
            e = self._entries[n]
            if e.value.shape != v.shape:
                raise DimensionError(f"snapshot shape {v.shape} != {e.value.shape} for {n!r}")
            e.value[...] = v

    # -- text checkpoint -------------------------------------------------
    # Line format (documented in the README):
    #   fraudseq-params v1
    #   <name> <trainable:0|1> <ndim> <dim0> [dim1]
    #   <%.17g values, one line per row>
    # %.17g round-trips float64 exactly, so save -> load -> save is
    # byte-identical.

    def save_text(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("fraudseq-params v1\n")
            for name, e in self._entries.items():
                dims = " ".join(str(d) for d in e.value.shape)
                fh.write(f"{name} {int(e.trainable)} {e.value.ndim} {dims}\n")
                rows = e.value.reshape(1, -1) if e.value.ndim == 1 else e.value
                for row in rows:
                    fh.write(" ".join("%.17g" % x for x in row))
                    fh.write("\n")

    @classmethod
    def load_text(cls, path) -> "ParamStore":
        store = cls()
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "fraudseq-params v1":
                raise ValueError(f"unrecognized checkpoint header {header!r}")
            for line in fh:
                parts = line.split()
                name, trainable, ndim = parts[0], bool(int(parts[1])), int(parts[2])
                shape = tuple(int(d) for d in parts[3:3 + ndim])
                nrows = 1 if ndim == 1 else shape[0]
                rows = [np.array(fh.readline().split(), dtype=np.float64)
                        for _ in range(nrows)]
                value = np.vstack(rows).reshape(shape)
                store.register(name, value, trainable=trainable)
        return store

    def load_values_from(self, other: "ParamStore") -> None:
        """Copy values of identically named entries from another store."""
        for name in self.names():
            if name not in other:
                raise ValueError(f"checkpoint is missing parameter {name!r}")
            src = other.value(name)
            dst = self._entries[name].value
            if src.shape != dst.shape:
                raise DimensionError(f"checkpoint shape {src.shape} != {dst.shape} for {name!r}")
            dst[...] = src


@dataclass
class GradCheckReport:
    tol: float
    eps: float
    max_rel_err: dict[str, float] = field(default_factory=dict)
    worst_param: str = ""
    worst_err: float = 0.0

    @property
    def passed(self) -> bool:
        return self.worst_err < self.tol

    def format_lines(self) -> list[str]:
        lines = [f"{n}: max_rel_err={e:.3e}" for n, e in sorted(self.max_rel_err.items())]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"worst: {self.worst_param} ({self.worst_err:.3e})  tol={self.tol:g}  [{verdict}]")
        return lines


def finite_diff_check(loss_fn, store: ParamStore, eps: float = 1e-4, tol: float = 1e-4,
                      max_coords_per_param: int | None = None,
                      rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn()`` must be deterministic, return a scalar loss, and leave
    the gradient of every trainable entry of ``store`` populated. For
    each checked coordinate the relative error is
    ``|a - n| / max(|a|, |n|, 1e-8)``; the report carries the max per
    parameter. ``max_coords_per_param`` caps the number of coordinates
    checked per parameter (deterministic subsample) for large tables.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    store.zero_grads()
    loss0 = float(loss_fn())
    analytic = {n: store.grad(n).copy() for n in store.names(trainable_only=True)}
    store.zero_grads()
    loss1 = float(loss_fn())
    if loss0 != loss1:
        raise NumericError(f"loss_fn is not deterministic: {loss0!r} != {loss1!r}")

    if rng is None:
        rng = np.random.default_rng(0)
    report = GradCheckReport(tol=tol, eps=eps)
    for name in store.names(trainable_only=True):
        value = store.value(name)
        flat = value.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_param is not None and flat.size > max_coords_per_param:
            coords = np.sort(rng.choice(flat.size, size=max_coords_per_param, replace=False))
        worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            lp = float(loss_fn())
            flat[c] = orig - eps
            lm = float(loss_fn())
            flat[c] = orig
            numeric = (lp - lm) / (2.0 * eps)
            a = analytic[name].reshape(-1)[c]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
        report.max_rel_err[name] = worst
        if worst >= report.worst_err:
            report.worst_err = worst
            report.worst_param = name
    # restore the analytic grads so callers can inspect them afterwards
    store.zero_grads()
    loss_fn()
    return report
