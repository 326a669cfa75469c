"""Interval discretization, time-embedding lookup, and attention pooling.

Pooling collapses per-timestep hidden states H (n x k') into one
sequence embedding h_hat = sum_i alpha_i * h_i. Time attention scores
each row by both its hidden state and an embedding of the discretized
inter-event interval; self attention drops the interval term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError
from .numeric import ParamStore, glorot_uniform, softmax

__all__ = [
    "bucketize",
    "bucketize_array",
    "deltas",
    "TimeEmbeddingTable",
    "time_embed",
    "AttentionParams",
    "time_attention_pool",
    "self_attention_pool",
    "attention_pool_backward",
]

SECONDS_PER_BUCKET = 60.0
DEFAULT_NUM_BUCKETS = 1441  # 0..1440 minutes, out-of-range clamps to the last


def bucketize(tau_seconds: float, num_buckets: int = DEFAULT_NUM_BUCKETS) -> int:
    """Map a nonnegative duration in seconds to a minute bucket,
    clamped to num_buckets - 1."""
    if tau_seconds < 0:
        raise ValueError(f"duration must be >= 0, got {tau_seconds}")
    return min(int(tau_seconds // SECONDS_PER_BUCKET), num_buckets - 1)


def bucketize_array(tau_seconds: np.ndarray, num_buckets: int = DEFAULT_NUM_BUCKETS) -> np.ndarray:
    tau_seconds = np.asarray(tau_seconds, dtype=np.float64)
    if np.any(tau_seconds < 0):
        raise ValueError("durations must be >= 0")
    return np.minimum((tau_seconds // SECONDS_PER_BUCKET).astype(np.int64), num_buckets - 1)


def deltas(timestamps) -> np.ndarray:
    """Inter-arrival times of a nondecreasing timestamp list; the first
    interval is 0 by convention. Length is preserved."""
    ts = np.asarray(timestamps, dtype=np.float64)
    if ts.ndim != 1 or ts.size == 0:
        raise ValueError(f"timestamps must be a nonempty 1-D sequence, got shape {ts.shape}")
    d = np.diff(ts)
    if np.any(d < 0):
        bad = int(np.argmax(d < 0)) + 1
        raise DataError(f"timestamps decrease at position {bad}")
    return np.concatenate([[0.0], d])


@dataclass
class TimeEmbeddingTable:
    """Embedding rows for minute buckets; out-of-range lookups clamp to
    the last row."""
    table: np.ndarray

    @property
    def num_buckets(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    @classmethod
    def create(cls, num_buckets: int, g: int, rng: np.random.Generator) -> "TimeEmbeddingTable":
        return cls(table=rng.uniform(-0.05, 0.05, size=(num_buckets, g)))

    def register(self, store: ParamStore, name: str) -> np.ndarray:
        """Register in the store; returns the grad array."""
        _, grad = store.register(name, self.table)
        return grad


def time_embed(buckets, table: TimeEmbeddingTable) -> np.ndarray:
    """Rows of the table for each bucket (clamped), stacked (n, g)."""
    idx = np.clip(np.asarray(buckets, dtype=np.int64), 0, table.num_buckets - 1)
    return table.table[idx]


@dataclass
class AttentionParams:
    """Projection weights: scores are w_s . tanh(W_e h_i + W_t rho_i).
    W_t is None for the self-attention variant (no interval term)."""
    W_e: np.ndarray
    W_t: np.ndarray | None
    w_s: np.ndarray

    @property
    def width(self) -> int:
        return self.w_s.size

    @classmethod
    def create(cls, k_prime: int, g: int | None, m: int,
               rng: np.random.Generator) -> "AttentionParams":
        return cls(
            W_e=glorot_uniform(m, k_prime, rng, shape=(m, k_prime)),
            W_t=None if g is None else glorot_uniform(m, g, rng, shape=(m, g)),
            w_s=glorot_uniform(m, 1, rng, shape=(m,)),
        )

    def register(self, store: ParamStore, prefix: str) -> "AttentionParams":
        _, gWe = store.register(f"{prefix}.W_e", self.W_e)
        gWt = None
        if self.W_t is not None:
            _, gWt = store.register(f"{prefix}.W_t", self.W_t)
        _, gws = store.register(f"{prefix}.w_s", self.w_s)
        return AttentionParams(W_e=gWe, W_t=gWt, w_s=gws)


def _pool(H: np.ndarray, P: np.ndarray | None, a: AttentionParams):
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] == 0:
        raise ValueError(f"H must be a nonempty (n, k') matrix, got shape {H.shape}")
    if H.shape[1] != a.W_e.shape[1]:
        raise DimensionError(f"H width {H.shape[1]} != W_e width {a.W_e.shape[1]}")
    U = H @ a.W_e.T
    if P is not None:
        P = np.asarray(P, dtype=np.float64)
        if P.shape[0] != H.shape[0]:
            raise DimensionError(f"H has {H.shape[0]} rows but P has {P.shape[0]}")
        U = U + P @ a.W_t.T
    Z = np.tanh(U)
    eps = Z @ a.w_s
    alpha = softmax(eps)
    hhat = alpha @ H
    cache = {"H": H, "P": P, "Z": Z, "alpha": alpha}
    return hhat, alpha, cache


def time_attention_pool(H: np.ndarray, P: np.ndarray, a: AttentionParams,
                        return_cache: bool = False):
    """Interval-aware pooling: (hhat, alpha) with alpha on the simplex."""
    if a.W_t is None:
        raise ValueError("time_attention_pool needs W_t; use self_attention_pool instead")
    hhat, alpha, cache = _pool(H, P, a)
    return (hhat, alpha, cache) if return_cache else (hhat, alpha)


def self_attention_pool(H: np.ndarray, a: AttentionParams, return_cache: bool = False):
    """Pooling scored on hidden states only."""
    hhat, alpha, cache = _pool(H, None, a)
    return (hhat, alpha, cache) if return_cache else (hhat, alpha)


def attention_pool_backward(dhhat: np.ndarray, cache: dict, a: AttentionParams,
                            grads: AttentionParams):
    """Backward for either pool variant. Accumulates into ``grads`` and
    returns (dH, dP); dP is None when the cache has no interval term."""
    H, P, Z, alpha = cache["H"], cache["P"], cache["Z"], cache["alpha"]
    dalpha = H @ dhhat
    dH = alpha[:, None] * dhhat[None, :]
    deps = alpha * (dalpha - float(alpha @ dalpha))
    grads.w_s += Z.T @ deps
    dU = (deps[:, None] * a.w_s[None, :]) * (1.0 - Z * Z)
    grads.W_e += dU.T @ H
    dH += dU @ a.W_e
    dP = None
    if P is not None:
        grads.W_t += dU.T @ P
        dP = dU @ a.W_t
    return dH, dP
