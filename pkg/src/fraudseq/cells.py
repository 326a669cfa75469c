"""Recurrent cells: LSTM, GRU, bidirectional LSTM, phased LSTM (periodic
time gate), and time LSTM (interval-driven inner gate).

Two layers of API live here. The step functions and ``encode_sequence``
/ ``bi_encode_sequence`` operate on single sequences and define the
reference semantics. The ``*_forward`` / ``*_backward`` pairs run the
same recurrences vectorized over a padded batch ``(B, T, ...)`` and
implement full backpropagation through time; they are validated against
the reference path and against finite differences in the test suite.

Padded timesteps (``t >= lengths[b]``) produce junk states that nothing
downstream reads; because the upstream gradient for those rows is zero,
the backward recurrences stay exact without masking.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .numeric import ParamStore, glorot_uniform, sigmoid

__all__ = [
    "CellState",
    "LstmParams",
    "GruParams",
    "PhasedGateParams",
    "TimeLstmParams",
    "lstm_step",
    "gru_step",
    "phased_gate",
    "phased_lstm_step",
    "time_lstm_step",
    "encode_sequence",
    "bi_encode_sequence",
    "CELL_KINDS",
]

CELL_KINDS = ("lstm", "gru", "bilstm", "plstm", "tlstm")


@dataclass
class CellState:
    """Hidden vector h and memory-cell vector m, both length k."""
    h: np.ndarray
    m: np.ndarray

    @classmethod
    def zeros(cls, k: int) -> "CellState":
        return cls(np.zeros(k), np.zeros(k))


def _register_fields(params, store: ParamStore, prefix: str):
    """Register every ndarray field of a params dataclass in the store;
    returns a same-typed object whose array fields are the grad views."""
    kwargs = {}
    for f in dataclasses.fields(params):
        v = getattr(params, f.name)
        if isinstance(v, np.ndarray):
            _, g = store.register(f"{prefix}.{f.name}", v)
            kwargs[f.name] = g
        else:
            kwargs[f.name] = v
    return type(params)(**kwargs)


def _zero_grads_like(params):
    kwargs = {}
    for f in dataclasses.fields(params):
        v = getattr(params, f.name)
        kwargs[f.name] = np.zeros_like(v) if isinstance(v, np.ndarray) else v
    return type(params)(**kwargs)


@dataclass
class LstmParams:
    """Gate parameters. W_c/b_c feed the output gate o_t and W_g/U_g/b_g
    the tanh candidate; U_o is the output gate's recurrent weight."""
    W_i: np.ndarray
    W_f: np.ndarray
    W_c: np.ndarray
    W_g: np.ndarray
    U_i: np.ndarray
    U_f: np.ndarray
    U_o: np.ndarray
    U_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_g: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W_i.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.b_i.size

    @classmethod
    def create(cls, d: int, k: int, rng: np.random.Generator) -> "LstmParams":
        # forget-gate bias offset +1.0 keeps early memory open
        return cls(
            W_i=glorot_uniform(d, k, rng), W_f=glorot_uniform(d, k, rng),
            W_c=glorot_uniform(d, k, rng), W_g=glorot_uniform(d, k, rng),
            U_i=glorot_uniform(k, k, rng), U_f=glorot_uniform(k, k, rng),
            U_o=glorot_uniform(k, k, rng), U_g=glorot_uniform(k, k, rng),
            b_i=np.zeros(k), b_f=np.full(k, 1.0), b_c=np.zeros(k), b_g=np.zeros(k),
        )

    def register(self, store: ParamStore, prefix: str) -> "LstmParams":
        return _register_fields(self, store, prefix)

    def zero_grads_like(self) -> "LstmParams":
        return _zero_grads_like(self)


@dataclass
class GruParams:
    """Update (z), reset (r) and candidate (h) weights; the update gate
    multiplies the previous state, so z=1 preserves it."""
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.b_z.size

    @classmethod
    def create(cls, d: int, k: int, rng: np.random.Generator) -> "GruParams":
        return cls(
            W_z=glorot_uniform(d, k, rng), W_r=glorot_uniform(d, k, rng),
            W_h=glorot_uniform(d, k, rng),
            U_z=glorot_uniform(k, k, rng), U_r=glorot_uniform(k, k, rng),
            U_h=glorot_uniform(k, k, rng),
            b_z=np.zeros(k), b_r=np.zeros(k), b_h=np.zeros(k),
        )

    def register(self, store: ParamStore, prefix: str) -> "GruParams":
        return _register_fields(self, store, prefix)

    def zero_grads_like(self) -> "GruParams":
        return _zero_grads_like(self)


@dataclass
class PhasedGateParams:
    """Periodic time gate. The period is stored as log_tau so it stays
    positive under gradient updates; s is the phase shift in the same
    time units as the timestamps. r_on (open ratio) and alpha (leak)
    are fixed hyperparameters.
    """
    log_tau: np.ndarray
    s: np.ndarray
    r_on: float = 0.05
    alpha: float = 0.001

    def __post_init__(self):
        self.log_tau = np.asarray(self.log_tau, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=np.float64)
        if not 0.0 < self.r_on <= 1.0:
            raise ValueError(f"r_on must be in (0, 1], got {self.r_on}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def tau(self) -> np.ndarray:
        return np.exp(self.log_tau)

    @classmethod
    def from_tau(cls, tau, s, r_on: float = 0.05, alpha: float = 0.001) -> "PhasedGateParams":
        tau = np.asarray(tau, dtype=np.float64)
        if np.any(tau <= 0):
            raise ValueError(f"tau must be positive, got {tau}")
        return cls(log_tau=np.log(tau), s=np.asarray(s, dtype=np.float64),
                   r_on=r_on, alpha=alpha)

    @classmethod
    def create(cls, k: int, rng: np.random.Generator, tau_min: float = 60.0,
               tau_max: float = 172800.0, r_on: float = 0.05,
               alpha: float = 0.001) -> "PhasedGateParams":
        # periods log-uniform over [tau_min, tau_max] per hidden unit
        log_tau = rng.uniform(np.log(tau_min), np.log(tau_max), size=k)
        s = rng.uniform(0.0, 1.0, size=k) * np.exp(log_tau)
        return cls(log_tau=log_tau, s=s, r_on=r_on, alpha=alpha)

    def register(self, store: ParamStore, prefix: str) -> "PhasedGateParams":
        return _register_fields(self, store, prefix)

    def zero_grads_like(self) -> "PhasedGateParams":
        return _zero_grads_like(self)


@dataclass
class TimeLstmParams(LstmParams):
    """LSTM plus an interval gate T_m = sigmoid(x W_xt + tanh(dt W_tt) + b_t)
    and interval/peephole terms (W_to, w_co) in the output gate."""
    W_xt: np.ndarray = field(default=None)
    W_tt: np.ndarray = field(default=None)
    b_t: np.ndarray = field(default=None)
    W_to: np.ndarray = field(default=None)
    w_co: np.ndarray = field(default=None)

    @classmethod
    def create(cls, d: int, k: int, rng: np.random.Generator) -> "TimeLstmParams":
        base = LstmParams.create(d, k, rng)
        return cls(
            **dataclasses.asdict(base),
            W_xt=glorot_uniform(d, k, rng),
            W_tt=glorot_uniform(1, k, rng),
            b_t=np.zeros(k),
            W_to=glorot_uniform(1, k, rng),
            w_co=glorot_uniform(k, k, rng, shape=(k,)),
        )


# ---------------------------------------------------------------------------
# step functions (single vector in, reference semantics)
# ---------------------------------------------------------------------------

def _check_vec(x: np.ndarray, dim: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dim,):
        raise DimensionError(f"{what} has shape {x.shape}, expected ({dim},)")
    return x


def lstm_step(x: np.ndarray, prev: CellState, p: LstmParams) -> CellState:
    """One LSTM step: gates by sigmoid, candidate by tanh,
    m_t = f*m + i*g, h_t = o*tanh(m_t)."""
    x = _check_vec(x, p.input_dim, "input x")
    h = _check_vec(prev.h, p.hidden_dim, "prev.h")
    m = _check_vec(prev.m, p.hidden_dim, "prev.m")
    i = sigmoid(x @ p.W_i + h @ p.U_i + p.b_i)
    f = sigmoid(x @ p.W_f + h @ p.U_f + p.b_f)
    o = sigmoid(x @ p.W_c + h @ p.U_o + p.b_c)
    g = np.tanh(x @ p.W_g + h @ p.U_g + p.b_g)
    m_t = f * m + i * g
    h_t = o * np.tanh(m_t)
    return CellState(h_t, m_t)


def gru_step(x: np.ndarray, prev_h: np.ndarray, p: GruParams) -> np.ndarray:
    """One GRU step; h_t = z*h_prev + (1-z)*cand, so a saturated update
    gate preserves the previous state."""
    x = _check_vec(x, p.input_dim, "input x")
    h = _check_vec(prev_h, p.hidden_dim, "prev_h")
    z = sigmoid(x @ p.W_z + h @ p.U_z + p.b_z)
    r = sigmoid(x @ p.W_r + h @ p.U_r + p.b_r)
    cand = np.tanh(x @ p.W_h + (r * h) @ p.U_h + p.b_h)
    return z * h + (1.0 - z) * cand


def phased_gate(t: float, g: PhasedGateParams):
    """Periodic openness k_t in [0, 1]: rises over the first half of the
    open phase, falls over the second, leaks alpha*phi when closed."""
    tau = g.tau
    if np.any(tau <= 0):
        raise ValueError(f"tau must be positive, got {tau}")
    phi = np.mod(t - g.s, tau) / tau
    half = 0.5 * g.r_on
    k = np.where(phi < half, 2.0 * phi / g.r_on,
                 np.where(phi < g.r_on, 2.0 - 2.0 * phi / g.r_on, g.alpha * phi))
    return float(k) if np.ndim(k) == 0 else k


def phased_lstm_step(x: np.ndarray, t: float, prev: CellState, p: LstmParams,
                     g: PhasedGateParams) -> CellState:
    """LSTM step gated by periodic openness: the time gate blends the
    proposed state with the previous one."""
    proposed = lstm_step(x, prev, p)
    k_t = phased_gate(t, g)
    m_t = k_t * proposed.m + (1.0 - k_t) * prev.m
    h_t = k_t * proposed.h + (1.0 - k_t) * prev.h
    return CellState(np.asarray(h_t, dtype=np.float64), np.asarray(m_t, dtype=np.float64))


def time_lstm_step(x: np.ndarray, dt: float, prev: CellState, p: TimeLstmParams) -> CellState:
    """One time-LSTM step; the inner gate T_m scales the candidate by a
    saturating transform of the inter-event interval dt."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    x = _check_vec(x, p.input_dim, "input x")
    h = _check_vec(prev.h, p.hidden_dim, "prev.h")
    m = _check_vec(prev.m, p.hidden_dim, "prev.m")
    i = sigmoid(x @ p.W_i + h @ p.U_i + p.b_i)
    f = sigmoid(x @ p.W_f + h @ p.U_f + p.b_f)
    T_m = sigmoid(x @ p.W_xt + np.tanh(dt * p.W_tt[0]) + p.b_t)
    cand = np.tanh(x @ p.W_g + h @ p.U_g + p.b_g)
    m_t = f * m + i * T_m * cand
    o = sigmoid(x @ p.W_c + dt * p.W_to[0] + h @ p.U_o + p.w_co * m_t + p.b_c)
    h_t = o * np.tanh(m_t)
    return CellState(h_t, m_t)


# ---------------------------------------------------------------------------
# sequence encoders (single sequence)
# ---------------------------------------------------------------------------

def encode_sequence(seq, cell: str, params, times=None, dts=None) -> np.ndarray:
    """Run a cell over a sequence from zero initial state.

    Returns H of shape (n, k): row i is the hidden state after inputs
    1..i. ``times`` (absolute, for plstm) or ``dts`` (intervals, for
    tlstm) must accompany the time-aware kinds. For plstm, ``params``
    is a (LstmParams, PhasedGateParams) pair.
    """
    X = np.asarray(seq, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"encode_sequence needs a nonempty (n, d) sequence, got shape {X.shape}")
    n = X.shape[0]
    if cell == "lstm":
        state = CellState.zeros(params.hidden_dim)
        rows = []
        for t in range(n):
            state = lstm_step(X[t], state, params)
            rows.append(state.h)
    elif cell == "gru":
        h = np.zeros(params.hidden_dim)
        rows = []
        for t in range(n):
            h = gru_step(X[t], h, params)
            rows.append(h)
    elif cell == "plstm":
        p, g = params
        if times is None or len(times) != n:
            raise ValueError("plstm needs one timestamp per input")
        state = CellState.zeros(p.hidden_dim)
        rows = []
        for t in range(n):
            state = phased_lstm_step(X[t], times[t], state, p, g)
            rows.append(state.h)
    elif cell == "tlstm":
        if dts is None or len(dts) != n:
            raise ValueError("tlstm needs one interval per input")
        state = CellState.zeros(params.hidden_dim)
        rows = []
        for t in range(n):
            state = time_lstm_step(X[t], dts[t], state, params)
            rows.append(state.h)
    else:
        raise ValueError(f"unknown cell kind {cell!r}, expected one of {CELL_KINDS}")
    return np.vstack(rows)


def bi_encode_sequence(seq, params_fwd: LstmParams, params_bwd: LstmParams) -> np.ndarray:
    """Bidirectional LSTM encoding, (n, 2k): row i concatenates the
    forward state after prefix 1..i and the backward state after
    suffix n..i."""
    X = np.asarray(seq, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"bi_encode_sequence needs a nonempty (n, d) sequence, got shape {X.shape}")
    H_f = encode_sequence(X, "lstm", params_fwd)
    H_b = encode_sequence(X[::-1], "lstm", params_bwd)[::-1]
    return np.hstack([H_f, H_b])


# ---------------------------------------------------------------------------
# batched forward/backward (padded (B, T, ...) arrays)
# ---------------------------------------------------------------------------

def lstm_forward(X: np.ndarray, p: LstmParams):
    """Padded-batch LSTM. X: (B, T, d) -> H: (B, T, k) plus a cache for
    the backward pass."""
    B, T, d = X.shape
    k = p.hidden_dim
    I = np.empty((B, T, k)); F = np.empty((B, T, k))
    O = np.empty((B, T, k)); G = np.empty((B, T, k))
    M = np.empty((B, T, k)); TM = np.empty((B, T, k))
    H = np.empty((B, T, k))
    h = np.zeros((B, k)); m = np.zeros((B, k))
    for t in range(T):
        xt = X[:, t, :]
        i = sigmoid(xt @ p.W_i + h @ p.U_i + p.b_i)
        f = sigmoid(xt @ p.W_f + h @ p.U_f + p.b_f)
        o = sigmoid(xt @ p.W_c + h @ p.U_o + p.b_c)
        g = np.tanh(xt @ p.W_g + h @ p.U_g + p.b_g)
        m = f * m + i * g
        tm = np.tanh(m)
        h = o * tm
        I[:, t] = i; F[:, t] = f; O[:, t] = o; G[:, t] = g
        M[:, t] = m; TM[:, t] = tm; H[:, t] = h
    cache = {"X": X, "I": I, "F": F, "O": O, "G": G, "M": M, "TM": TM, "H": H}
    return H, cache


def lstm_backward(dH: np.ndarray, cache: dict, p: LstmParams, grads: LstmParams) -> np.ndarray:
    """BPTT for lstm_forward. dH: (B, T, k) upstream gradient on every
    hidden row. Accumulates into ``grads`` and returns dX: (B, T, d)."""
    X, I, F, O, G, M, TM, H = (cache[key] for key in ("X", "I", "F", "O", "G", "M", "TM", "H"))
    B, T, d = X.shape
    dX = np.zeros_like(X)
    dh_next = np.zeros((B, p.hidden_dim))
    dm_next = np.zeros((B, p.hidden_dim))
    for t in range(T - 1, -1, -1):
        i, f, o, g, tm = I[:, t], F[:, t], O[:, t], G[:, t], TM[:, t]
        dh = dH[:, t] + dh_next
        do = dh * tm
        dm = dh * o * (1.0 - tm * tm) + dm_next
        m_prev = M[:, t - 1] if t > 0 else np.zeros_like(dm)
        h_prev = H[:, t - 1] if t > 0 else np.zeros_like(dh)
        di = dm * g
        df = dm * m_prev
        dg = dm * i
        dm_next = dm * f
        da_i = di * i * (1.0 - i)
        da_f = df * f * (1.0 - f)
        da_o = do * o * (1.0 - o)
        da_g = dg * (1.0 - g * g)
        xt = X[:, t]
        grads.W_i += xt.T @ da_i; grads.U_i += h_prev.T @ da_i; grads.b_i += da_i.sum(axis=0)
        grads.W_f += xt.T @ da_f; grads.U_f += h_prev.T @ da_f; grads.b_f += da_f.sum(axis=0)
        grads.W_c += xt.T @ da_o; grads.U_o += h_prev.T @ da_o; grads.b_c += da_o.sum(axis=0)
        grads.W_g += xt.T @ da_g; grads.U_g += h_prev.T @ da_g; grads.b_g += da_g.sum(axis=0)
        dX[:, t] = da_i @ p.W_i.T + da_f @ p.W_f.T + da_o @ p.W_c.T + da_g @ p.W_g.T
        dh_next = da_i @ p.U_i.T + da_f @ p.U_f.T + da_o @ p.U_o.T + da_g @ p.U_g.T
    return dX


def gru_forward(X: np.ndarray, p: GruParams):
    B, T, d = X.shape
    k = p.hidden_dim
    Z = np.empty((B, T, k)); R = np.empty((B, T, k))
    C = np.empty((B, T, k)); H = np.empty((B, T, k))
    h = np.zeros((B, k))
    for t in range(T):
        xt = X[:, t, :]
        z = sigmoid(xt @ p.W_z + h @ p.U_z + p.b_z)
        r = sigmoid(xt @ p.W_r + h @ p.U_r + p.b_r)
        c = np.tanh(xt @ p.W_h + (r * h) @ p.U_h + p.b_h)
        h = z * h + (1.0 - z) * c
        Z[:, t] = z; R[:, t] = r; C[:, t] = c; H[:, t] = h
    cache = {"X": X, "Z": Z, "R": R, "C": C, "H": H}
    return H, cache


def gru_backward(dH: np.ndarray, cache: dict, p: GruParams, grads: GruParams) -> np.ndarray:
    X, Z, R, C, H = (cache[key] for key in ("X", "Z", "R", "C", "H"))
    B, T, d = X.shape
    dX = np.zeros_like(X)
    dh_next = np.zeros((B, p.hidden_dim))
    for t in range(T - 1, -1, -1):
        z, r, c = Z[:, t], R[:, t], C[:, t]
        h_prev = H[:, t - 1] if t > 0 else np.zeros((B, p.hidden_dim))
        dh = dH[:, t] + dh_next
        dz = dh * (h_prev - c)
        dc = dh * (1.0 - z)
        dh_prev = dh * z
        da_c = dc * (1.0 - c * c)
        drh = da_c @ p.U_h.T
        dr = drh * h_prev
        dh_prev += drh * r
        da_z = dz * z * (1.0 - z)
        da_r = dr * r * (1.0 - r)
        xt = X[:, t]
        grads.W_z += xt.T @ da_z; grads.U_z += h_prev.T @ da_z; grads.b_z += da_z.sum(axis=0)
        grads.W_r += xt.T @ da_r; grads.U_r += h_prev.T @ da_r; grads.b_r += da_r.sum(axis=0)
        grads.W_h += xt.T @ da_c; grads.U_h += (r * h_prev).T @ da_c; grads.b_h += da_c.sum(axis=0)
        dX[:, t] = da_z @ p.W_z.T + da_r @ p.W_r.T + da_c @ p.W_h.T
        dh_prev += da_z @ p.U_z.T + da_r @ p.U_r.T
        dh_next = dh_prev
    return dX


def _gate_and_partials(tvals: np.ndarray, g: PhasedGateParams):
    """Vectorized time gate over (B,) timestamps and per-unit periods.
    Returns k_t (B, k), dk/dlog_tau and dk/ds (both (B, k))."""
    tau = np.exp(g.log_tau)[None, :]
    u = np.asarray(tvals, dtype=np.float64)[:, None] - g.s[None, :]
    phi = np.mod(u, tau) / tau
    half = 0.5 * g.r_on
    k = np.where(phi < half, 2.0 * phi / g.r_on,
                 np.where(phi < g.r_on, 2.0 - 2.0 * phi / g.r_on, g.alpha * phi))
    dk_dphi = np.where(phi < half, 2.0 / g.r_on,
                       np.where(phi < g.r_on, -2.0 / g.r_on, g.alpha))
    # phi = u/tau - floor(u/tau); away from branch points the floor term
    # is locally constant
    dphi_dlogtau = -u / tau
    dphi_ds = -1.0 / tau
    return k, dk_dphi * dphi_dlogtau, dk_dphi * dphi_ds


def plstm_forward(X: np.ndarray, times: np.ndarray, p: LstmParams, g: PhasedGateParams):
    """Padded-batch phased LSTM. times: (B, T) absolute timestamps."""
    B, T, d = X.shape
    k = p.hidden_dim
    arrs = {n: np.empty((B, T, k)) for n in
            ("I", "F", "O", "G", "MHAT", "TMH", "HHAT", "K", "DKLT", "DKS", "M", "H")}
    h = np.zeros((B, k)); m = np.zeros((B, k))
    M_prev = np.empty((B, T, k)); H_prev = np.empty((B, T, k))
    for t in range(T):
        xt = X[:, t, :]
        i = sigmoid(xt @ p.W_i + h @ p.U_i + p.b_i)
        f = sigmoid(xt @ p.W_f + h @ p.U_f + p.b_f)
        o = sigmoid(xt @ p.W_c + h @ p.U_o + p.b_c)
        gc = np.tanh(xt @ p.W_g + h @ p.U_g + p.b_g)
        m_hat = f * m + i * gc
        tmh = np.tanh(m_hat)
        h_hat = o * tmh
        kt, dklt, dks = _gate_and_partials(times[:, t], g)
        M_prev[:, t] = m; H_prev[:, t] = h
        m = kt * m_hat + (1.0 - kt) * m
        h = kt * h_hat + (1.0 - kt) * h
        for name, val in (("I", i), ("F", f), ("O", o), ("G", gc), ("MHAT", m_hat),
                          ("TMH", tmh), ("HHAT", h_hat), ("K", kt), ("DKLT", dklt),
                          ("DKS", dks), ("M", m), ("H", h)):
            arrs[name][:, t] = val
    cache = {"X": X, "M_prev": M_prev, "H_prev": H_prev, **arrs}
    return arrs["H"], cache


def plstm_backward(dH: np.ndarray, cache: dict, p: LstmParams, grads: LstmParams,
                   g: PhasedGateParams, g_grads: PhasedGateParams) -> np.ndarray:
    X = cache["X"]
    B, T, d = X.shape
    k = p.hidden_dim
    dX = np.zeros_like(X)
    dh_next = np.zeros((B, k))
    dm_next = np.zeros((B, k))
    for t in range(T - 1, -1, -1):
        i, f, o, gc = cache["I"][:, t], cache["F"][:, t], cache["O"][:, t], cache["G"][:, t]
        m_hat, tmh, h_hat = cache["MHAT"][:, t], cache["TMH"][:, t], cache["HHAT"][:, t]
        kt = cache["K"][:, t]
        m_prev, h_prev = cache["M_prev"][:, t], cache["H_prev"][:, t]
        dh = dH[:, t] + dh_next
        dm = dm_next
        # blend: h = k*h_hat + (1-k)*h_prev, m = k*m_hat + (1-k)*m_prev
        dk = dh * (h_hat - h_prev) + dm * (m_hat - m_prev)
        g_grads.log_tau += (dk * cache["DKLT"][:, t]).sum(axis=0)
        g_grads.s += (dk * cache["DKS"][:, t]).sum(axis=0)
        dh_hat = dh * kt
        dh_prev = dh * (1.0 - kt)
        dm_hat = dm * kt
        dm_prev = dm * (1.0 - kt)
        # plain LSTM step backward on (h_hat, m_hat)
        do = dh_hat * tmh
        dm_hat = dm_hat + dh_hat * o * (1.0 - tmh * tmh)
        di = dm_hat * gc
        df = dm_hat * m_prev
        dg = dm_hat * i
        dm_prev += dm_hat * f
        da_i = di * i * (1.0 - i)
        da_f = df * f * (1.0 - f)
        da_o = do * o * (1.0 - o)
        da_g = dg * (1.0 - gc * gc)
        xt = X[:, t]
        grads.W_i += xt.T @ da_i; grads.U_i += h_prev.T @ da_i; grads.b_i += da_i.sum(axis=0)
        grads.W_f += xt.T @ da_f; grads.U_f += h_prev.T @ da_f; grads.b_f += da_f.sum(axis=0)
        grads.W_c += xt.T @ da_o; grads.U_o += h_prev.T @ da_o; grads.b_c += da_o.sum(axis=0)
        grads.W_g += xt.T @ da_g; grads.U_g += h_prev.T @ da_g; grads.b_g += da_g.sum(axis=0)
        dX[:, t] = da_i @ p.W_i.T + da_f @ p.W_f.T + da_o @ p.W_c.T + da_g @ p.W_g.T
        dh_prev += da_i @ p.U_i.T + da_f @ p.U_f.T + da_o @ p.U_o.T + da_g @ p.U_g.T
        dh_next = dh_prev
        dm_next = dm_prev
    return dX


def tlstm_forward(X: np.ndarray, dts: np.ndarray, p: TimeLstmParams):
    """Padded-batch time LSTM. dts: (B, T) nonnegative intervals."""
    B, T, d = X.shape
    k = p.hidden_dim
    arrs = {n: np.empty((B, T, k)) for n in ("I", "F", "O", "G", "TG", "Q", "M", "TM", "H")}
    h = np.zeros((B, k)); m = np.zeros((B, k))
    for t in range(T):
        xt = X[:, t, :]
        dt = dts[:, t][:, None]
        i = sigmoid(xt @ p.W_i + h @ p.U_i + p.b_i)
        f = sigmoid(xt @ p.W_f + h @ p.U_f + p.b_f)
        q = np.tanh(dt @ p.W_tt)
        tg = sigmoid(xt @ p.W_xt + q + p.b_t)
        gc = np.tanh(xt @ p.W_g + h @ p.U_g + p.b_g)
        m_new = f * m + i * tg * gc
        o = sigmoid(xt @ p.W_c + dt @ p.W_to + h @ p.U_o + p.w_co * m_new + p.b_c)
        tm = np.tanh(m_new)
        h_new = o * tm
        arrs["I"][:, t] = i; arrs["F"][:, t] = f; arrs["O"][:, t] = o
        arrs["G"][:, t] = gc; arrs["TG"][:, t] = tg; arrs["Q"][:, t] = q
        arrs["M"][:, t] = m_new; arrs["TM"][:, t] = tm; arrs["H"][:, t] = h_new
        h, m = h_new, m_new
    cache = {"X": X, "DT": dts, **arrs}
    return arrs["H"], cache


def tlstm_backward(dH: np.ndarray, cache: dict, p: TimeLstmParams,
                   grads: TimeLstmParams) -> np.ndarray:
    X, DT = cache["X"], cache["DT"]
    B, T, d = X.shape
    k = p.hidden_dim
    dX = np.zeros_like(X)
    dh_next = np.zeros((B, k))
    dm_next = np.zeros((B, k))
    for t in range(T - 1, -1, -1):
        i, f, o = cache["I"][:, t], cache["F"][:, t], cache["O"][:, t]
        gc, tg, q, tm = cache["G"][:, t], cache["TG"][:, t], cache["Q"][:, t], cache["TM"][:, t]
        m_t = cache["M"][:, t]
        m_prev = cache["M"][:, t - 1] if t > 0 else np.zeros((B, k))
        h_prev = cache["H"][:, t - 1] if t > 0 else np.zeros((B, k))
        dt = DT[:, t][:, None]
        dh = dH[:, t] + dh_next
        do_pre = dh * tm * o * (1.0 - o)
        # o peeks at the fresh memory cell through w_co
        dm = dh * o * (1.0 - tm * tm) + dm_next + do_pre * p.w_co
        grads.w_co += (do_pre * m_t).sum(axis=0)
        xt = X[:, t]
        grads.W_c += xt.T @ do_pre; grads.U_o += h_prev.T @ do_pre
        grads.b_c += do_pre.sum(axis=0); grads.W_to += dt.T @ do_pre
        di = dm * tg * gc
        df = dm * m_prev
        dtg = dm * i * gc
        dg = dm * i * tg
        dm_next = dm * f
        da_i = di * i * (1.0 - i)
        da_f = df * f * (1.0 - f)
        da_t = dtg * tg * (1.0 - tg)
        da_g = dg * (1.0 - gc * gc)
        dq = da_t * (1.0 - q * q)
        grads.W_i += xt.T @ da_i; grads.U_i += h_prev.T @ da_i; grads.b_i += da_i.sum(axis=0)
        grads.W_f += xt.T @ da_f; grads.U_f += h_prev.T @ da_f; grads.b_f += da_f.sum(axis=0)
        grads.W_xt += xt.T @ da_t; grads.b_t += da_t.sum(axis=0); grads.W_tt += dt.T @ dq
        grads.W_g += xt.T @ da_g; grads.U_g += h_prev.T @ da_g; grads.b_g += da_g.sum(axis=0)
        dX[:, t] = (da_i @ p.W_i.T + da_f @ p.W_f.T + da_t @ p.W_xt.T
                    + da_g @ p.W_g.T + do_pre @ p.W_c.T)
        dh_next = da_i @ p.U_i.T + da_f @ p.U_f.T + da_g @ p.U_g.T + do_pre @ p.U_o.T
    return dX


def reverse_padded(X: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Reverse each sequence within its own length; padding stays put."""
    Xr = np.zeros_like(X)
    for b, n in enumerate(lengths):
        Xr[b, :n] = X[b, :n][::-1]
    return Xr


def bilstm_forward(X: np.ndarray, lengths: np.ndarray, p_fwd: LstmParams, p_bwd: LstmParams):
    """Padded-batch bidirectional LSTM -> H: (B, T, 2k). Row i holds the
    forward state after 1..i and the backward state after n..i."""
    H_f, cache_f = lstm_forward(X, p_fwd)
    Xr = reverse_padded(X, lengths)
    H_r, cache_r = lstm_forward(Xr, p_bwd)
    H_b = reverse_padded(H_r, lengths)
    H = np.concatenate([H_f, H_b], axis=2)
    return H, {"f": cache_f, "r": cache_r, "lengths": lengths}


def bilstm_backward(dH: np.ndarray, cache: dict, p_fwd: LstmParams, p_bwd: LstmParams,
                    g_fwd: LstmParams, g_bwd: LstmParams) -> np.ndarray:
    k = p_fwd.hidden_dim
    lengths = cache["lengths"]
    dH_f = np.ascontiguousarray(dH[:, :, :k])
    dH_b = reverse_padded(np.ascontiguousarray(dH[:, :, k:]), lengths)
    dX = lstm_backward(dH_f, cache["f"], p_fwd, g_fwd)
    dXr = lstm_backward(dH_b, cache["r"], p_bwd, g_bwd)
    dX += reverse_padded(dXr, lengths)
    return dX
