"""Heterogeneous fusion classifier: two behavior-stream embeddings plus
the frozen tree embedding, each batch-normalized, concatenated, and fed
to a one-hidden-layer MLP with a sigmoid score.

The model owns a ParamStore with every trainable tensor addressable by
name; the tree ensemble is frozen and receives no gradient. Variants
differ only in the cell kind and pooling used by the stream blocks; the
``gbdt`` variant drops the streams entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cells
from .attention import (
    AttentionParams,
    TimeEmbeddingTable,
    bucketize_array,
    deltas,
)
from .errors import DataError, DimensionError
from .numeric import ParamStore, sigmoid
from .trees import TreeEnsemble


def _scatter_add_rows(table_grad: np.ndarray, ids: np.ndarray, rows: np.ndarray) -> None:
    """table_grad[ids[i]] += rows[i], with repeats; bincount per column
    is much faster than np.add.at for large id sets."""
    ids = ids.reshape(-1)
    rows = rows.reshape(ids.size, -1)
    V = table_grad.shape[0]
    for j in range(rows.shape[1]):
        table_grad[:, j] += np.bincount(ids, weights=rows[:, j], minlength=V)

__all__ = [
    "VARIANTS",
    "ModelConfig",
    "BatchNormParams",
    "batch_norm_forward",
    "batch_norm_backward",
    "ModelBatch",
    "build_batch",
    "FusionModel",
]

# variant tag -> (cell kind, pooling kind); gbdt has no stream blocks
VARIANTS = {
    "gbdt": (None, None),
    "gru": ("gru", "last"),
    "bilstm": ("bilstm", "last"),
    "bilstm_selfattn": ("bilstm", "self"),
    "plstm": ("plstm", "last"),
    "tlstm": ("tlstm", "last"),
    "bilstm_timeattn": ("bilstm", "time"),
    "gru_timeattn": ("gru", "time"),
}

MAX_CLICKS = 200
MAX_TXNS = 32
SCORE_CLAMP = 1e-7


@dataclass
class ModelConfig:
    variant: str = "bilstm_timeattn"
    hidden: int = 16
    click_embed_dim: int = 32
    txn_attr_embed_dim: int = 16
    n_txn_attrs: int = 28
    click_vocab: int = 2300
    txn_vocab: int = 20
    time_embed_dim: int = 16
    attention_width: int = 64
    num_buckets: int = 1441
    mlp_hidden: int = 128
    r_on: float = 0.05
    leak_alpha: float = 0.001
    tau_min: float = 60.0
    tau_max: float = 172800.0
    bn_momentum: float = 0.9
    bn_epsilon: float = 1e-5
    seed: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; "
                             f"expected one of {', '.join(VARIANTS)}")


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    epsilon: float = 1e-5

    @classmethod
    def create(cls, width: int, momentum: float = 0.9, epsilon: float = 1e-5) -> "BatchNormParams":
        return cls(gamma=np.ones(width), beta=np.zeros(width),
                   running_mean=np.zeros(width), running_var=np.ones(width),
                   momentum=momentum, epsilon=epsilon)

    def register(self, store: ParamStore, prefix: str) -> "BatchNormParams":
        """Gamma/beta are trainable; running stats are checkpointed
        buffers. Returns grad views for gamma/beta."""
        _, ggamma = store.register(f"{prefix}.gamma", self.gamma)
        _, gbeta = store.register(f"{prefix}.beta", self.beta)
        store.register(f"{prefix}.running_mean", self.running_mean, trainable=False)
        store.register(f"{prefix}.running_var", self.running_var, trainable=False)
        return BatchNormParams(gamma=ggamma, beta=gbeta,
                               running_mean=np.zeros(0), running_var=np.zeros(0))


def batch_norm_forward(X: np.ndarray, p: BatchNormParams, mode: str,
                       update_running: bool = True):
    """Column-wise standardize-and-affine. Train mode uses batch
    statistics (biased variance) and optionally folds them into the
    running stats; infer mode uses the running stats."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"batch norm expects a 2-D batch, got shape {X.shape}")
    if mode == "train":
        if X.shape[0] < 2:
            raise ValueError(f"train-mode batch norm needs batch size >= 2, got {X.shape[0]}")
        mu = X.mean(axis=0)
        var = X.var(axis=0)
        if update_running:
            p.running_mean *= p.momentum
            p.running_mean += (1.0 - p.momentum) * mu
            p.running_var *= p.momentum
            p.running_var += (1.0 - p.momentum) * var
    elif mode == "infer":
        mu = p.running_mean
        var = p.running_var
    else:
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    inv = 1.0 / np.sqrt(var + p.epsilon)
    xhat = (X - mu) * inv
    Y = p.gamma * xhat + p.beta
    cache = {"xhat": xhat, "inv": inv, "mode": mode}
    return Y, cache


def batch_norm_backward(dY: np.ndarray, cache: dict, p: BatchNormParams,
                        grads: BatchNormParams) -> np.ndarray:
    xhat, inv = cache["xhat"], cache["inv"]
    grads.gamma += (dY * xhat).sum(axis=0)
    grads.beta += dY.sum(axis=0)
    dxhat = dY * p.gamma
    if cache["mode"] == "infer":
        return dxhat * inv
    B = dY.shape[0]
    return (inv / B) * (B * dxhat - dxhat.sum(axis=0)
                        - xhat * (dxhat * xhat).sum(axis=0))


# ---------------------------------------------------------------------------
# batch assembly
# ---------------------------------------------------------------------------

@dataclass
class StreamBatch:
    ids: np.ndarray        # (B, T) action ids, or (B, T, A) attribute ids
    lengths: np.ndarray    # (B,)
    buckets: np.ndarray    # (B, T) minute buckets of the inter-event gaps
    rel_times: np.ndarray  # (B, T) seconds since each sequence's first event
    dt_scaled: np.ndarray  # (B, T) bucket value in hours, the tlstm input


def _build_stream(id_arrays: list[np.ndarray], ts_arrays: list[np.ndarray],
                  num_buckets: int, attr_width: int | None = None) -> StreamBatch:
    B = len(id_arrays)
    lengths = np.array([len(ts) for ts in ts_arrays], dtype=np.int64)
    T = max(1, int(lengths.max()) if B else 1)
    shape = (B, T) if attr_width is None else (B, T, attr_width)
    ids = np.zeros(shape, dtype=np.int64)
    buckets = np.zeros((B, T), dtype=np.int64)
    rel_times = np.zeros((B, T))
    for b in range(B):
        n = lengths[b]
        if n == 0:
            continue
        ids[b, :n] = id_arrays[b]
        dt = deltas(ts_arrays[b])
        buckets[b, :n] = bucketize_array(dt, num_buckets)
        rel_times[b, :n] = np.asarray(ts_arrays[b], dtype=np.float64) - float(ts_arrays[b][0])
    dt_scaled = buckets.astype(np.float64) / 60.0
    return StreamBatch(ids=ids, lengths=lengths, buckets=buckets,
                       rel_times=rel_times, dt_scaled=dt_scaled)


@dataclass
class ModelBatch:
    size: int
    labels: np.ndarray
    click: StreamBatch | None
    txn: StreamBatch | None
    tree_emb: np.ndarray


def build_batch(instances, tree_emb: np.ndarray, cfg: ModelConfig) -> ModelBatch:
    """Pad and index a list of LabeledInstance into model-ready arrays.

    Out-of-vocabulary click action ids map to the reserved id 0; a
    transaction event with the wrong attribute count is a schema error.
    """
    labels = np.array([inst.label for inst in instances], dtype=np.float64)
    click = txn = None
    if VARIANTS[cfg.variant][0] is not None:
        acts = []
        for inst in instances:
            a = np.asarray(inst.click_actions, dtype=np.int64)
            acts.append(np.where((a >= 0) & (a < cfg.click_vocab), a, 0))
        click = _build_stream(acts, [inst.click_ts for inst in instances], cfg.num_buckets)
        tx = []
        for inst in instances:
            t = np.asarray(inst.txn_attrs, dtype=np.int64)
            if t.size == 0:
                t = np.zeros((0, cfg.n_txn_attrs), dtype=np.int64)
            if t.ndim != 2 or t.shape[1] != cfg.n_txn_attrs or t.shape[0] != len(inst.txn_ts):
                raise DataError(f"each transaction needs exactly {cfg.n_txn_attrs} "
                                f"attribute ids, got shape {t.shape}")
            tx.append(np.clip(t, 0, cfg.txn_vocab - 1))
        txn = _build_stream(tx, [inst.txn_ts for inst in instances], cfg.num_buckets,
                            attr_width=cfg.n_txn_attrs)
    return ModelBatch(size=len(instances), labels=labels, click=click, txn=txn,
                      tree_emb=np.asarray(tree_emb, dtype=np.float64))


# ---------------------------------------------------------------------------
# stream block: embedding lookup -> encoder -> pooling
# ---------------------------------------------------------------------------

class _StreamBlock:
    """One behavior stream: input embedding, recurrent encoder, pooling
    down to a single vector per sequence."""

    def __init__(self, name: str, cfg: ModelConfig, store: ParamStore,
                 rng: np.random.Generator, input_dim: int):
        self.name = name
        self.cell_kind, self.pool_kind = VARIANTS[cfg.variant]
        self.k = cfg.hidden
        self.input_dim = input_dim
        if self.cell_kind == "bilstm":
            self.p_fwd = cells.LstmParams.create(input_dim, cfg.hidden, rng)
            self.g_fwd = self.p_fwd.register(store, f"{name}.fwd")
            self.p_bwd = cells.LstmParams.create(input_dim, cfg.hidden, rng)
            self.g_bwd = self.p_bwd.register(store, f"{name}.bwd")
            self.out_dim = 2 * cfg.hidden
        elif self.cell_kind == "gru":
            self.p = cells.GruParams.create(input_dim, cfg.hidden, rng)
            self.g = self.p.register(store, f"{name}.cell")
            self.out_dim = cfg.hidden
        elif self.cell_kind == "plstm":
            self.p = cells.LstmParams.create(input_dim, cfg.hidden, rng)
            self.g = self.p.register(store, f"{name}.cell")
            self.gate = cells.PhasedGateParams.create(
                cfg.hidden, rng, tau_min=cfg.tau_min, tau_max=cfg.tau_max,
                r_on=cfg.r_on, alpha=cfg.leak_alpha)
            self.gate_g = self.gate.register(store, f"{name}.gate")
            self.out_dim = cfg.hidden
        elif self.cell_kind == "tlstm":
            self.p = cells.TimeLstmParams.create(input_dim, cfg.hidden, rng)
            self.g = self.p.register(store, f"{name}.cell")
            self.out_dim = cfg.hidden
        else:
            self.p = cells.LstmParams.create(input_dim, cfg.hidden, rng)
            self.g = self.p.register(store, f"{name}.cell")
            self.out_dim = cfg.hidden

        self.att = None
        self.time_table = None
        if self.pool_kind in ("self", "time"):
            g_dim = cfg.time_embed_dim if self.pool_kind == "time" else None
            self.att = AttentionParams.create(self.out_dim, g_dim, cfg.attention_width, rng)
            self.att_g = self.att.register(store, f"{name}.att")
        if self.pool_kind == "time":
            self.time_table = TimeEmbeddingTable.create(cfg.num_buckets, cfg.time_embed_dim, rng)
            self.time_table_g = self.time_table.register(store, f"{name}.time_table")
        empty = rng.uniform(-0.05, 0.05, size=self.out_dim)
        self.empty_vec, self.empty_g = store.register(f"{name}.empty", empty)

    def encode(self, X: np.ndarray, sb: StreamBatch):
        if self.cell_kind == "bilstm":
            return cells.bilstm_forward(X, sb.lengths, self.p_fwd, self.p_bwd)
        if self.cell_kind == "gru":
            return cells.gru_forward(X, self.p)
        if self.cell_kind == "plstm":
            return cells.plstm_forward(X, sb.rel_times, self.p, self.gate)
        if self.cell_kind == "tlstm":
            return cells.tlstm_forward(X, sb.dt_scaled, self.p)
        return cells.lstm_forward(X, self.p)

    def encode_backward(self, dH: np.ndarray, cache) -> np.ndarray:
        if self.cell_kind == "bilstm":
            return cells.bilstm_backward(dH, cache, self.p_fwd, self.p_bwd,
                                         self.g_fwd, self.g_bwd)
        if self.cell_kind == "gru":
            return cells.gru_backward(dH, cache, self.p, self.g)
        if self.cell_kind == "plstm":
            return cells.plstm_backward(dH, cache, self.p, self.g, self.gate, self.gate_g)
        if self.cell_kind == "tlstm":
            return cells.tlstm_backward(dH, cache, self.p, self.g)
        return cells.lstm_backward(dH, cache, self.p, self.g)

    def pool(self, H: np.ndarray, sb: StreamBatch):
        """Collapse (B, T, out_dim) hidden rows to (B, out_dim), batched
        and masked; semantics per sequence match the public pool ops."""
        B, T = H.shape[0], H.shape[1]
        lengths = sb.lengths
        mask = np.arange(T)[None, :] < lengths[:, None]
        empty = lengths == 0
        cache = {"mask": mask, "empty": empty}
        if self.pool_kind == "last":
            rows = np.arange(B)
            last = np.maximum(lengths - 1, 0)
            if self.cell_kind == "bilstm":
                pooled = np.concatenate([H[rows, last, :self.k], H[rows, 0, self.k:]],
                                        axis=1)
            else:
                pooled = H[rows, last].copy()
        else:
            U = H @ self.att.W_e.T
            P = None
            if self.pool_kind == "time":
                P = self.time_table.table[sb.buckets]
                U = U + P @ self.att.W_t.T
            Z = np.tanh(U)
            eps = np.where(mask, Z @ self.att.w_s, -np.inf)
            row_max = eps.max(axis=1)
            row_max = np.where(np.isfinite(row_max), row_max, 0.0)
            e = np.exp(eps - row_max[:, None])
            denom = e.sum(axis=1)
            alpha = e / np.where(denom == 0.0, 1.0, denom)[:, None]
            pooled = np.einsum("bt,btk->bk", alpha, H)
            cache.update({"H": H, "P": P, "Z": Z, "alpha": alpha})
        if empty.any():
            pooled[empty] = self.empty_vec
        return pooled, cache

    def pool_backward(self, dPooled: np.ndarray, cache: dict, H: np.ndarray,
                      sb: StreamBatch) -> np.ndarray:
        mask, empty = cache["mask"], cache["empty"]
        if empty.any():
            self.empty_g += dPooled[empty].sum(axis=0)
            dPooled = np.where(empty[:, None], 0.0, dPooled)
        dH = np.zeros_like(H)
        B = H.shape[0]
        if self.pool_kind == "last":
            rows = np.arange(B)
            last = np.maximum(sb.lengths - 1, 0)
            if self.cell_kind == "bilstm":
                dH[rows, last, :self.k] += dPooled[:, :self.k]
                dH[rows, 0, self.k:] += dPooled[:, self.k:]
            else:
                dH[rows, last] += dPooled
            return dH
        P, Z, alpha = cache["P"], cache["Z"], cache["alpha"]
        dalpha = np.einsum("bk,btk->bt", dPooled, H)
        dH += alpha[:, :, None] * dPooled[:, None, :]
        deps = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        self.att_g.w_s += np.einsum("bt,btm->m", deps, Z)
        dU = (deps[:, :, None] * self.att.w_s[None, None, :]) * (1.0 - Z * Z)
        dU[~mask] = 0.0
        self.att_g.W_e += np.einsum("btm,btk->mk", dU, H)
        dH += dU @ self.att.W_e
        if self.pool_kind == "time":
            self.att_g.W_t += np.einsum("btm,btg->mg", dU, P)
            dP = dU @ self.att.W_t
            _scatter_add_rows(self.time_table_g, sb.buckets, dP)
        return dH


# ---------------------------------------------------------------------------
# the fusion model
# ---------------------------------------------------------------------------

class FusionModel:
    """All trainable state for one variant, wired to a frozen ensemble."""

    def __init__(self, cfg: ModelConfig, ensemble: TreeEnsemble):
        self.cfg = cfg
        self.ensemble = ensemble
        self.tree_width = ensemble.total_leaves
        self.store = ParamStore()
        rng = np.random.default_rng(cfg.seed)
        self.has_streams = VARIANTS[cfg.variant][0] is not None

        if self.has_streams:
            self.click_table, self.click_table_g = self.store.register(
                "click.table", rng.uniform(-0.05, 0.05, size=(cfg.click_vocab, cfg.click_embed_dim)))
            self.txn_table, self.txn_table_g = self.store.register(
                "txn.table", rng.uniform(-0.05, 0.05,
                                         size=(cfg.n_txn_attrs * cfg.txn_vocab,
                                               cfg.txn_attr_embed_dim)))
            self.click_block = _StreamBlock("click", cfg, self.store, rng, cfg.click_embed_dim)
            txn_input = cfg.n_txn_attrs * cfg.txn_attr_embed_dim
            self.txn_block = _StreamBlock("txn", cfg, self.store, rng, txn_input)
            self.bn_click = BatchNormParams.create(self.click_block.out_dim,
                                                   cfg.bn_momentum, cfg.bn_epsilon)
            self.bn_click_g = self.bn_click.register(self.store, "bn_click")
            self.bn_txn = BatchNormParams.create(self.txn_block.out_dim,
                                                 cfg.bn_momentum, cfg.bn_epsilon)
            self.bn_txn_g = self.bn_txn.register(self.store, "bn_txn")

        self.bn_tree = BatchNormParams.create(self.tree_width, cfg.bn_momentum, cfg.bn_epsilon)
        self.bn_tree_g = self.bn_tree.register(self.store, "bn_tree")

        concat_width = self.tree_width
        if self.has_streams:
            concat_width += self.click_block.out_dim + self.txn_block.out_dim
        self.concat_width = concat_width
        s1 = np.sqrt(6.0 / (concat_width + cfg.mlp_hidden))
        self.W1, self.W1_g = self.store.register(
            "mlp.W1", rng.uniform(-s1, s1, size=(concat_width, cfg.mlp_hidden)))
        self.b1, self.b1_g = self.store.register("mlp.b1", np.zeros(cfg.mlp_hidden))
        s2 = np.sqrt(6.0 / (cfg.mlp_hidden + 1))
        self.W2, self.W2_g = self.store.register(
            "mlp.W2", rng.uniform(-s2, s2, size=cfg.mlp_hidden))
        self.b2, self.b2_g = self.store.register("mlp.b2", np.zeros(1))

    # -- stream inputs -----------------------------------------------------

    def _click_inputs(self, sb: StreamBatch) -> np.ndarray:
        return self.click_table[sb.ids]

    def _txn_inputs(self, sb: StreamBatch) -> np.ndarray:
        cfg = self.cfg
        # flatten (attr, id) -> one row of the packed table
        flat = sb.ids + (np.arange(cfg.n_txn_attrs) * cfg.txn_vocab)[None, None, :]
        emb = self.txn_table[flat]  # (B, T, A, e)
        B, T = flat.shape[:2]
        return emb.reshape(B, T, cfg.n_txn_attrs * cfg.txn_attr_embed_dim)

    # -- forward / backward --------------------------------------------------

    def _forward(self, batch: ModelBatch, mode: str, update_running: bool):
        parts, caches = [], {}
        if self.has_streams:
            for name, block, sb, bn, bn_g in (
                    ("click", self.click_block, batch.click, self.bn_click, self.bn_click_g),
                    ("txn", self.txn_block, batch.txn, self.bn_txn, self.bn_txn_g)):
                X = self._click_inputs(sb) if name == "click" else self._txn_inputs(sb)
                H, enc_cache = block.encode(X, sb)
                pooled, pool_caches = block.pool(H, sb)
                Y, bn_cache = batch_norm_forward(pooled, bn, mode, update_running)
                parts.append(Y)
                caches[name] = {"X": X, "H": H, "enc": enc_cache,
                                "pool": pool_caches, "bn": bn_cache, "sb": sb}
        Yt, bn_tree_cache = batch_norm_forward(batch.tree_emb, self.bn_tree,
                                               mode, update_running)
        parts.append(Yt)
        caches["tree_bn"] = bn_tree_cache
        Z = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]
        A1 = Z @ self.W1 + self.b1
        T1 = np.tanh(A1)
        logits = T1 @ self.W2 + self.b2[0]
        scores = sigmoid(logits)
        caches.update({"Z": Z, "T1": T1, "scores": scores})
        return scores, caches

    def _backward(self, dlogits: np.ndarray, caches: dict) -> None:
        Z, T1 = caches["Z"], caches["T1"]
        dT1 = dlogits[:, None] * self.W2[None, :]
        self.W2_g += T1.T @ dlogits
        self.b2_g += dlogits.sum(keepdims=True)
        dA1 = dT1 * (1.0 - T1 * T1)
        self.W1_g += Z.T @ dA1
        self.b1_g += dA1.sum(axis=0)
        dZ = dA1 @ self.W1.T
        col = 0
        if self.has_streams:
            for name, block, bn, bn_g in (
                    ("click", self.click_block, self.bn_click, self.bn_click_g),
                    ("txn", self.txn_block, self.bn_txn, self.bn_txn_g)):
                c = caches[name]
                w = block.out_dim
                dPooled = batch_norm_backward(dZ[:, col:col + w], c["bn"], bn, bn_g)
                col += w
                dH = block.pool_backward(dPooled, c["pool"], c["H"], c["sb"])
                dX = block.encode_backward(dH, c["enc"])
                if name == "click":
                    _scatter_add_rows(self.click_table_g, c["sb"].ids, dX)
                else:
                    cfg = self.cfg
                    flat = c["sb"].ids + (np.arange(cfg.n_txn_attrs) * cfg.txn_vocab)[None, None, :]
                    B, T = flat.shape[:2]
                    dEmb = dX.reshape(B, T, cfg.n_txn_attrs, cfg.txn_attr_embed_dim)
                    _scatter_add_rows(self.txn_table_g, flat, dEmb)
        # tree branch: batch-norm params learn, the frozen ensemble does not
        batch_norm_backward(dZ[:, col:], caches["tree_bn"], self.bn_tree, self.bn_tree_g)

    # -- public API ----------------------------------------------------------

    def clamp_params(self) -> None:
        """Project constrained parameters back into their valid box.
        The periodic-gate period gradient scales with (elapsed time /
        period), which can be enormous; clamping log_tau keeps the
        period inside [tau_min, tau_max] and exp() finite."""
        if not self.has_streams:
            return
        lo, hi = np.log(self.cfg.tau_min), np.log(self.cfg.tau_max)
        for block in (self.click_block, self.txn_block):
            if block.cell_kind == "plstm":
                np.clip(block.gate.log_tau, lo, hi, out=block.gate.log_tau)

    def loss_and_backward(self, batch: ModelBatch, update_running: bool = True) -> float:
        """Mean binary cross-entropy over the batch; populates gradients
        for every trainable entry of the store."""
        if batch.size == 0:
            raise ValueError("batch must be nonempty")
        if np.any((batch.labels != 0.0) & (batch.labels != 1.0)):
            raise ValueError("labels must be 0 or 1")
        scores, caches = self._forward(batch, "train", update_running)
        y = batch.labels
        s = np.clip(scores, SCORE_CLAMP, 1.0 - SCORE_CLAMP)
        loss = float(-np.mean(y * np.log(s) + (1.0 - y) * np.log(1.0 - s)))
        inside = (scores > SCORE_CLAMP) & (scores < 1.0 - SCORE_CLAMP)
        dlogits = np.where(inside, scores - y, 0.0) / batch.size
        self._backward(dlogits, caches)
        return loss

    def score_batch(self, batch: ModelBatch, mode: str = "infer") -> np.ndarray:
        scores, _ = self._forward(batch, mode, update_running=False)
        return scores

    def forward(self, instance, mode: str = "infer") -> float:
        """Score one instance; deterministic in infer mode."""
        tree_emb = self.ensemble.embed_batch(np.asarray(instance.static)[None, :])
        batch = build_batch([instance], tree_emb, self.cfg)
        return float(self.score_batch(batch, mode=mode)[0])

    def embed_click_stream(self, actions, timestamps) -> np.ndarray:
        """Pooled click-stream embedding (pre batch-norm)."""
        if len(actions) == 0:
            return self.click_block.empty_vec.copy()
        if len(actions) > MAX_CLICKS:
            raise ValueError(f"click stream exceeds {MAX_CLICKS} actions")
        a = np.asarray(actions, dtype=np.int64)
        a = np.where((a >= 0) & (a < self.cfg.click_vocab), a, 0)
        sb = _build_stream([a], [np.asarray(timestamps)], self.cfg.num_buckets)
        X = self._click_inputs(sb)
        H, _ = self.click_block.encode(X, sb)
        pooled, _ = self.click_block.pool(H, sb)
        return pooled[0]

    def embed_txn_stream(self, attrs, timestamps) -> np.ndarray:
        """Pooled transaction-stream embedding (pre batch-norm)."""
        if len(timestamps) == 0:
            return self.txn_block.empty_vec.copy()
        if len(timestamps) > MAX_TXNS:
            raise ValueError(f"transaction stream exceeds {MAX_TXNS} events")
        t = np.asarray(attrs, dtype=np.int64)
        if t.ndim != 2 or t.shape[1] != self.cfg.n_txn_attrs:
            raise DataError(f"each transaction needs exactly {self.cfg.n_txn_attrs} "
                            f"attribute ids, got shape {t.shape}")
        sb = _build_stream([np.clip(t, 0, self.cfg.txn_vocab - 1)],
                           [np.asarray(timestamps)], self.cfg.num_buckets,
                           attr_width=self.cfg.n_txn_attrs)
        X = self._txn_inputs(sb)
        H, _ = self.txn_block.encode(X, sb)
        pooled, _ = self.txn_block.pool(H, sb)
        return pooled[0]
