"""Deterministic synthetic fraud-stream generator and dataset IO.

Every instance is one labeled transaction with three feature groups: a
click stream (2-day window before the event), a transaction-history
stream (10-day window), and a static profile row. Fraud instances plant
three tunable signals scaled by ``signal_strength``:

  * burst click gaps (concentrated below 60 s) just before the event,
    drawn over a small set of risky action ids,
  * shifted categorical distributions on a subset of transaction
    attributes plus inflated amount buckets,
  * a mild mean shift on the leading static features.

With ``signal_strength = 0`` fraud and legitimate instances are drawn
from identical distributions (the null control). Generation is keyed by
(config, seed) only: every instance gets its own PRNG stream derived
from SeedSequence spawn keys, so output bytes are reproducible and
order-independent of any parallel scheduling.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, PolicyError

__all__ = [
    "GenConfig",
    "LabeledInstance",
    "DatasetSplit",
    "generate",
    "truncate_streams",
    "temporal_split",
    "downsample_negatives",
    "format_instance_line",
    "parse_instance_line",
    "write_dataset",
    "read_instances",
    "load_dataset",
]

DAY = 86400


@dataclass
class GenConfig:
    n_users: int = 10000
    instances_per_user_mean: float = 3.0
    fraud_rate_trainval: float = 0.01
    fraud_rate_test: float = 0.001
    signal_strength: float = 1.0
    click_vocab: int = 2300
    txn_vocab: int = 20
    n_txn_attrs: int = 28
    static_dim: int = 89
    horizon_days: int = 150
    train_boundary_day: int = 90
    val_boundary_day: int = 120
    click_window_days: int = 2
    txn_window_days: int = 10
    click_len_mean: float = 25.0
    txn_len_mean: float = 8.0
    max_clicks: int = 200
    max_txns: int = 32
    downsample_keep_rate: float = 0.25

    def validate(self) -> None:
        if self.n_users < 200:
            raise ConfigError(f"n_users must be >= 200, got {self.n_users}")
        for key in ("fraud_rate_trainval", "fraud_rate_test"):
            rate = getattr(self, key)
            if not 0.0 < rate < 0.5:
                raise ConfigError(f"{key} must be in (0, 0.5), got {rate}")
        if self.signal_strength < 0.0:
            raise ConfigError(f"signal_strength must be >= 0, got {self.signal_strength}")
        if not 0 < self.train_boundary_day < self.val_boundary_day < self.horizon_days:
            raise ConfigError(
                "boundaries must satisfy 0 < train_boundary_day < val_boundary_day "
                f"< horizon_days, got {self.train_boundary_day}/{self.val_boundary_day}"
                f"/{self.horizon_days}")
        if not 0.0 < self.downsample_keep_rate <= 1.0:
            raise ConfigError(
                f"downsample_keep_rate must be in (0, 1], got {self.downsample_keep_rate}")
        for key in ("click_vocab", "txn_vocab", "n_txn_attrs", "static_dim",
                    "max_clicks", "max_txns"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1, got {getattr(self, key)}")


@dataclass
class LabeledInstance:
    user_id: int
    label: int
    event_time: int
    static: np.ndarray
    click_actions: np.ndarray
    click_ts: np.ndarray
    txn_attrs: np.ndarray  # (n_events, n_txn_attrs) categorical ids
    txn_ts: np.ndarray


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def parts(self):
        return (("train", self.train), ("validation", self.validation), ("test", self.test))

    def manifest(self) -> dict:
        out = {}
        for name, insts in self.parts():
            fraud = sum(int(i.label) for i in insts)
            out[f"{name}_total"] = len(insts)
            out[f"{name}_fraud"] = fraud
            out[f"{name}_nonfraud"] = len(insts) - fraud
        return out


def _instance_rng(seed: int, user_id: int, idx: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(user_id, idx))))


def _user_rng(seed: int, user_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(user_id,))))


def _legit_click_gaps(rng: np.random.Generator, n: int) -> np.ndarray:
    # short in-session gaps with an occasional overnight break
    gaps = rng.lognormal(math.log(240.0), 1.2, size=n) + 1.0
    diurnal = rng.random(n) < 0.08
    gaps[diurnal] = np.maximum(3600.0, rng.normal(43200.0, 7200.0, size=n)[diurnal])
    return gaps


RISKY_ACTIONS = 50          # tail ids reserved for account-change pages
STATIC_SHIFT_DIMS = 10
TXN_SHIFT_ATTRS = 6


def _click_stream(rng: np.random.Generator, cfg: GenConfig, event_time: int,
                  fraud: bool):
    s = cfg.signal_strength if fraud else 0.0
    n = 1 + rng.poisson(max(cfg.click_len_mean - 1.0, 0.0))
    n_burst = min(n, 6 + rng.poisson(6)) if fraud else 0
    gaps = _legit_click_gaps(rng, n)
    if fraud:
        burst = rng.exponential(15.0, size=n)
        take = (np.arange(n) < n_burst) & (rng.random(n) < s)
        gaps = np.where(take, burst, gaps)
    # walk backwards from just before the event; index 0 is the newest click
    t_desc = event_time - 1 - np.cumsum(np.floor(gaps)).astype(np.int64)
    keep = t_desc > event_time - cfg.click_window_days * DAY
    t_desc = t_desc[keep]
    if t_desc.size == 0:
        t_desc = np.array([event_time - 1], dtype=np.int64)
    m = t_desc.size
    u = rng.random(m)
    actions = (cfg.click_vocab * u ** 2.5).astype(np.int64)
    if fraud:
        risky = (np.arange(m) < n_burst) & (rng.random(m) < 0.7 * s)
        risky_ids = cfg.click_vocab - 1 - (rng.random(m) * RISKY_ACTIONS).astype(np.int64)
        actions = np.where(risky, risky_ids, actions)
    actions = np.clip(actions, 0, cfg.click_vocab - 1)
    return actions[::-1].copy(), t_desc[::-1].copy()


def _txn_stream(rng: np.random.Generator, cfg: GenConfig, event_time: int,
                fraud: bool, perms: np.ndarray):
    s = cfg.signal_strength if fraud else 0.0
    n = 1 + rng.poisson(max(cfg.txn_len_mean - 1.0, 0.0))
    window = cfg.txn_window_days * DAY
    first_gap = min(rng.exponential(0.5 * DAY), window - 2.0)
    gaps = rng.lognormal(math.log(6 * 3600.0), 1.0, size=n) + 1.0
    gaps[0] = first_gap
    if fraud:
        quick = (np.arange(n) < 3) & (rng.random(n) < 0.5 * s)
        gaps = np.where(quick, rng.exponential(600.0, size=n) + 1.0, gaps)
    t_desc = event_time - 1 - np.cumsum(np.floor(gaps)).astype(np.int64)
    keep = t_desc > event_time - window
    t_desc = t_desc[keep]
    if t_desc.size == 0:
        t_desc = np.array([event_time - 1 - int(first_gap)], dtype=np.int64)
    m = t_desc.size
    A, V = cfg.n_txn_attrs, cfg.txn_vocab
    base = (V * rng.random((m, A)) ** 2.0).astype(np.int64)
    if fraud:
        shifted = (base + V // 2) % V
        hit = rng.random((m, A)) < 0.8 * s
        hit[:, TXN_SHIFT_ATTRS:] = False
        base = np.where(hit, shifted, base)
    attrs = perms[np.arange(A)[None, :], np.clip(base, 0, V - 1)]
    # last attribute is the bucketized amount
    amount = np.clip(rng.lognormal(1.5, 0.8, size=m), 0, V - 1).astype(np.int64)
    if fraud:
        inflate = rng.random(m) < 0.6 * s
        amount = np.where(inflate, np.clip(amount + V // 3, 0, V - 1), amount)
    attrs[:, A - 1] = amount
    return attrs[::-1].copy(), t_desc[::-1].copy()


def generate(config: GenConfig, seed: int) -> DatasetSplit:
    """Generate users, streams, statics and labels; return the temporal
    split. Downsampling is a separate step."""
    config.validate()
    cfg = config
    perm_rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(987654321,))))
    perms = np.vstack([perm_rng.permutation(cfg.txn_vocab) for _ in range(cfg.n_txn_attrs)])
    static_shift = np.zeros(cfg.static_dim)
    static_shift[:min(STATIC_SHIFT_DIMS, cfg.static_dim)] = 0.45

    t_min = cfg.txn_window_days * DAY
    t_max = cfg.horizon_days * DAY
    val_cut = cfg.val_boundary_day * DAY
    instances = []
    for user_id in range(cfg.n_users):
        urng = _user_rng(seed, user_id)
        base_static = urng.normal(0.0, 1.0, size=cfg.static_dim)
        n_inst = 1 + urng.poisson(max(cfg.instances_per_user_mean - 1.0, 0.0))
        for idx in range(n_inst):
            rng = _instance_rng(seed, user_id, idx)
            event_time = int(rng.integers(t_min, t_max))
            rate = cfg.fraud_rate_test if event_time >= val_cut else cfg.fraud_rate_trainval
            fraud = bool(rng.random() < rate)
            s = cfg.signal_strength if fraud else 0.0
            static = base_static + rng.normal(0.0, 0.15, size=cfg.static_dim)
            if fraud:
                static = static + s * static_shift
            clicks, click_ts = _click_stream(rng, cfg, event_time, fraud)
            attrs, txn_ts = _txn_stream(rng, cfg, event_time, fraud, perms)
            inst = LabeledInstance(
                user_id=user_id, label=int(fraud), event_time=event_time,
                static=static, click_actions=clicks, click_ts=click_ts,
                txn_attrs=attrs, txn_ts=txn_ts)
            instances.append(truncate_streams(inst, cfg.max_clicks, cfg.max_txns))
    boundaries = (cfg.train_boundary_day * DAY, val_cut)
    return temporal_split(instances, boundaries)


def truncate_streams(instance: LabeledInstance, max_clicks: int = 200,
                     max_txns: int = 32) -> LabeledInstance:
    """Keep the most recent events when a stream is over the cap."""
    inst = instance
    if len(inst.click_ts) > max_clicks:
        inst = dataclasses.replace(
            inst, click_actions=inst.click_actions[-max_clicks:],
            click_ts=inst.click_ts[-max_clicks:])
    if len(inst.txn_ts) > max_txns:
        inst = dataclasses.replace(
            inst, txn_attrs=inst.txn_attrs[-max_txns:], txn_ts=inst.txn_ts[-max_txns:])
    return inst


def temporal_split(instances, boundaries) -> DatasetSplit:
    """Partition by event time. An instance exactly on a boundary goes
    to the later split."""
    b1, b2 = boundaries
    if not b1 < b2:
        raise ValueError(f"boundaries must be strictly increasing, got {b1} >= {b2}")
    split = DatasetSplit()
    for inst in instances:
        if inst.event_time < b1:
            split.train.append(inst)
        elif inst.event_time < b2:
            split.validation.append(inst)
        else:
            split.test.append(inst)
    if not split.validation or not split.test:
        warnings.warn("temporal_split produced an empty validation or test part")
    return split


def downsample_negatives(split: DatasetSplit, keep_rate: float, seed: int,
                         parts=("train", "validation")) -> DatasetSplit:
    """Keep every fraud instance; keep each non-fraud independently with
    probability keep_rate. The test part must keep its natural
    imbalance, so requesting it is a policy error."""
    if not 0.0 < keep_rate <= 1.0:
        raise ValueError(f"keep_rate must be in (0, 1], got {keep_rate}")
    if "test" in parts:
        raise PolicyError("downsampling the test split would break its natural imbalance")
    out = DatasetSplit(train=list(split.train), validation=list(split.validation),
                       test=list(split.test))
    if keep_rate == 1.0:
        return out
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed)))
    for part in parts:
        insts = getattr(out, part)
        kept = [i for i in insts if i.label == 1 or rng.random() < keep_rate]
        setattr(out, part, kept)
    return out


# ---------------------------------------------------------------------------
# file grammar
# ---------------------------------------------------------------------------
# one instance per line:
#   label<TAB>event_time<TAB>static(comma-separated reals)
#        <TAB>clicks(action:ts;...)<TAB>txns(a1,...,a28:ts;...)
# floats are rendered with repr() (shortest round-trip), so bytes are
# deterministic and parse back exactly.


def format_instance_line(inst: LabeledInstance) -> str:
    static = ",".join(repr(float(x)) for x in inst.static)
    clicks = ";".join(f"{int(a)}:{int(t)}"
                      for a, t in zip(inst.click_actions, inst.click_ts))
    txns = ";".join(",".join(str(int(v)) for v in row) + f":{int(t)}"
                    for row, t in zip(inst.txn_attrs, inst.txn_ts))
    return f"{inst.label}\t{inst.event_time}\t{static}\t{clicks}\t{txns}"


def parse_instance_line(line: str, user_id: int = -1) -> LabeledInstance:
    fields = line.rstrip("\n").split("\t")
    if len(fields) != 5:
        raise DataError(f"expected 5 tab-separated fields, got {len(fields)}")
    label, event_time = int(fields[0]), int(fields[1])
    static = np.array([float(x) for x in fields[2].split(",")]) if fields[2] else np.zeros(0)
    if fields[3]:
        pairs = [p.split(":") for p in fields[3].split(";")]
        click_actions = np.array([int(p[0]) for p in pairs], dtype=np.int64)
        click_ts = np.array([int(p[1]) for p in pairs], dtype=np.int64)
    else:
        click_actions = np.zeros(0, dtype=np.int64)
        click_ts = np.zeros(0, dtype=np.int64)
    if fields[4]:
        rows, ts = [], []
        for ev in fields[4].split(";"):
            attrs_part, t = ev.rsplit(":", 1)
            rows.append([int(v) for v in attrs_part.split(",")])
            ts.append(int(t))
        txn_attrs = np.array(rows, dtype=np.int64)
        txn_ts = np.array(ts, dtype=np.int64)
    else:
        txn_attrs = np.zeros((0, 0), dtype=np.int64)
        txn_ts = np.zeros(0, dtype=np.int64)
    return LabeledInstance(user_id=user_id, label=label, event_time=event_time,
                           static=static, click_actions=click_actions,
                           click_ts=click_ts, txn_attrs=txn_attrs, txn_ts=txn_ts)


def config_hash(cfg: GenConfig) -> str:
    text = "\n".join(f"{f.name}={getattr(cfg, f.name)}" for f in dataclasses.fields(cfg))
    return hashlib.sha256(text.encode()).hexdigest()


def write_dataset(split: DatasetSplit, out_dir, cfg: GenConfig) -> None:
    import os
    os.makedirs(out_dir, exist_ok=True)
    for name, insts in split.parts():
        with open(os.path.join(out_dir, f"{name}.tsv"), "w") as fh:
            for inst in insts:
                fh.write(format_instance_line(inst))
                fh.write("\n")
    manifest = split.manifest()
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write("fraudseq-manifest v1\n")
        fh.write(f"config_hash={config_hash(cfg)}\n")
        for key in sorted(manifest):
            fh.write(f"{key}={manifest[key]}\n")


def read_instances(path) -> list:
    out = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            if line.strip():
                out.append(parse_instance_line(line, user_id=i))
    return out


def load_dataset(dataset_dir) -> DatasetSplit:
    import os
    parts = {}
    for name in ("train", "validation", "test"):
        path = os.path.join(dataset_dir, f"{name}.tsv")
        if not os.path.exists(path):
            raise DataError(f"dataset is missing {name}.tsv in {dataset_dir}")
        parts[name] = read_instances(path)
    return DatasetSplit(**parts)
