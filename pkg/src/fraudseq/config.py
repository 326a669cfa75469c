"""Flat key=value run configuration.

Config files are plain text, one ``key=value`` per line, ``#`` comments
allowed. Keys are namespaced (data.*, trees.*, model.*, train.*,
bench.*); unknown keys are rejected. CLI flags and ``--set key=value``
overrides take precedence over file values. The full schema with
defaults is ``DEFAULTS`` below and is documented in the README.
"""

from __future__ import annotations

from .datagen import GenConfig
from .errors import ConfigError
from .fusion import ModelConfig
from .training import TrainConfig

__all__ = ["DEFAULTS", "load_config", "config_text", "parse_overrides",
           "gen_config_from", "model_config_from", "train_config_from",
           "parse_float_list", "parse_int_list"]

DEFAULTS = {
    # synthetic data generator
    "data.n_users": 20000,
    "data.instances_per_user_mean": 3.0,
    "data.fraud_rate_trainval": 0.01,
    "data.fraud_rate_test": 0.001,
    "data.signal_strength": 1.0,
    "data.click_vocab": 2300,
    "data.txn_vocab": 20,
    "data.n_txn_attrs": 28,
    "data.static_dim": 89,
    "data.horizon_days": 150,
    "data.train_boundary_day": 90,
    "data.val_boundary_day": 120,
    "data.click_window_days": 2,
    "data.txn_window_days": 10,
    "data.click_len_mean": 25.0,
    "data.txn_len_mean": 8.0,
    "data.max_clicks": 200,
    "data.max_txns": 32,
    "data.downsample_keep_rate": 0.25,
    # boosted trees (fit once, frozen)
    "trees.n_trees": 100,
    "trees.max_depth": 5,
    "trees.shrinkage": 0.1,
    # network
    "model.hidden": 16,
    "model.click_embed_dim": 32,
    "model.txn_attr_embed_dim": 16,
    "model.time_embed_dim": 16,
    "model.attention_width": 64,
    "model.num_buckets": 1441,
    "model.mlp_hidden": 128,
    "model.r_on": 0.05,
    "model.leak_alpha": 0.001,
    "model.tau_min": 60.0,
    "model.tau_max": 172800.0,
    "model.bn_momentum": 0.9,
    "model.bn_epsilon": 1e-5,
    # training
    "train.learning_rate": 0.01,
    "train.lr_grid": "0.1,0.01,0.001",
    "train.batch_size": 512,
    "train.l2": 1e-5,
    "train.max_iterations": 150,
    "train.eval_every": 25,
    # bench
    "bench.variants": "gbdt,gru,bilstm,bilstm_selfattn,plstm,tlstm,bilstm_timeattn,gru_timeattn",
    "bench.select_lr": True,
    "bench.sweep_hidden": "64,128,256",
    "bench.sweep_time_dims": "8,16,32,64",
}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}")


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, overlaid with a config file, overlaid with overrides."""
    cfg = dict(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in DEFAULTS:
                    raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
                cfg[key] = _coerce(key, raw)
    for key, raw in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    return cfg


def parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        out[key.strip()] = raw.strip()
    return out


def config_text(cfg: dict) -> str:
    """Canonical snapshot: sorted key=value lines."""
    return "".join(f"{k}={cfg[k]}\n" for k in sorted(cfg))


def parse_float_list(raw: str) -> list[float]:
    return [float(tok) for tok in raw.split(",") if tok.strip()]


def parse_int_list(raw: str) -> list[int]:
    return [int(tok) for tok in raw.split(",") if tok.strip()]


def gen_config_from(cfg: dict) -> GenConfig:
    return GenConfig(
        n_users=cfg["data.n_users"],
        instances_per_user_mean=cfg["data.instances_per_user_mean"],
        fraud_rate_trainval=cfg["data.fraud_rate_trainval"],
        fraud_rate_test=cfg["data.fraud_rate_test"],
        signal_strength=cfg["data.signal_strength"],
        click_vocab=cfg["data.click_vocab"],
        txn_vocab=cfg["data.txn_vocab"],
        n_txn_attrs=cfg["data.n_txn_attrs"],
        static_dim=cfg["data.static_dim"],
        horizon_days=cfg["data.horizon_days"],
        train_boundary_day=cfg["data.train_boundary_day"],
        val_boundary_day=cfg["data.val_boundary_day"],
        click_window_days=cfg["data.click_window_days"],
        txn_window_days=cfg["data.txn_window_days"],
        click_len_mean=cfg["data.click_len_mean"],
        txn_len_mean=cfg["data.txn_len_mean"],
        max_clicks=cfg["data.max_clicks"],
        max_txns=cfg["data.max_txns"],
        downsample_keep_rate=cfg["data.downsample_keep_rate"],
    )


def model_config_from(cfg: dict, variant: str, seed: int) -> ModelConfig:
    return ModelConfig(
        variant=variant,
        hidden=cfg["model.hidden"],
        click_embed_dim=cfg["model.click_embed_dim"],
        txn_attr_embed_dim=cfg["model.txn_attr_embed_dim"],
        n_txn_attrs=cfg["data.n_txn_attrs"],
        click_vocab=cfg["data.click_vocab"],
        txn_vocab=cfg["data.txn_vocab"],
        time_embed_dim=cfg["model.time_embed_dim"],
        attention_width=cfg["model.attention_width"],
        num_buckets=cfg["model.num_buckets"],
        mlp_hidden=cfg["model.mlp_hidden"],
        r_on=cfg["model.r_on"],
        leak_alpha=cfg["model.leak_alpha"],
        tau_min=cfg["model.tau_min"],
        tau_max=cfg["model.tau_max"],
        bn_momentum=cfg["model.bn_momentum"],
        bn_epsilon=cfg["model.bn_epsilon"],
        seed=seed,
    )


def train_config_from(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg["train.learning_rate"],
        batch_size=cfg["train.batch_size"],
        l2=cfg["train.l2"],
        max_iterations=cfg["train.max_iterations"],
        eval_every=cfg["train.eval_every"],
        seed=seed,
    )
