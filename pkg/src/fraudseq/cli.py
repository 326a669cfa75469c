"""Command-line entry point.

Commands: gen-data, train, eval, bench, gradcheck. Every command with
identical flags, config, and seed produces byte-identical primary
outputs (CSVs, text checkpoints). Exit codes: 0 success, 1 usage or
config error, 2 data error, 3 numeric/divergence error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import (
    config_text,
    gen_config_from,
    load_config,
    model_config_from,
    parse_float_list,
    parse_int_list,
    parse_overrides,
    train_config_from,
)
from .datagen import (
    DatasetSplit,
    LabeledInstance,
    downsample_negatives,
    generate,
    load_dataset,
    write_dataset,
)
from .errors import ConfigError, DataError, FraudseqError, NumericError, PolicyError
from .fusion import VARIANTS, FusionModel, ModelConfig, build_batch
from .numeric import ParamStore, finite_diff_check
from .training import (
    DataCache,
    TrainConfig,
    evaluate,
    train,
    write_metrics_csv,
)
from .trees import TreeEnsemble, fit_gbdt

BENCH_COLUMNS = ("variant", "f1", "auc", "ratp_0.05", "ratp_0.01",
                 "learning_rate", "best_iteration", "status")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _check_variant(tag: str) -> str:
    if tag not in VARIANTS:
        raise ConfigError(f"unknown variant {tag!r}; valid tags: {', '.join(VARIANTS)}")
    return tag


def _fit_ensemble(split: DatasetSplit, cfg: dict) -> TreeEnsemble:
    X = np.vstack([inst.static for inst in split.train])
    y = np.array([inst.label for inst in split.train], dtype=np.float64)
    return fit_gbdt(X, y, n_trees=cfg["trees.n_trees"],
                    max_depth=cfg["trees.max_depth"], shrinkage=cfg["trees.shrinkage"])


def _save_checkpoint(out_dir, model: FusionModel, cfg: dict, variant: str, seed: int) -> None:
    os.makedirs(out_dir, exist_ok=True)
    model.store.save_text(os.path.join(out_dir, "params.txt"))
    model.ensemble.save_text(os.path.join(out_dir, "trees.txt"))
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(config_text(cfg))
    with open(os.path.join(out_dir, "run.txt"), "w") as fh:
        fh.write(f"variant={variant}\nseed={seed}\n")


def _load_checkpoint(ckpt_dir):
    cfg = load_config(os.path.join(ckpt_dir, "config.txt"))
    run = {}
    with open(os.path.join(ckpt_dir, "run.txt")) as fh:
        for line in fh:
            if "=" in line:
                key, val = line.strip().split("=", 1)
                run[key] = val
    ensemble = TreeEnsemble.load_text(os.path.join(ckpt_dir, "trees.txt"))
    model = FusionModel(model_config_from(cfg, run["variant"], int(run["seed"])), ensemble)
    saved = ParamStore.load_text(os.path.join(ckpt_dir, "params.txt"))
    model.store.load_values_from(saved)
    return model, cfg, run


def _train_one(variant: str, cache: DataCache, cfg: dict, seed: int, lr: float):
    model = FusionModel(model_config_from(cfg, variant, seed), cache.ensemble)
    tc = train_config_from(cfg, seed)
    tc.learning_rate = lr
    result = train(model, cache, tc)
    return model, result


def _train_select_lr(variant: str, cache: DataCache, cfg: dict, seed: int):
    """Train at each learning rate of the grid; keep the one with the
    best validation RATP@0.05 (ties by AUC, then by lower lr order)."""
    grid = parse_float_list(cfg["train.lr_grid"]) if cfg["bench.select_lr"] \
        else [cfg["train.learning_rate"]]
    best = None
    for lr in grid:
        model, result = _train_one(variant, cache, cfg, seed, lr)
        key = (result.best_val_ratp, result.best_val_auc)
        if best is None or key > best[0]:
            best = (key, lr, model, result)
    _, lr, model, result = best
    return model, result, lr


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, parse_overrides(args.set))
    gen_cfg = gen_config_from(cfg)
    split = generate(gen_cfg, args.seed)
    raw_counts = split.manifest()
    if gen_cfg.downsample_keep_rate < 1.0:
        split = downsample_negatives(split, gen_cfg.downsample_keep_rate, args.seed)
    write_dataset(split, args.out, gen_cfg)
    with open(os.path.join(args.out, "gen_config.txt"), "w") as fh:
        fh.write(config_text(cfg))
    counts = split.manifest()
    for name, _ in split.parts():
        print(f"{name}: {counts[f'{name}_total']} instances "
              f"({counts[f'{name}_fraud']} fraud; raw {raw_counts[f'{name}_total']})")
    print(f"dataset written to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .plots import save_convergence_figure
    from .training import write_metrics_csv

    variant = _check_variant(args.variant)
    cfg = load_config(args.config, parse_overrides(args.set))
    split = load_dataset(args.dataset)
    ensemble = _fit_ensemble(split, cfg)
    cache = DataCache(split, ensemble)
    model, result = _train_one(variant, cache, cfg, args.seed,
                               cfg["train.learning_rate"])
    os.makedirs(args.out, exist_ok=True)
    write_metrics_csv(result.reports, os.path.join(args.out, "metrics.csv"))
    save_convergence_figure(result.reports, os.path.join(args.out, "metrics.png"),
                            title=f"{variant} (seed {args.seed})")
    _save_checkpoint(os.path.join(args.out, "checkpoint"), model, cfg, variant, args.seed)
    test = evaluate(model, cache, "test")
    with open(os.path.join(args.out, "test_metrics.csv"), "w") as fh:
        fh.write("variant,f1,auc,ratp_0.05,ratp_0.01,learning_rate,best_iteration\n")
        fh.write(f"{variant},{test['f1']:.6f},{test['auc']:.6f},"
                 f"{test['ratp_0.05']:.6f},{test['ratp_0.01']:.6f},"
                 f"{cfg['train.learning_rate']:g},{result.best_iteration}\n")
    status = "diverged (kept last good checkpoint)" if result.diverged else "ok"
    print(f"{variant}: test AUC={test['auc']:.4f} F1={test['f1']:.4f} "
          f"RATP@0.05={test['ratp_0.05']:.4f} RATP@0.01={test['ratp_0.01']:.4f} [{status}]")
    print(f"outputs written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    model, cfg, run = _load_checkpoint(args.checkpoint)
    split = load_dataset(args.dataset)
    cache = DataCache(split, model.ensemble)
    metrics = evaluate(model, cache, args.split)
    line = (f"{run['variant']},{metrics['f1']:.6f},{metrics['auc']:.6f},"
            f"{metrics['ratp_0.05']:.6f},{metrics['ratp_0.01']:.6f}")
    print("variant,f1,auc,ratp_0.05,ratp_0.01")
    print(line)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.csv"), "w") as fh:
            fh.write("variant,f1,auc,ratp_0.05,ratp_0.01\n")
            fh.write(line + "\n")
    return 0


def _format_bench_text(rows) -> str:
    widths = [max(len(str(row[i])) for row in ([BENCH_COLUMNS] + rows))
              for i in range(len(BENCH_COLUMNS))]
    lines = []
    for row in [BENCH_COLUMNS] + rows:
        lines.append("  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def cmd_bench(args) -> int:
    from .plots import save_bench_figure, save_sweep_figure

    cfg = load_config(args.config, parse_overrides(args.set))
    variant_list = [v.strip() for v in
                    (args.variants or cfg["bench.variants"]).split(",") if v.strip()]
    for tag in variant_list:
        _check_variant(tag)
    split = load_dataset(args.dataset)
    ensemble = _fit_ensemble(split, cfg)
    cache = DataCache(split, ensemble)
    os.makedirs(args.out, exist_ok=True)

    rows, series = [], {}
    for variant in variant_list:
        try:
            model, result, lr = _train_select_lr(variant, cache, cfg, args.seed)
            test = evaluate(model, cache, "test")
            status = "diverged" if result.diverged else "ok"
            rows.append((variant, f"{test['f1']:.6f}", f"{test['auc']:.6f}",
                         f"{test['ratp_0.05']:.6f}", f"{test['ratp_0.01']:.6f}",
                         f"{lr:g}", str(result.best_iteration), status))
            series[variant] = result.reports
            write_metrics_csv(result.reports,
                              os.path.join(args.out, f"metrics_{variant}.csv"))
        except FraudseqError as exc:
            rows.append((variant, "nan", "nan", "nan", "nan", "nan", "0",
                         f"error:{type(exc).__name__}"))
            series[variant] = []
        print(_format_bench_text([rows[-1]]).splitlines()[-1])

    with open(os.path.join(args.out, "bench.csv"), "w") as fh:
        fh.write(",".join(BENCH_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    with open(os.path.join(args.out, "bench.txt"), "w") as fh:
        fh.write(_format_bench_text(rows))
    save_bench_figure(series, os.path.join(args.out, "bench_convergence.png"))

    if args.sweep:
        hidden_set = parse_int_list(cfg["bench.sweep_hidden"])
        dim_set = parse_int_list(cfg["bench.sweep_time_dims"])
        sweep_rows, sweep_csv = [], []
        for h in hidden_set:
            for g in dim_set:
                scfg = dict(cfg)
                scfg["model.hidden"] = h
                scfg["model.time_embed_dim"] = g
                model, result = _train_one(args.sweep_variant, cache, scfg,
                                           args.seed, cfg["train.learning_rate"])
                test = evaluate(model, cache, "test")
                sweep_rows.append((h, g, test["ratp_0.05"]))
                sweep_csv.append(f"{h},{g},{test['f1']:.6f},{test['auc']:.6f},"
                                 f"{test['ratp_0.05']:.6f},{test['ratp_0.01']:.6f}")
        with open(os.path.join(args.out, "sweep.csv"), "w") as fh:
            fh.write("hidden,time_embed_dim,f1,auc,ratp_0.05,ratp_0.01\n")
            fh.write("\n".join(sweep_csv) + "\n")
        save_sweep_figure(sweep_rows, hidden_set, dim_set,
                          os.path.join(args.out, "sweep.png"))

    print(f"bench outputs written to {args.out}")
    return 0


def _toy_instances(rng: np.random.Generator, n: int, mc: ModelConfig):
    out = []
    for i in range(n):
        n_c = int(rng.integers(2, 6))
        n_t = int(rng.integers(1, 4))
        out.append(LabeledInstance(
            user_id=i, label=i % 2,
            event_time=10_000,
            static=rng.normal(0.0, 1.0, size=8),
            click_actions=rng.integers(0, mc.click_vocab, size=n_c),
            click_ts=np.sort(rng.integers(9_000, 9_400, size=n_c)),
            txn_attrs=rng.integers(0, mc.txn_vocab, size=(n_t, mc.n_txn_attrs)),
            txn_ts=np.sort(rng.integers(6_000, 8_000, size=n_t)),
        ))
    return out


def gradcheck_model(variant: str, seed: int = 7, eps: float = 1e-4, tol: float = 1e-4,
                    max_coords: int = 60):
    """Finite-difference check of a shrunken model (hidden 4, batch 4)."""
    mc = ModelConfig(variant=variant, hidden=4, click_embed_dim=5, txn_attr_embed_dim=3,
                     n_txn_attrs=4, click_vocab=12, txn_vocab=5, time_embed_dim=3,
                     attention_width=4, num_buckets=8, mlp_hidden=6,
                     tau_min=600.0, tau_max=3600.0, seed=seed)
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, 1.0, size=(16, 8))
    y = (rng.random(16) < 0.5).astype(np.float64)
    y[:2] = [0.0, 1.0]  # both classes present
    ensemble = fit_gbdt(X, y, n_trees=3, max_depth=2, shrinkage=0.1)
    model = FusionModel(mc, ensemble)
    insts = _toy_instances(rng, 4, mc)
    tree_emb = ensemble.embed_batch(np.vstack([i.static for i in insts]))
    batch = build_batch(insts, tree_emb, mc)
    loss_fn = lambda: model.loss_and_backward(batch, update_running=False)
    # a couple of warmup steps move the check off the symmetric
    # zero-bias init, where several gradients are exactly zero
    from .training import sgd_step
    for _ in range(2):
        model.store.zero_grads()
        loss_fn()
        sgd_step(model.store, 0.05, 0.0)
    return finite_diff_check(loss_fn, model.store, eps=eps, tol=tol,
                             max_coords_per_param=max_coords,
                             rng=np.random.default_rng(seed))


def cmd_gradcheck(args) -> int:
    tags = [_check_variant(args.variant)] if args.variant else list(VARIANTS)
    failed = []
    for tag in tags:
        report = gradcheck_model(tag, seed=args.seed)
        verdict = "PASS" if report.passed else "FAIL"
        print(f"{tag}: worst {report.worst_param} "
              f"rel_err={report.worst_err:.3e} tol={report.tol:g} [{verdict}]")
        if args.verbose:
            for line in report.format_lines():
                print(f"    {line}")
        if not report.passed:
            failed.append(tag)
    if failed:
        print(f"gradient check FAILED for: {', '.join(failed)}")
        return 3
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fraudseq",
                     description="Time-attention fraud-sequence toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=False, out=True):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key")
        if dataset:
            p.add_argument("--dataset", required=True, help="dataset directory")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one variant")
    common(p, dataset=True)
    p.add_argument("--variant", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test", choices=["train", "validation", "test"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="train and compare all variants")
    common(p, dataset=True)
    p.add_argument("--variants", default=None, help="comma-separated variant tags")
    p.add_argument("--sweep", action="store_true",
                   help="also sweep hidden units x time-embedding dims")
    p.add_argument("--sweep-variant", default="bilstm_timeattn")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--variant", default=None)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, PolicyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
