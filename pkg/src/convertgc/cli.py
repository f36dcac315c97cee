"""Command-line entry point: ``convertgc <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime failure (IO, divergence, failed check),
2 usage error.  Human-readable tables go to stdout; ``--json PATH`` writes
the machine-readable form of the same numbers.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import cluster
from .graph import AUGMENTATIONS, AugmentationSpec, DatasetError, SbmConfig, generate_sbm, load_dataset, save_dataset
from .losses import SEMANTIC_VARIANTS
from .nn import load_checkpoint, save_checkpoint
from .pipeline import (
    ABLATION_VARIANTS,
    METRICS,
    SWEEPABLE,
    TrainConfig,
    TrainingDiverged,
    ablation_run,
    check_gradients,
    default_lr,
    dumps_json,
    evaluate,
    run_repeated,
    save_embeddings,
    sweep,
    write_atomic,
)

DATA_ENV = "CONVERTGC_DATA"


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_train_flags(p: argparse.ArgumentParser, runs_default: int | None = 10) -> None:
    p.add_argument("--dataset", required=True, help=f"dataset directory, or a name under ${DATA_ENV}")
    p.add_argument("--config", help="JSON file of TrainConfig fields (overridden by flags)")
    g = p.add_argument_group("training")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--tau", type=float)
    g.add_argument("--lr", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--high-conf-epoch", type=int)
    g.add_argument("--filter-layers", type=int)
    g.add_argument("--hidden", type=_int_list, help="encoder hidden widths, e.g. 500 or 256,128")
    g.add_argument("--seed", type=int)
    g.add_argument("--augmentation", choices=AUGMENTATIONS)
    g.add_argument("--aug-rate", type=float, help="mask/remove/add rate (default 0.1)")
    g.add_argument("--teleport", type=float, help="PPR teleport for diffusion (default 0.1)")
    g.add_argument("--semantic-variant", choices=SEMANTIC_VARIANTS)
    g.add_argument("--symmetric-infonce", action="store_true", default=None, help="keep the positive pair in the denominator")
    g.add_argument("--no-encoder", action="store_true", default=None, help="embeddings are the normalized attributes")
    g.add_argument("--no-label-matching", action="store_true", default=None)
    g.add_argument("--no-semantic-loss", action="store_true", default=None)
    g.add_argument("--no-reversible", action="store_true", default=None)
    g.add_argument("--cluster-every", type=int)
    g.add_argument("--kmeans-restarts", type=int)
    g.add_argument("--n-clusters", type=int)
    if runs_default is not None:
        g.add_argument("--runs", type=int, default=runs_default)
    p.add_argument("--json", metavar="PATH", help="write machine-readable results here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convertgc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate over repeated seeds")
    _add_train_flags(p)
    p.add_argument("--dump-embeddings", metavar="CSV", help="final consensus embeddings of the last run")
    p.add_argument("--checkpoint", metavar="PATH", help="save the last run's networks and Adam state")

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    _add_train_flags(p, runs_default=None)
    p.add_argument("--checkpoint", metavar="PATH", required=True)
    p.add_argument("--dump-embeddings", metavar="CSV")

    p = sub.add_parser("ablate", help="augmentation and module-removal ablations")
    _add_train_flags(p)
    p.add_argument("--variants", help=f"comma-separated subset of: {', '.join(ABLATION_VARIANTS)}")

    p = sub.add_parser("sweep", help="hyper-parameter sensitivity sweep")
    _add_train_flags(p)
    p.add_argument("--param", choices=SWEEPABLE, required=True)
    p.add_argument("--values", type=_float_list, required=True)

    p = sub.add_parser("gen-synthetic", help="write a stochastic block model dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--nodes-per-block", type=int, default=50)
    p.add_argument("--p-in", type=float, default=0.3)
    p.add_argument("--p-out", type=float, default=0.02)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("grad-check", help="finite-difference check of the full loss")
    p.add_argument("--blocks", type=int, default=3)
    p.add_argument("--nodes-per-block", type=int, default=4)
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--hidden", type=_int_list, default=[16])
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=50, help="coordinates sampled per parameter tensor")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--symmetric-infonce", action="store_true")
    p.add_argument("--json", metavar="PATH")

    p = sub.add_parser("metrics", help="ACC/NMI/ARI/F1 between two label files")
    p.add_argument("true_file")
    p.add_argument("pred_file")
    p.add_argument("--json", metavar="PATH")
    return parser


# ---------------------------------------------------------------- resolution


def resolve_dataset(name: str) -> Path:
    path = Path(name)
    if path.is_dir():
        return path
    root = os.environ.get(DATA_ENV)
    if root and (Path(root) / name).is_dir():
        return Path(root) / name
    raise DatasetError(f"dataset {name!r} not found (checked ./{name} and ${DATA_ENV})")


_FLAG_FIELDS = {
    "alpha": "alpha",
    "beta": "beta",
    "tau": "tau",
    "lr": "lr",
    "epochs": "epochs",
    "high_conf_epoch": "high_conf_epoch",
    "filter_layers": "filter_layers",
    "hidden": "hidden",
    "seed": "seed",
    "semantic_variant": "semantic_variant",
    "cluster_every": "cluster_every",
    "kmeans_restarts": "kmeans_restarts",
    "n_clusters": "n_clusters",
}
_NEGATED = {
    "symmetric_infonce": ("include_positive", True),
    "no_encoder": ("use_encoder", False),
    "no_label_matching": ("use_label_matching", False),
    "no_semantic_loss": ("use_semantic_loss", False),
    "no_reversible": ("use_reversible", False),
}


def resolve_config(args, base: dict | None = None) -> TrainConfig:
    """Dataset defaults < checkpoint config < config file < command-line flags."""
    values: dict = {"lr": default_lr(args.dataset)}
    values.update(base or {})
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
    for flag, fld in _FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[fld] = v
    for flag, (fld, val) in _NEGATED.items():
        if getattr(args, flag, None):
            values[fld] = val
    aug = values.get("augmentation", {})
    aug = {"variant": aug} if isinstance(aug, str) else dict(aug)
    if args.augmentation is not None:
        aug["variant"] = args.augmentation
    if args.aug_rate is not None:
        aug["rate"] = args.aug_rate
    if args.teleport is not None:
        aug["teleport"] = args.teleport
    try:
        values["augmentation"] = AugmentationSpec(**aug)
        return TrainConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


# -------------------------------------------------------------------- output


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def summary_table(rows: dict[str, dict], label: str) -> str:
    """Aligned text table of mean/std per metric; ``rows`` maps name -> summary dict."""
    header = [label] + [f"{m}_mean" for m in METRICS] + [f"{m}_std" for m in METRICS]
    body = [
        [str(name)] + [_fmt(s["summary"][m]["mean"]) for m in METRICS] + [_fmt(s["summary"][m]["std"]) for m in METRICS]
        for name, s in rows.items()
    ]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in [header] + body]
    return "\n".join(lines)


def _emit(args, payload: dict, text: str) -> None:
    print(text)
    if getattr(args, "json", None):
        write_atomic(args.json, dumps_json(payload))


def _echo_config(cfg: TrainConfig, dataset: Path) -> None:
    print(f"dataset: {dataset}")
    print("config: " + json.dumps(cfg.to_dict(), sort_keys=True))


# ------------------------------------------------------------------ commands


def cmd_train(args) -> int:
    path = resolve_dataset(args.dataset)
    cfg = resolve_config(args)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    graph = load_dataset(path)
    _echo_config(cfg, path)
    last: list = []
    summary = run_repeated(graph, cfg, args.runs, keep_last=last)
    payload = summary.to_dict()
    payload["dataset"] = path.name
    text = summary_table({path.name: payload}, "dataset")
    print(f"runs: {len(summary.runs)}  seeds: {summary.seeds}  wall-clock: {summary.seconds:.2f}s", file=sys.stderr)
    _emit(args, payload, text)
    result, E = last[0]
    if args.checkpoint:
        save_checkpoint(args.checkpoint, result.bundle, result.adam, {"config": cfg.replace(seed=summary.seeds[-1]).to_dict()})
    if args.dump_embeddings:
        save_embeddings(args.dump_embeddings, E)
    return 0


def cmd_eval(args) -> int:
    path = resolve_dataset(args.dataset)
    bundle, _, meta = load_checkpoint(args.checkpoint)
    cfg = resolve_config(args, base=meta.get("config"))
    graph = load_dataset(path)
    _echo_config(cfg, path)
    report, E = evaluate(bundle, graph, cfg, return_embeddings=True)
    payload = {"dataset": path.name, "checkpoint": str(args.checkpoint), "metrics": report.as_dict()}
    text = "  ".join(f"{m}={_fmt(v)}" for m, v in report.as_dict().items())
    _emit(args, payload, text)
    if args.dump_embeddings:
        save_embeddings(args.dump_embeddings, E)
    return 0


def cmd_ablate(args) -> int:
    path = resolve_dataset(args.dataset)
    cfg = resolve_config(args)
    variants = ABLATION_VARIANTS if not args.variants else tuple(v.strip() for v in args.variants.split(",") if v.strip())
    unknown = [v for v in variants if v not in ABLATION_VARIANTS]
    if unknown:
        raise UsageError(f"unknown ablation variants {unknown}; choose from {list(ABLATION_VARIANTS)}")
    graph = load_dataset(path)
    _echo_config(cfg, path)
    table = {name: s.to_dict(include_curves=False) for name, s in ablation_run(graph, cfg, variants, args.runs).items()}
    _emit(args, {"dataset": path.name, "variants": table}, summary_table(table, "variant"))
    return 0


def cmd_sweep(args) -> int:
    path = resolve_dataset(args.dataset)
    cfg = resolve_config(args)
    for v in args.values:
        try:
            cfg.replace(**{args.param: v})
        except ValueError as exc:
            raise UsageError(f"--values: {exc}") from None
    graph = load_dataset(path)
    _echo_config(cfg, path)
    table = {repr(v): s.to_dict(include_curves=False) for v, s in sweep(graph, cfg, args.param, args.values, args.runs).items()}
    _emit(args, {"dataset": path.name, "param": args.param, "values": table}, summary_table(table, args.param))
    return 0


def cmd_gen_synthetic(args) -> int:
    try:
        cfg = SbmConfig(args.blocks, args.nodes_per_block, args.p_in, args.p_out, args.dim, args.separation, args.noise, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    graph = generate_sbm(cfg)
    out = save_dataset(graph, args.out)
    print(f"wrote {out}: n={graph.n} edges={graph.n_edges} dim={graph.X.shape[1]} classes={graph.n_classes}")
    return 0


def cmd_grad_check(args) -> int:
    graph = generate_sbm(SbmConfig(args.blocks, args.nodes_per_block, 0.6, 0.1, args.dim, 1.0, 0.5, args.seed))
    rows, ok = [], True
    for variant in SEMANTIC_VARIANTS:
        for stage2 in (False, True):
            cfg = TrainConfig(
                hidden=tuple(args.hidden),
                seed=args.seed,
                semantic_variant=variant,
                include_positive=args.symmetric_infonce,
                epochs=0,
                kmeans_restarts=3,
            )
            rep, init_seed = check_gradients(graph, cfg, stage2, args.tolerance, args.coords)
            ok &= rep.passed
            rows.append({"semantic_variant": variant, "stage": 2 if stage2 else 1, "max_rel_error": rep.worst,
                         "passed": rep.passed, "init_seed": init_seed, "per_tensor": rep.max_rel_error})
    lines = [f"{'variant':8s} stage  init_seed  max_rel_error  result"]
    lines += [f"{r['semantic_variant']:8s} {r['stage']:5d}  {r['init_seed']:9d}  {r['max_rel_error']:.3e}      "
              f"{'PASS' if r['passed'] else 'FAIL'}" for r in rows]
    lines.append(f"overall: {'PASS' if ok else 'FAIL'} (tolerance {args.tolerance:g}, n={graph.n})")
    _emit(args, {"tolerance": args.tolerance, "n_nodes": graph.n, "passed": ok, "checks": rows}, "\n".join(lines))
    return 0 if ok else 1


def _read_labels(path) -> np.ndarray:
    try:
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln.strip()]
        return np.array([int(v) for v in lines], dtype=np.int64)
    except ValueError:
        raise UsageError(f"{path}: labels must be integers, one per line") from None


def cmd_metrics(args) -> int:
    y_true, y_pred = _read_labels(args.true_file), _read_labels(args.pred_file)
    if len(y_true) != len(y_pred) or len(y_true) == 0:
        raise UsageError(f"label files must be non-empty and equally long ({len(y_true)} vs {len(y_pred)})")
    report = cluster.compute_metrics(y_true, y_pred)
    _emit(args, report.as_dict(), "  ".join(f"{m}={_fmt(v)}" for m, v in report.as_dict().items()))
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "gen-synthetic": cmd_gen_synthetic,
    "grad-check": cmd_grad_check,
    "metrics": cmd_metrics,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"convertgc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"convertgc: training diverged at epoch {exc.epoch}: {exc.breakdown}", file=sys.stderr)
        return 1
    except (DatasetError, OSError, ValueError) as exc:
        print(f"convertgc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
