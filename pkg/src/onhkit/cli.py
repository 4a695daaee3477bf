"""Command-line front end.

Grammar: onhkit <crop|synth|train|eval|roc> --config <json>
         [--manifest <csv>] [--out <dir>] [--seed <u64>]

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from dataclasses import replace

from .climbers import history_to_csv, train
from .config import ConfigError, load_run_config
from .evaluation import fold_metrics_to_csv, percent_1dp, roc_auc, roc_to_csv
from .manifest import ManifestError, read_manifest, read_scores_csv, write_basic_manifest
from .network import freeze_first, init_network, load_network, save_network
from .pipeline import crop_batch, crop_report_csv, evaluate_kfold, load_image_dataset
from .plots import save_fold_metrics_png, save_history_png, save_roc_png, write_roc_svg
from .raster import PnmParseError, write_pnm
from .synth import generate, write_manifest

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="onhkit", description="optic-nerve-head screening toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    commands = {
        "crop": "auto-crop the ONH region from every manifest image",
        "synth": "generate synthetic fundus images with ground truth",
        "train": "train the classifier with the hybrid climber optimizer",
        "eval": "k-fold cross-validated evaluation with ROC/AUC output",
        "roc": "ROC curve and AUC from a score,label CSV",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON run configuration")
        p.add_argument(
            "--manifest",
            default=None,
            help="input CSV (dataset manifest; for roc: score,label rows)",
        )
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the primary seed")
        if name == "eval":
            p.add_argument(
                "--checkpoint", default=None, help="score this checkpoint instead of training"
            )
    return parser


def _require(value, flag, command):
    if value is None:
        raise UsageError(f"{command} requires {flag}")
    return value


def _outdir(args):
    out = _require(args.out, "--out", args.command)
    os.makedirs(out, exist_ok=True)
    return out


def _write(path, text):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def cmd_synth(args, cfg) -> int:
    out = _outdir(args)
    spec = cfg.synth.spec
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    batch = generate(spec, cfg.synth.count)
    path = write_manifest(batch, out)
    print(f"wrote {cfg.synth.count} images and {path}")
    return EXIT_OK


def cmd_crop(args, cfg) -> int:
    manifest_path = _require(args.manifest, "--manifest", args.command)
    out = _outdir(args)
    entries = read_manifest(manifest_path)
    if not entries:
        raise ManifestError(f"{manifest_path}: empty manifest")
    base = os.path.dirname(os.path.abspath(manifest_path))
    records = crop_batch(entries, base, cfg.roi)
    good = [r for r in records if r.error is None]
    for r in good:
        write_pnm(os.path.join(out, r.filename), r.raster)
    _write(os.path.join(out, "crop_report.csv"), crop_report_csv(records))
    write_basic_manifest(
        os.path.join(out, "manifest.csv"), [(r.filename, r.label) for r in good]
    )
    failed = [r for r in records if r.error is not None]
    for r in failed:
        print(f"{r.filename}: {r.error}", file=sys.stderr)
    n_fallback = sum(r.fallback_used for r in good)
    print(f"cropped {len(good)}/{len(records)} images ({n_fallback} via fallback)")
    return EXIT_DATA if failed else EXIT_OK


def cmd_train(args, cfg) -> int:
    manifest_path = _require(args.manifest, "--manifest", args.command)
    out = _outdir(args)
    opt = cfg.optimizer
    if args.seed is not None:
        opt = replace(opt, seed=args.seed)
    dataset = load_image_dataset(manifest_path, cfg.model.input_side, augment=cfg.augment)
    net = init_network(cfg.model.arch_spec(), seed=opt.seed)
    try:
        freeze_first(net, cfg.model.freeze_layers)
    except ValueError as exc:
        raise ConfigError(f"model.freeze_layers: {exc}") from None
    net, history = train(net, dataset, opt)
    save_network(net, os.path.join(out, "model.onhk"))
    _write(os.path.join(out, "history.csv"), history_to_csv(history))
    save_history_png(history, os.path.join(out, "history.png"))
    last = history[-1]
    print(
        f"trained {len(history)} epochs (stop: {last.stop_reason}); "
        f"best validation accuracy {last.best_accuracy:.4f}"
    )
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    manifest_path = _require(args.manifest, "--manifest", args.command)
    out = _outdir(args)
    fold_seed = cfg.eval.seed if args.seed is None else args.seed
    opt = cfg.optimizer
    if args.seed is not None:
        opt = replace(opt, seed=args.seed)
    dataset = load_image_dataset(manifest_path, cfg.model.input_side, augment=cfg.augment)
    checkpoint_net = load_network(args.checkpoint) if args.checkpoint else None
    results = evaluate_kfold(
        dataset,
        opt,
        cfg.model.arch_spec(),
        cfg.model.freeze_layers,
        cfg.eval.k,
        fold_seed,
        cfg.eval.threshold,
        checkpoint_net=checkpoint_net,
    )
    _write(os.path.join(out, "fold_metrics.csv"), fold_metrics_to_csv(results.fold_rows))
    cm = results.pooled_cm
    _write(
        os.path.join(out, "pooled_confusion.csv"),
        f"tp,fn,tn,fp\n{cm.tp},{cm.fn},{cm.tn},{cm.fp}\n",
    )
    _write(os.path.join(out, "roc.csv"), roc_to_csv(results.pooled_curve))
    write_roc_svg(results.pooled_curve, os.path.join(out, "roc.svg"))
    save_roc_png(
        results.pooled_curve, os.path.join(out, "roc.png"), fold_curves=results.fold_curves
    )
    save_fold_metrics_png(results.fold_rows, os.path.join(out, "fold_metrics.png"))
    accs = [row["accuracy"] for row in results.fold_rows]
    print(
        f"pooled AUC {results.pooled_curve.auc:.3f}; "
        f"mean fold accuracy {percent_1dp(sum(accs) / len(accs))}% "
        f"at threshold {results.threshold}"
    )
    return EXIT_OK


def cmd_roc(args, cfg) -> int:
    scores_path = _require(args.manifest, "--manifest", args.command)
    out = _outdir(args)
    scores, labels = read_scores_csv(scores_path)
    curve = roc_auc(scores, labels)
    _write(os.path.join(out, "roc.csv"), roc_to_csv(curve))
    write_roc_svg(curve, os.path.join(out, "roc.svg"))
    save_roc_png(curve, os.path.join(out, "roc.png"))
    print(f"AUC = {curve.auc:.3f}")
    return EXIT_OK


_DISPATCH = {
    "crop": cmd_crop,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "roc": cmd_roc,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if args.seed is not None and args.seed < 0:
            raise UsageError("--seed must be non-negative")
        cfg = load_run_config(args.config)
        return _DISPATCH[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"onhkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ManifestError, PnmParseError, OSError, ValueError) as exc:
        print(f"onhkit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
