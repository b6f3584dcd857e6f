"""Command line interface.

Exit codes: 0 success, 1 data/runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import plotting
from .bayes.checkpoint import load_checkpoint, save_checkpoint
from .bayes.distributions import Gaussian, kl_gaussian, kl_monte_carlo
from .bayes.gradcheck import random_gradcheck
from .bayes.network import Standardizer, init_model
from .bayes.optim import TrainState
from .bayes.training import train
from .errors import CsiUqError
from .features import FeatureMatrix, featurize, read_features_csv, write_features_csv
from .harness import (
    ExperimentConfig,
    SyntheticHomeSpec,
    derive_seeds,
    evaluate,
    format_table,
    metrics_from_dict,
    run_experiment,
    synthesize_recordings,
    write_report,
)
from .preprocess import PreprocessParams, preprocess_pipeline, write_series_csv
from .synth import Label, read_csi, write_csi

log = logging.getLogger("csiuq")


class UsageError(Exception):
    pass


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require(path, what):
    p = Path(path)
    if not p.exists():
        raise CsiUqError(f"{what} not found: {p}")
    return p


def _out_dir(args):
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise CsiUqError(f"cannot create output directory {out}: {err}") from err
    return out


# -- synth -------------------------------------------------------------------


def cmd_synth(args):
    if args.homes < 1:
        raise UsageError("--homes must be >= 1")
    if args.ood_homes < 0 or args.recordings < 0:
        raise UsageError("--ood-homes and --recordings must be >= 0")
    n_motion = args.recordings if args.motion_recordings is None else args.motion_recordings
    n_static = args.recordings if args.static_recordings is None else args.static_recordings
    if n_motion + n_static < 1:
        raise UsageError("at least one recording per home is required")
    out = _out_dir(args)
    entries = []
    regimes = ["in"] * args.homes + ["ood"] * args.ood_homes
    for i, regime in enumerate(regimes, start=1):
        home_id = f"home{i}"
        spec = SyntheticHomeSpec(home_id, regime=regime, n_motion=n_motion, n_static=n_static,
                                 duration_s=args.duration, n_tx=args.n_tx, n_rx=args.n_rx,
                                 n_subcarriers=args.subcarriers, noise_ratio=args.noise_ratio)
        seed = derive_seeds(args.seed, home_id, n=1)[0]
        home_dir = out / home_id
        home_dir.mkdir(exist_ok=True)
        counters = {Label.MOTION: 0, Label.NO_MOTION: 0}
        for label, rec_seed, tensor in synthesize_recordings(spec, seed):
            name = f"{'motion' if label is Label.MOTION else 'nomotion'}_{counters[label]:03d}"
            counters[label] += 1
            header_path = home_dir / f"{name}.json"
            write_csi(header_path, tensor, home_id=home_id, label=label, seed=rec_seed)
            entries.append({
                "home_id": home_id,
                "regime": regime,
                "label": label.display,
                "header": str(header_path.relative_to(out)),
                "payload_sha256": _sha256(header_path.with_suffix(".bin")),
            })
    manifest = {"seed": args.seed, "duration_s": args.duration, "recordings": entries}
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {len(entries)} recordings for {len(regimes)} homes to {out}")
    return 0


# -- pipeline ----------------------------------------------------------------


def cmd_pipeline(args):
    manifest_path = _require(args.manifest or Path(args.data) / "manifest.json", "manifest")
    manifest = json.loads(manifest_path.read_text())
    root = manifest_path.parent
    out = _out_dir(args)
    params = PreprocessParams(args.half_window, args.n_sigmas, args.top_k)
    by_home: dict[str, list[FeatureMatrix]] = {}
    summary = {}
    for entry in manifest["recordings"]:
        header_path = _require(root / entry["header"], "CSI header")
        tensor, header = read_csi(header_path)
        try:
            series = preprocess_pipeline(tensor, params)
            fm = featurize(series, args.window, args.hop, Label.parse(header["label"]),
                           header["home_id"])
        except CsiUqError as err:
            raise CsiUqError(f"{header_path}: {err}") from err
        if args.save_series:
            write_series_csv(out / f"series_{header_path.stem}_{header['home_id']}.csv", series)
        by_home.setdefault(header["home_id"], []).append(fm)
        s = summary.setdefault(header["home_id"], {"recordings": 0, "windows": 0, "dropped": 0})
        s["recordings"] += 1
        s["windows"] += len(fm)
        s["dropped"] += fm.dropped
        if fm.dropped:
            log.info("%s: dropped %d degenerate windows", header_path, fm.dropped)
    for home_id, parts in sorted(by_home.items()):
        write_features_csv(out / f"features_{home_id}.csv", FeatureMatrix.concat(parts))
        log.info("%s: %d windows, %d dropped", home_id, summary[home_id]["windows"],
                 summary[home_id]["dropped"])
    _write_json(out / "pipeline_summary.json", {"window": args.window, "hop": args.hop,
                                                 "homes": summary})
    print(f"wrote feature CSVs for {len(by_home)} homes to {out}")
    return 0


# -- train / evaluate --------------------------------------------------------


def _load_features(paths) -> FeatureMatrix:
    files = []
    for p in paths:
        p = _require(p, "features")
        files += sorted(p.glob("features_*.csv")) if p.is_dir() else [p]
    if not files:
        raise CsiUqError(f"no features_*.csv files under {paths}")
    return FeatureMatrix.concat(read_features_csv(f) for f in files)


def cmd_train(args):
    fm = _load_features(args.features)
    out = _out_dir(args)
    if args.test_home is not None:
        if args.test_home not in set(fm.home_ids.tolist()):
            raise CsiUqError(f"test home {args.test_home!r} not present in features")
        fm = fm.subset(fm.home_ids != args.test_home)
    if len(fm) == 0:
        raise CsiUqError("no training rows left")
    init_seed, train_seed, _ = derive_seeds(args.seed, args.test_home or "all")
    model = init_model(init_seed)
    try:
        model, history = train(model, fm.X, fm.labels, epochs=args.epochs,
                               batch_size=args.batch_size, seed=train_seed, lr=args.lr,
                               standardizer=Standardizer.fit(fm.X))
    except CsiUqError as err:
        hist = getattr(err, "history", None) or []
        _write_history(out / "loss_history.csv", [asdict(h) for h in hist])
        raise
    state = TrainState(lr=args.lr, epoch=args.epochs)
    save_checkpoint(out / "checkpoint.json", model, state)
    rows = [asdict(h) for h in history]
    _write_history(out / "loss_history.csv", rows)
    if args.figures and rows:
        plotting.plot_loss_history(rows, out / "fig_loss.png")
    homes = sorted(set(fm.home_ids.tolist()))
    print(f"trained on {len(fm)} windows from {', '.join(homes)}; checkpoint in {out}")
    return 0


def _write_history(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "accuracy"])
        for r in rows:
            w.writerow([r["epoch"], repr(r["loss"]), repr(r["accuracy"])])


def cmd_evaluate(args):
    model = load_checkpoint(_require(args.checkpoint, "checkpoint"))
    fm = _load_features(args.features)
    out = _out_dir(args)
    homes = sorted(set(fm.home_ids.tolist()))
    targets = [args.test_home] if args.test_home else homes
    for home in targets:
        if home not in homes:
            raise CsiUqError(f"test home {home!r} not present in features")
        test = fm.subset(fm.home_ids == home)
        pred_seed = derive_seeds(args.seed, home)[2]
        m = evaluate(model, test, T=args.T, seed=pred_seed, home_id=home)
        records = [asdict(r) for r in m.records]
        summary = m.summary()
        summary["T"] = args.T
        summary["seed"] = args.seed
        _write_json(out / f"metrics_{home}.json", _finite(summary))
        _write_uncertainty(out / f"uncertainty_{home}.csv", records)
        _write_entropy(out / f"entropy_{home}.csv", records)
        if args.figures:
            plotting.plot_sampled_probabilities(records, out / f"fig_probabilities_{home}.png",
                                                title=f"test {home}")
            plotting.plot_class_entropy(records, out / f"fig_entropy_{home}.png",
                                        title=f"test {home}")
        print(f"{home}: accuracy {m.accuracy_pct:.2f}%  H(No-motion) "
              f"{m.mean_entropy_no_motion:.3f}  H(Motion) {m.mean_entropy_motion:.3f} bits")
    return 0


def _finite(d):
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def _write_uncertainty(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["example", "true_label", "predicted_label", "sample", "p_no_motion",
                    "p_motion", "predictive_bits", "aleatoric_bits", "epistemic_bits"])
        for i, r in enumerate(records):
            for t, p in enumerate(r["samples"]):
                w.writerow([i, r["true_label"], r["predicted_label"], t, repr(p[0]), repr(p[1]),
                            repr(r["predictive_bits"]), repr(r["aleatoric_bits"]),
                            repr(r["epistemic_bits"])])


def _write_entropy(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["example", "true_label", "predicted_label", "predictive_bits",
                    "aleatoric_bits", "epistemic_bits"])
        for i, r in enumerate(records):
            w.writerow([i, r["true_label"], r["predicted_label"], repr(r["predictive_bits"]),
                        repr(r["aleatoric_bits"]), repr(r["epistemic_bits"])])


# -- report ------------------------------------------------------------------


def cmd_report(args):
    if bool(args.metrics) == bool(args.experiment):
        raise UsageError("report needs exactly one of --metrics or --experiment")
    out = _out_dir(args)
    if args.experiment:
        cfg = ExperimentConfig.load(_require(args.experiment, "experiment config"))
        if args.seed_given:
            cfg.master_seed = args.seed
        report = run_experiment(cfg)
        md, _ = write_report(report, out)
        rows = report.table_rows()
        if args.figures:
            for fold in report.folds:
                if fold.metrics is not None and fold.metrics.records:
                    recs = [asdict(r) for r in fold.metrics.records]
                    plotting.plot_class_entropy(recs, out / f"fig_entropy_{fold.test_home}.png",
                                                title=f"test {fold.test_home}")
    else:
        rows = []
        summaries = []
        for p in args.metrics:
            d = json.loads(_require(p, "metrics file").read_text())
            missing = {"home_id", "accuracy_pct", "mean_entropy_no_motion",
                       "mean_entropy_motion"} - set(d)
            if missing:
                raise CsiUqError(f"{p}: metrics file lacks {sorted(missing)}")
            m = metrics_from_dict({k: d[k] for k in d if k in _METRIC_KEYS})
            rows.append((m.home_id, m.accuracy_pct, m.mean_entropy_no_motion,
                         m.mean_entropy_motion))
            summaries.append(_finite(m.summary()))
        md = out / "report.md"
        md.write_text(format_table(rows))
        _write_json(out / "report.json", {"rows": summaries})
    if args.figures:
        plotting.plot_report(rows, out / "fig_report.png")
    sys.stdout.write(md.read_text())
    return 0


_METRIC_KEYS = {
    "home_id", "accuracy_pct", "mean_entropy_no_motion", "mean_entropy_motion", "n_examples",
    "mean_predictive_bits", "mean_aleatoric_no_motion", "mean_aleatoric_motion",
    "mean_epistemic_no_motion", "mean_epistemic_motion",
}


# -- checks ------------------------------------------------------------------


def cmd_gradcheck(args):
    res = random_gradcheck(args.seed, h=args.h)
    print(f"max relative gradient error: {res.max_rel_error:.3e} "
          f"({res.worst_parameter}, {res.n_checked} parameters)")
    return 0 if res.max_rel_error < args.tol else 1


def cmd_kl_check(args):
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for i in range(args.pairs):
        q = Gaussian(rng.normal(0, 1), rng.uniform(0.2, 2.0))
        p = Gaussian(rng.normal(0, 1), rng.uniform(0.2, 2.0))
        est, se = kl_monte_carlo(q, p, args.n, seed=[args.seed, i], return_se=True)
        worst = max(worst, abs(est - kl_gaussian(q, p)) / se)
    self_kl = kl_gaussian(Gaussian(0.3, 0.7), Gaussian(0.3, 0.7))
    print(f"max |MC - analytic| / SE over {args.pairs} pairs: {worst:.3f}; KL(q||q) = {self_kl}")
    return 0 if worst < 5.0 and self_kl == 0.0 else 1


# -- parser ------------------------------------------------------------------


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--config", help="JSON file of option defaults for this subcommand")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="csiuq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("synth", parents=[common], help="generate synthetic CSI recordings")
    p.add_argument("--homes", type=int, default=4)
    p.add_argument("--ood-homes", type=int, default=0, help="extra homes from the disjoint regime")
    p.add_argument("--recordings", type=int, default=10, help="recordings per class per home")
    p.add_argument("--motion-recordings", type=int)
    p.add_argument("--static-recordings", type=int)
    p.add_argument("--duration", type=float, default=60.0, help="seconds per recording")
    p.add_argument("--n-tx", type=_positive_int, default=1)
    p.add_argument("--n-rx", type=_positive_int, default=2)
    p.add_argument("--subcarriers", type=_positive_int, default=56)
    p.add_argument("--noise-ratio", type=float, help="noise std relative to path amplitude scale")
    p.set_defaults(func=cmd_synth)
    subs["synth"] = p

    p = sub.add_parser("pipeline", parents=[common], help="CSI files -> feature CSVs")
    p.add_argument("--data", default=".", help="directory holding manifest.json")
    p.add_argument("--manifest")
    p.add_argument("--window", type=_positive_int, default=200)
    p.add_argument("--hop", type=_positive_int, default=100)
    p.add_argument("--half-window", type=_positive_int, default=5)
    p.add_argument("--n-sigmas", type=float, default=3.0)
    p.add_argument("--top-k", type=_positive_int, default=5)
    p.add_argument("--save-series", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    subs["pipeline"] = p

    p = sub.add_parser("train", parents=[common], help="train a model on feature CSVs")
    p.add_argument("--features", nargs="+", required=True, help="feature CSVs or directories")
    p.add_argument("--test-home", help="home to hold out")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=_positive_int, default=4)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=cmd_train)
    subs["train"] = p

    p = sub.add_parser("evaluate", parents=[common], help="sampled predictions and uncertainty")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--test-home")
    p.add_argument("--T", type=_positive_int, default=100, help="forward samples per input")
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=cmd_evaluate)
    subs["evaluate"] = p

    p = sub.add_parser("report", parents=[common], help="accuracy / entropy table as Markdown + JSON")
    p.add_argument("--metrics", nargs="+", help="metrics_*.json files from evaluate")
    p.add_argument("--experiment", help="experiment config JSON; runs every fold")
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=cmd_report)
    subs["report"] = p

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    subs["gradcheck"] = p

    p = sub.add_parser("kl-check", parents=[common], help="analytic vs Monte-Carlo KL")
    p.add_argument("--pairs", type=_positive_int, default=100)
    p.add_argument("--n", type=_positive_int, default=100_000)
    p.set_defaults(func=cmd_kl_check)
    subs["kl-check"] = p
    return parser, subs


def _apply_config(parser, subs, args, argv):
    path = Path(args.config)
    if not path.exists():
        parser.error(f"config file not found: {path}")
    try:
        overrides = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        parser.error(f"config file {path} is not valid JSON: {err}")
    sp = subs[args.command]
    dests = {a.dest for a in sp._actions} - {"help", "config", "func"}
    unknown = set(overrides) - dests
    if unknown:
        parser.error(f"unknown keys in {path}: {sorted(unknown)}")
    sp.set_defaults(**overrides)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        args = _apply_config(parser, subs, args, argv)
    args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"csiuq {args.command}: error: {err}", file=sys.stderr)
        return 2
    except (CsiUqError, OSError, KeyError, json.JSONDecodeError) as err:
        print(f"csiuq {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
