"""Command-line entry point: one pipeline stage per invocation.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .classify import run_channel_experiments, write_results_csv
from .data.montage import CANONICAL, SOURCE, SOURCE_INDEX, VIRTUAL, VIRTUAL_INDEX
from .data.preprocess import PreprocessConfig, preprocess_recording
from .data.recording import find_recordings, load_recording, save_recording
from .data.split import split_subjects
from .data.store import segment_store_read, segment_store_write
from .data.synth import synth_cohort
from .data.types import AnxietyLabel, SegmentPair, subject_hash
from .features import FEATURE_NAMES, extract_feature_vector
from .gnet import GNetArch, GNetConfig, build_gnet, generate, train
from .gnet.checkpoint import checkpoint_load, checkpoint_save
from .metrics import evaluate_channels, write_report_csv

log = logging.getLogger("eegvc")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _versions() -> dict[str, str]:
    import scipy

    return {"eegvc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(args: argparse.Namespace, out: Path) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    blob = json.dumps(resolved, sort_keys=True, default=str)
    manifest = {
        "command": args.command,
        "seed": args.seed,
        "config": resolved,
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "versions": _versions(),
    }
    path = out.parent / (out.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _arch(args) -> GNetArch:
    if args.arch == "full":
        return GNetArch(seg_len=args.seg_len or 3000)
    return GNetArch.small(seg_len=args.seg_len or 64)


def subjects_path(store: Path) -> Path:
    return store.parent / (store.name + ".subjects.csv")


def read_subjects(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cohort = synth_cohort(args.n_subjects, args.alpha_effect, args.alpha_sd, args.seed,
                          pink_noise=args.pink_noise, mixing=args.mixing, duration_s=args.duration, fs_hz=args.fs)
    for rec in cohort:
        save_recording(rec, out / f"{rec.subject_id}.csv", out / f"{rec.subject_id}.json")
    log.info("wrote %d synthetic recordings to %s", args.n_subjects, out)
    write_manifest(args, out)


def cmd_preprocess(args) -> None:
    found = find_recordings(args.input)
    if not found:
        raise RuntimeError(f"no <name>.csv + <name>.json recordings in {args.input}")
    cfg = PreprocessConfig(band_hz=(args.band_lo, args.band_hi), filter_order=args.filter_order,
                           seg_len=args.seg_len or 3000)
    pairs, subjects = [], []
    for csv_path, manifest in found:
        rec = load_recording(csv_path, manifest, expected_fs=args.fs)
        got = preprocess_recording(rec, cfg)
        pairs += got
        subjects.append((rec.subject_id, subject_hash(rec.subject_id), rec.tai_score, rec.label.value, len(got)))
    if not pairs:
        raise RuntimeError("recordings too short for a single segment")
    if len({h for _, h, *_ in subjects}) != len(subjects):
        raise RuntimeError("subject id hash collision; rename one of the subjects")
    out = Path(args.out)
    segment_store_write(pairs, out)
    with open(subjects_path(out), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "subject_hash", "tai_score", "label", "n_segments"])
        w.writerows(subjects)
    log.info("wrote %d segment pairs from %d recordings to %s", len(pairs), len(found), out)
    write_manifest(args, out)


def _split(store: Path, seed: int) -> dict[str, list[int]]:
    subj = read_subjects(subjects_path(store))
    ids = [int(s["subject_hash"]) for s in subj]
    labels = [s["label"] for s in subj]
    if len(ids) < 3:
        return {"train": ids, "val": [], "test": []}
    try:
        tr, va, te = split_subjects(ids, (7, 1, 2), seed, labels)
    except ValueError:
        tr, va, te = split_subjects(ids, (7, 1, 2), seed)
    return {"train": sorted(tr), "val": sorted(va), "test": sorted(te)}


def cmd_train(args) -> None:
    store = Path(args.store)
    pairs = segment_store_read(store)
    arch = _arch(args)
    split = _split(store, args.seed)
    by_subject = {k: set(v) for k, v in split.items()}
    train_set = [p for p in pairs if p.subject in by_subject["train"]]
    val_set = [p for p in pairs if p.subject in by_subject["val"]]
    cfg = GNetConfig(alpha=args.alpha, beta=args.beta, lr=args.lr, epochs=args.epochs,
                     batch_size=args.batch_size, seed=args.seed, max_steps=args.max_steps, arch=arch)
    params, report, state = train(train_set, cfg, val=val_set)
    out = Path(args.out)
    checkpoint_save(params, out, state)
    rep = report.to_dict()
    rep.pop("wall_clock_s")  # keep artifacts byte-reproducible
    (out.parent / (out.name + ".report.json")).write_text(json.dumps(rep, indent=2) + "\n")
    (out.parent / (out.name + ".split.json")).write_text(json.dumps(split, indent=2) + "\n")
    log.info("trained %d steps in %.1fs; final train loss %.6f", report.steps, report.wall_clock_s,
             report.final_train_loss)
    write_manifest(args, out)


def cmd_generate(args) -> None:
    pairs = segment_store_read(args.store)
    arch = _arch(args)
    params, _ = checkpoint_load(args.checkpoint, expected=build_gnet(arch, 0))
    if args.subset != "all":
        split = json.loads(Path(args.split or (args.checkpoint + ".split.json")).read_text())
        keep = set(split[args.subset])
        pairs = [p for p in pairs if p.subject in keep]
    if not pairs:
        raise RuntimeError(f"no segment pairs in subset {args.subset!r}")
    outs = generate(params, [p.source for p in pairs], arch)
    gen = [SegmentPair(source=p.source, target=g, subject=p.subject, index=p.index) for p, g in zip(pairs, outs)]
    out = Path(args.out)
    segment_store_write(gen, out)
    log.info("generated %d blocks into %s", len(gen), out)
    write_manifest(args, out)


def cmd_evaluate(args) -> None:
    real = {p.key: p for p in segment_store_read(args.store)}
    gen = segment_store_read(args.generated)
    missing = [p.key for p in gen if p.key not in real]
    if missing:
        raise RuntimeError(f"generated blocks without a matching real segment: {missing[:5]}")
    summary = evaluate_channels([p.target for p in gen], [real[p.key].target for p in gen], CANONICAL, VIRTUAL)
    out = Path(args.out)
    write_report_csv(summary.channels, out)
    headline = {k: getattr(summary, k) for k in ("virtual_cc", "virtual_mae", "all_cc", "all_mae",
                                                  "source_cc", "source_mae")}
    (out.parent / (out.name + ".summary.json")).write_text(json.dumps(headline, indent=2) + "\n")
    print(f"virtual channels: CC {summary.virtual_cc:.4f}  MAE {summary.virtual_mae:.4f}")
    write_manifest(args, out)


def _segment_features(target: np.ndarray, fs: float) -> list[str]:
    row = []
    for c in range(len(CANONICAL)):
        row += [f"{v:.9g}" for v in extract_feature_vector(target[c], fs).values]
    return row


def _feature_rows(pairs, subjects, fs, workers: int = 1) -> list[list[str]]:
    by_hash = {int(s["subject_hash"]): s for s in subjects}
    pairs = sorted(pairs, key=lambda q: q.key)
    heads = []
    for p in pairs:
        s = by_hash.get(p.subject)
        if s is None:
            raise RuntimeError(f"segment from unknown subject hash {p.subject}")
        heads.append([s["subject_id"], str(p.index), str(AnxietyLabel(s["label"]).binary)])
    targets = [p.target for p in pairs]
    if workers > 1:
        # pure per-segment work; map keeps input order so output is unchanged
        with ProcessPoolExecutor(workers) as pool:
            feats = list(pool.map(_segment_features, targets, [fs] * len(targets), chunksize=4))
    else:
        feats = [_segment_features(t, fs) for t in targets]
    return [h + f for h, f in zip(heads, feats)]


def feature_header() -> list[str]:
    return ["subject_id", "segment_idx", "label"] + [f"{c}_{f}" for c in CANONICAL for f in FEATURE_NAMES]


def cmd_features(args) -> None:
    store = Path(args.store)
    subjects = read_subjects(args.subjects or subjects_path(store))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [("features_real.csv", segment_store_read(store))]
    if args.generated:
        gen = segment_store_read(args.generated)
        keys = {p.key for p in gen}
        jobs = [("features_real.csv", [p for p in jobs[0][1] if p.key in keys]), ("features_generated.csv", gen)]
    for name, pairs in jobs:
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(feature_header())
            w.writerows(_feature_rows(pairs, subjects, args.fs, args.workers))
    log.info("wrote feature matrices to %s", out)
    write_manifest(args, out)


def read_feature_csv(path) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    subj = np.array([row[0] for row in rows])
    idx = np.array([int(row[1]) for row in rows])
    labels = np.array([int(row[2]) for row in rows])
    x = np.array([[float(v) for v in row[3:]] for row in rows]).reshape(len(rows), -1)
    return header[3:], subj, idx, labels, x


def _channel_cols(columns: list[str], channels) -> np.ndarray:
    wanted = {c for c in channels}
    return np.array([i for i, col in enumerate(columns) if col.split("_", 1)[0] in wanted])


def cmd_classify(args) -> None:
    cols, subj, idx, labels, real = read_feature_csv(args.features_real)
    configs = {
        "original_4": real[:, _channel_cols(cols, SOURCE)],
        "original_17": real[:, _channel_cols(cols, CANONICAL)],
    }
    if args.features_generated:
        gcols, gsubj, gidx, glabels, gen = read_feature_csv(args.features_generated)
        if gcols != cols or not (np.array_equal(gsubj, subj) and np.array_equal(gidx, idx)):
            raise RuntimeError("generated feature rows do not line up with real feature rows")
        configs["original_4+virtual_13"] = np.hstack(
            [real[:, _channel_cols(cols, SOURCE)], gen[:, _channel_cols(cols, VIRTUAL)]])
    rows = run_channel_experiments(configs, labels, subj, split_seed=args.seed, k=args.k,
                                   svm_lambda=args.svm_lambda, svm_epochs=args.svm_epochs)
    out = Path(args.out)
    write_results_csv(rows, out)
    for r in rows:
        c = r.report
        print(f"{c.config:24s} {c.classifier}: acc {c.accuracy:.4f} auc {c.auc if c.auc is None else round(c.auc, 4)}")
    write_manifest(args, out)


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--out", required=True)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="eegvc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write synthetic recordings")
    p.add_argument("--n-subjects", type=int, default=1)
    p.add_argument("--duration", type=float, default=60.0, help="seconds")
    p.add_argument("--fs", type=float, default=500.0)
    p.add_argument("--mixing", type=float, default=0.6)
    p.add_argument("--pink-noise", type=float, default=0.3)
    p.add_argument("--alpha-effect", type=float, default=0.0, help="class shift of alpha amplitude, in alpha-sd units")
    p.add_argument("--alpha-sd", type=float, default=0.0, help="between-subject sd of alpha amplitude, drawn per channel")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", parents=[common], help="recordings -> segment store")
    p.add_argument("--input", required=True, help="directory of <name>.csv + <name>.json")
    p.add_argument("--fs", type=float, default=None, help="reject recordings at another rate")
    p.add_argument("--seg-len", type=int, default=3000)
    p.add_argument("--band-lo", type=float, default=0.5)
    p.add_argument("--band-hi", type=float, default=45.0)
    p.add_argument("--filter-order", type=int, default=4)
    p.set_defaults(func=cmd_preprocess)

    def arch_flags(p):
        p.add_argument("--arch", choices=("full", "small"), default="full")
        p.add_argument("--seg-len", type=int, default=None, help="defaults: 3000 full, 64 small")

    p = sub.add_parser("train", parents=[common], help="train the generator")
    p.add_argument("--store", required=True)
    arch_flags(p)
    p.add_argument("--epochs", type=int, default=11)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--max-steps", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", parents=[common], help="4-channel blocks -> 17-channel blocks")
    p.add_argument("--store", required=True)
    p.add_argument("--checkpoint", required=True)
    arch_flags(p)
    p.add_argument("--subset", choices=("all", "train", "val", "test"), default="all")
    p.add_argument("--split", help="split JSON (default: <checkpoint>.split.json)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", parents=[common], help="per-channel CC/MAE report CSV")
    p.add_argument("--store", required=True)
    p.add_argument("--generated", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("features", parents=[common], help="34 features per channel per segment")
    p.add_argument("--store", required=True)
    p.add_argument("--generated")
    p.add_argument("--subjects", help="subjects CSV (default: <store>.subjects.csv)")
    p.add_argument("--fs", type=float, default=500.0)
    p.add_argument("--workers", type=int, default=1, help="processes; output does not depend on it")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("classify", parents=[common], help="KNN/SVM per channel configuration")
    p.add_argument("--features-real", required=True)
    p.add_argument("--features-generated")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--svm-lambda", type=float, default=1e-2)
    p.add_argument("--svm-epochs", type=int, default=100)
    p.set_defaults(func=cmd_classify)
    return parser


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = read_config_file(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        explicit = set()
        for tok in argv:
            if tok.startswith("--"):
                explicit.add(tok[2:].split("=", 1)[0].replace("-", "_"))
        for key, raw in values.items():
            action = known.get(key)
            if action is None or key in ("config", "help", "func"):
                raise UsageError(f"unknown config key {key!r} for {args.command}")
            if key in explicit:
                continue
            try:
                if isinstance(action, argparse._StoreTrueAction):
                    if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                        raise ValueError(raw)
                    value = raw.lower() in ("true", "1", "yes")
                else:
                    value = action.type(raw) if action.type else raw
            except ValueError:
                raise UsageError(f"config key {key!r}: bad value {raw!r}") from None
            if action.choices and value not in action.choices:
                raise UsageError(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
            setattr(args, key, value)
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - surface any runtime failure as exit 1
        log.debug("failure", exc_info=True)
        print(f"eegvc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
