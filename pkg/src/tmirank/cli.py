"""Command-line interface.

Exit codes: 0 success, 1 data or computation error, 2 usage error.  Every
error is a single line on stderr.  JSON outputs round floats to 12
significant digits and keep wall-clock timings under a "timing" key.

Manifest (``tmirank rank MANIFEST``) is a JSON object::

    {
      "labels": "labels.txt",            # required
      "num_classes": 10,                 # optional, inferred otherwise
      "accuracies": "acc.csv",           # optional model_id,accuracy CSV
      "format": "csv",                   # feature / prediction file format
      "models": [{"id": "m0", "features": "m0.csv", "source_preds": "p0.csv"}],
      "methods": ["tmi", "logme"],       # default: ["tmi"]
      "k": 3,                            # entropy neighbours for tmi
      "ks": [1, 5],                      # top-k hit levels
      "standardize": false,
      "config": {"icv_snca": {"temperature": 1.0}},
      "output": "report.json"
    }

Relative paths are resolved against the manifest's directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import MethodScores, build_report, evaluate_method, report_to_dict, round_floats
from .evaluation import RankingReport, sensitivity_sweep
from .ingest import (
    AccuracyVector,
    SyntheticSpec,
    generate_synthetic,
    load_accuracies,
    load_features,
    load_labels,
    load_source_predictions,
    save_features,
    save_labels,
    standardize,
)
from .methods import METHODS, OPTION_TYPES, parse_options, run_method

DEFAULT_K = 3
DEFAULT_KS = (1, 5)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def dumps(obj) -> str:
    return json.dumps(round_floats(obj), indent=2, sort_keys=False) + "\n"


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _config_pairs(items) -> dict:
    pairs = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--config expects KEY=VAL, got {item!r}")
        pairs[key.strip()] = value.strip()
    try:
        return parse_options(pairs)
    except KeyError as exc:
        raise UsageError(f"unknown --config key {exc.args[0]!r}; known: {', '.join(sorted(OPTION_TYPES))}") from None
    except ValueError as exc:
        raise UsageError(f"bad --config value: {exc}") from None


# -- score ----------------------------------------------------------------------


def cmd_score(args) -> int:
    method = METHODS[args.method]
    if method.needs_source_preds and not args.source_preds:
        raise UsageError(f"--method {args.method} requires --source-preds")
    options = _config_pairs(args.config)
    labels = load_labels(args.labels, args.num_classes)
    features = preds = None
    if method.needs_source_preds:
        preds = load_source_predictions(args.source_preds, args.format)
    else:
        features = load_features(args.features, args.format)
    result = run_method(args.method, features, labels, preds, args.k, args.standardize, options)
    doc = result.to_dict()
    doc["config"] = {"k": args.k, "standardize": args.standardize, **options}
    sys.stdout.write(dumps(doc))
    return 0


# -- rank -----------------------------------------------------------------------


@dataclass
class ModelEntry:
    model_id: str
    features: Path
    source_preds: Path | None = None


@dataclass
class RunManifest:
    models: list
    labels: Path
    accuracies: Path | None = None
    methods: list = field(default_factory=lambda: ["tmi"])
    config: dict = field(default_factory=dict)
    output: Path | None = None
    k: int = DEFAULT_K
    ks: list = field(default_factory=lambda: list(DEFAULT_KS))
    num_classes: int | None = None
    format: str = "csv"
    standardize: bool = False

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        raw = json.loads(path.read_text())
        if not isinstance(raw, dict):
            raise ValueError("manifest must be a JSON object")
        base = path.parent

        def resolve(p):
            return None if p is None else (base / p)

        models = []
        for entry in raw.get("models", []):
            models.append(
                ModelEntry(str(entry["id"]), resolve(entry["features"]), resolve(entry.get("source_preds")))
            )
        if not models:
            raise ValueError("manifest lists no models")
        ids = [m.model_id for m in models]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest model ids must be unique")
        methods = list(raw.get("methods", ["tmi"]))
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; known: {', '.join(METHODS)}")
        config = {}
        for name, opts in raw.get("config", {}).items():
            if name not in METHODS:
                raise ValueError(f"config for unknown method {name!r}")
            config[name] = parse_options(opts)
        if "labels" not in raw:
            raise ValueError("manifest needs a 'labels' path")
        fmt = raw.get("format", "csv")
        if fmt not in ("csv", "binary"):
            raise ValueError(f"unknown format {fmt!r}")
        return cls(
            models=models,
            labels=resolve(raw["labels"]),
            accuracies=resolve(raw.get("accuracies")),
            methods=methods,
            config=config,
            output=resolve(raw.get("output")),
            k=int(raw.get("k", DEFAULT_K)),
            ks=[int(k) for k in raw.get("ks", DEFAULT_KS)],
            num_classes=raw.get("num_classes"),
            format=fmt,
            standardize=bool(raw.get("standardize", False)),
        )


def rank(manifest: RunManifest) -> dict:
    labels = load_labels(manifest.labels, manifest.num_classes)
    accuracies = load_accuracies(manifest.accuracies) if manifest.accuracies else None
    warnings = []
    if accuracies is not None:
        wanted = {m.model_id for m in manifest.models}
        missing = sorted(wanted - set(accuracies.model_ids))
        if missing:
            raise ValueError(f"no accuracy for model(s) {missing}")
        extra = sorted(set(accuracies.model_ids) - wanted)
        if extra:
            warnings.append(f"accuracies for unlisted model(s) ignored: {extra}")

    results = {name: {} for name in manifest.methods}
    for entry in manifest.models:
        try:
            features = load_features(entry.features, manifest.format)
            preds = None
            if entry.source_preds is not None:
                preds = load_source_predictions(entry.source_preds, manifest.format)
        except (OSError, ValueError) as exc:
            warnings.append(f"model {entry.model_id}: {exc}")
            continue
        for name in manifest.methods:
            try:
                res = run_method(
                    name, features, labels, preds, manifest.k, manifest.standardize, manifest.config.get(name)
                )
            except ValueError as exc:
                warnings.append(f"model {entry.model_id}, {name}: {exc}")
                continue
            results[name][entry.model_id] = res

    method_scores, timings = [], {}
    for name in manifest.methods:
        by_model = results[name]
        if not by_model:
            warnings.append(f"{name}: no model could be scored")
            continue
        ids = sorted(by_model)
        method_scores.append(
            MethodScores(
                name,
                ids,
                [by_model[m].value for m in ids],
                [by_model[m].wall_time for m in ids],
                METHODS[name].orientation,
            )
        )
        timings[name] = {m: by_model[m].wall_time for m in ids}

    if not method_scores:
        raise ValueError("nothing could be scored")

    def restricted(ms):
        if accuracies is None:
            return None
        acc = accuracies.as_dict()
        return AccuracyVector(ms.model_ids, [acc[m] for m in ms.model_ids])

    if len({frozenset(ms.model_ids) for ms in method_scores}) == 1:
        report = build_report(method_scores, restricted(method_scores[0]), manifest.ks)
    else:
        rows = [evaluate_method(ms, restricted(ms), manifest.ks) for ms in sorted(method_scores, key=lambda m: m.method)]
        report = RankingReport(rows, list(manifest.ks), accuracies is not None)
    report.warnings.extend(warnings)
    return report_to_dict(report, timings)


def cmd_rank(args) -> int:
    try:
        manifest = RunManifest.load(args.manifest)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ValueError(f"cannot read manifest {args.manifest}: {exc}") from None
    output = Path(args.output) if args.output else manifest.output
    doc = rank(manifest)
    text = dumps(doc)
    if output is None:
        sys.stdout.write(text)
    else:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(text)
    return 0


# -- synth ----------------------------------------------------------------------


def _broadcast(values, count, flag):
    if len(values) == 1:
        return values * count
    if len(values) != count:
        raise UsageError(f"{flag} needs 1 or {count} values, got {len(values)}")
    return values


def _parse_means(text, c, d, separation):
    if text is None:
        return np.outer(np.arange(c) * separation, np.ones(d))
    rows = [r for r in text.split(";") if r.strip()]
    try:
        values = [_float_list(r) for r in rows]
    except argparse.ArgumentTypeError as exc:
        raise UsageError(str(exc)) from None
    if len(values) == 1 and len(values[0]) == 1:
        return np.full((c, d), values[0][0])
    means = np.array(values, dtype=float) if all(len(v) == d for v in values) else None
    if means is None or means.shape != (c, d):
        raise UsageError(f"--means needs {c} rows of {d} values separated by ';'")
    return means


def cmd_synth(args) -> int:
    c, d = args.num_classes, args.dim
    counts = _broadcast(args.counts, c, "--counts")
    spreads = _broadcast(args.spreads, c, "--spreads")
    means = _parse_means(args.means, c, d, args.separation)
    try:
        spec = SyntheticSpec(c, counts, d, means, spreads, args.seed)
    except ValueError as exc:
        raise UsageError(f"invalid synthetic spec: {exc}") from None
    features, labels = generate_synthetic(spec)
    prefix = args.out_prefix
    ext = "csv" if args.format == "csv" else "bin"
    feat_path = Path(f"{prefix}.features.{ext}")
    label_path = Path(f"{prefix}.labels.txt")
    feat_path.parent.mkdir(parents=True, exist_ok=True)
    save_features(feat_path, features, args.format)
    save_labels(label_path, labels)
    doc = spec.to_dict()
    doc.update({"format": args.format, "features": str(feat_path), "labels": str(label_path)})
    sys.stdout.write(dumps(doc))
    return 0


# -- sweep ----------------------------------------------------------------------


def cmd_sweep(args) -> int:
    options = _config_pairs(args.config)
    features = load_features(args.features, args.format)
    labels = load_labels(args.labels, args.num_classes)
    if args.standardize:
        features, _ = standardize(features)
    entries = sensitivity_sweep(features, labels, args.ks, options.get("backend", "tree"))
    doc = {
        "sweep": [{"k": e.k, "value": e.value, "valid": e.valid, "warnings": e.warnings} for e in entries],
        "standardize": args.standardize,
    }
    sys.stdout.write(dumps(doc))
    return 0


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tmirank", description="Rank pre-trained models by transferability scores.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_flags(p, features_required=True):
        p.add_argument("--features", required=features_required)
        p.add_argument("--labels", required=True)
        p.add_argument("--num-classes", type=int)
        p.add_argument("--format", choices=("csv", "binary"), default="csv")
        p.add_argument("--standardize", action="store_true", help="z-score each feature dimension first")
        p.add_argument("--config", action="append", metavar="KEY=VAL", help="method option, repeatable")

    p = sub.add_parser("score", help="score one feature set with one method")
    data_flags(p, features_required=False)
    p.add_argument("--method", required=True, choices=sorted(METHODS))
    p.add_argument("--source-preds")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("rank", help="score every model in a manifest and build a ranking report")
    p.add_argument("manifest")
    p.add_argument("--output", help="overrides the manifest's output path")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("synth", help="write a seeded Gaussian-blob dataset")
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--counts", type=_int_list, required=True, help="per-class sample counts (or one value)")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--means", help="class means as 'x,y;x,y' rows, or one scalar")
    p.add_argument("--separation", type=float, default=5.0, help="mean of class c is c*separation on every axis")
    p.add_argument("--spreads", type=_float_list, default=[1.0], help="per-class standard deviations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "binary"), default="csv")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="TMI across several neighbour counts")
    data_flags(p)
    p.add_argument("--ks", type=_int_list, required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "score" and not METHODS[args.method].needs_source_preds and not args.features:
            raise UsageError(f"--method {args.method} requires --features")
        if getattr(args, "k", 1) < 1:
            raise UsageError("--k must be a positive integer")
        return args.func(args)
    except UsageError as exc:
        print(f"tmirank: usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        message = " ".join(str(exc).split())
        print(f"tmirank: error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
