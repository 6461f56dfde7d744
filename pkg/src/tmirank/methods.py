"""Closed registry of scoring methods with their orientation and tunable options."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from . import baselines, scores
from .entropy import NeighborBackend
from .evaluation import HIGHER_BETTER, LOWER_BETTER
from .ingest import FeatureMatrix, LabelVector, SourcePredictionMatrix, standardize

# option name -> parser
OPTION_TYPES: dict[str, Callable] = {
    "backend": lambda v: NeighborBackend(v).value,
    "temperature": float,
    "alpha": float,
    "lambda": float,
    "hscore_ridge": float,
    "logme_max_iter": int,
    "logme_tol": float,
    "transrate_eps": float,
}


@dataclass(frozen=True)
class Method:
    name: str
    orientation: str
    needs_source_preds: bool
    options: tuple


METHODS = {
    m.name: m
    for m in (
        Method("tmi", HIGHER_BETTER, False, ("backend",)),
        Method("icv_contrast", LOWER_BETTER, False, ()),
        Method("icv_center", LOWER_BETTER, False, ()),
        Method("icv_snca", LOWER_BETTER, False, ("temperature",)),
        Method("icv_ms", LOWER_BETTER, False, ("alpha", "lambda")),
        Method("nce", HIGHER_BETTER, True, ()),
        Method("leep", HIGHER_BETTER, True, ()),
        Method("logme", HIGHER_BETTER, False, ("logme_max_iter", "logme_tol")),
        Method("hscore", HIGHER_BETTER, False, ("hscore_ridge",)),
        Method("transrate", HIGHER_BETTER, False, ("transrate_eps",)),
    )
}


def parse_options(pairs: dict) -> dict:
    """Coerce option values; raises KeyError for unknown names, ValueError for bad values."""
    out = {}
    for key, raw in pairs.items():
        if key not in OPTION_TYPES:
            raise KeyError(key)
        out[key] = OPTION_TYPES[key](raw)
    return out


def _baseline_config(options: dict) -> baselines.BaselineConfig:
    keys = ("hscore_ridge", "logme_max_iter", "logme_tol", "transrate_eps")
    return baselines.BaselineConfig(**{k: options[k] for k in keys if k in options})


def run_method(
    name: str,
    features: FeatureMatrix | None,
    labels: LabelVector,
    source_preds: SourcePredictionMatrix | None = None,
    k: int = 3,
    standardize_features: bool = False,
    options: dict | None = None,
) -> scores.ScoreResult:
    method = METHODS[name]
    options = options or {}
    if method.needs_source_preds:
        if source_preds is None:
            raise ValueError(f"{name} requires source predictions")
        fn = baselines.nce if name == "nce" else baselines.leep
        return fn(source_preds, labels)

    notes = []
    if standardize_features:
        features, notes = standardize(features)
    if name == "tmi":
        result = scores.tmi(features, labels, k, options.get("backend", NeighborBackend.TREE))
    elif name == "icv_contrast":
        result = scores.icv_contrast(features, labels)
    elif name == "icv_center":
        result = scores.icv_center(features, labels)
    elif name == "icv_snca":
        result = scores.icv_snca(features, labels, options.get("temperature", 1.0))
    elif name == "icv_ms":
        result = scores.icv_ms(features, labels, options.get("alpha", 2.0), options.get("lambda", 0.5))
    else:
        fn = getattr(baselines, name)
        result = fn(features, labels, _baseline_config(options))
    result.warnings[:0] = notes
    return result
