"""Per-(regime, sector) model registry, prediction and serialization."""
from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import EmptyCell, MissingModelCell, UnscaledInput
from ..features import FEATURES, FeatureMatrix, RegimeScaler
from ..market_data import SECTORS
from ..regime import RegimeLabel
from .cart import TreeNode
from .ensemble import (
    BoostingParams,
    EnsembleModel,
    ForestParams,
    ModelKind,
    fit_gbm,
    fit_random_forest,
    permutation_importance,
)

log = logging.getLogger(__name__)

FORMAT_NAME = "regime-portfolio-registry"
FORMAT_VERSION = 1
LOW_SAMPLE_ROWS = 50
# stream coordinates for pooled models
ALL_REGIMES = 3
ALL_SECTORS = len(SECTORS)


class Variant(str, enum.Enum):
    FULL = "full"
    REGIME_AGNOSTIC = "regime-agnostic"
    NON_SECTORAL = "non-sectoral"


@dataclass(frozen=True)
class ModelCell:
    model: EnsembleModel
    n_rows: int
    low_sample: bool


@dataclass(frozen=True)
class ModelRegistry:
    cells: dict[tuple[int, int], ModelCell]
    variant: Variant
    kind: ModelKind
    scaler: RegimeScaler | None = None

    def distinct_models(self) -> int:
        return len({id(c.model) for c in self.cells.values()})

    def fingerprint(self) -> str:
        return hashlib.sha256(registry_to_json(self).encode()).hexdigest()


def _fit(kind: ModelKind, X, y, seed: int, stream: tuple[int, int], forest: ForestParams, boosting: BoostingParams):
    if kind is ModelKind.RANDOM_FOREST:
        return fit_random_forest(X, y, forest, seed, stream)
    return fit_gbm(X, y, boosting, seed)


def train_registry(
    fm: FeatureMatrix,
    train_rows: np.ndarray,
    variant: Variant | str = Variant.FULL,
    model_kind: ModelKind | str = ModelKind.RANDOM_FOREST,
    scaler: RegimeScaler | None = None,
    seed: int = 42,
    forest: ForestParams = ForestParams(),
    boosting: BoostingParams = BoostingParams(),
) -> ModelRegistry:
    """Fit one model per cell on ``train_rows`` (target-bearing rows only).

    Full fits every (regime, sector) cell; regime-agnostic fits one model per
    sector and shares it across regimes; non-sectoral fits one per regime and
    shares it across sectors.
    """
    variant = Variant(variant)
    kind = ModelKind(model_kind)
    rows = np.asarray(train_rows, bool) & fm.has_target
    sectors = sorted({int(s) for s in np.unique(fm.sector)})
    cells: dict[tuple[int, int], ModelCell] = {}

    def fit_group(mask: np.ndarray, stream: tuple[int, int], label: str) -> ModelCell:
        count = int(mask.sum())
        if count == 0:
            raise EmptyCell(f"no training rows for cell {label}")
        if count < LOW_SAMPLE_ROWS:
            log.warning("cell %s trained on only %d rows", label, count)
        model = _fit(kind, fm.X[mask], fm.target[mask], seed, stream, forest, boosting)
        return ModelCell(model, count, count < LOW_SAMPLE_ROWS)

    if variant is Variant.FULL:
        for k in range(3):
            for s in sectors:
                mask = rows & (fm.regime == k) & (fm.sector == s)
                cells[(k, s)] = fit_group(mask, (k, s), f"({RegimeLabel(k).slug}, {SECTORS[s]})")
    elif variant is Variant.REGIME_AGNOSTIC:
        for s in sectors:
            cell = fit_group(rows & (fm.sector == s), (ALL_REGIMES, s), f"(any, {SECTORS[s]})")
            for k in range(3):
                cells[(k, s)] = cell
    else:
        for k in range(3):
            cell = fit_group(rows & (fm.regime == k), (k, ALL_SECTORS), f"({RegimeLabel(k).slug}, any)")
            for s in sectors:
                cells[(k, s)] = cell
    return ModelRegistry(cells, variant, kind, scaler)


def predict_next_day(registry: ModelRegistry, rows: FeatureMatrix) -> np.ndarray:
    """Expected next-day log return for every row, each from its own cell's model."""
    if not rows.scaled:
        raise UnscaledInput("feature rows must be scaled with the registry's scaler")
    out = np.empty(len(rows))
    keys = np.stack([rows.regime, rows.sector], axis=1)
    for key in {(int(k), int(s)) for k, s in keys}:
        cell = registry.cells.get(key)
        if cell is None:
            raise MissingModelCell(f"no model for regime {RegimeLabel(key[0]).slug}, sector {SECTORS[key[1]]}")
        mask = (rows.regime == key[0]) & (rows.sector == key[1])
        out[mask] = cell.model.predict(rows.X[mask])
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("non-finite forecast")
    return out


def importance_table(
    registry: ModelRegistry, fm: FeatureMatrix, rows: np.ndarray, seed: int = 42, n_repeats: int = 10
) -> list[tuple[str, str, str, float]]:
    """(regime, sector, feature, importance) for every cell with enough rows."""
    out = []
    for (k, s), cell in sorted(registry.cells.items()):
        mask = rows & fm.has_target & (fm.regime == k) & (fm.sector == s)
        if mask.sum() < 20:
            continue
        _, norm = permutation_importance(cell.model, fm.X[mask], fm.target[mask], seed, n_repeats)
        out.extend((RegimeLabel(k).slug, SECTORS[s], FEATURES[j], float(norm[j])) for j in range(len(FEATURES)))
    return out


def write_importance_csv(path: str | Path, table) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("regime", "sector", "feature", "importance"))
        for regime, sector, feature, value in table:
            w.writerow((regime, sector, feature, repr(value)))


def _model_to_dict(model: EnsembleModel) -> dict:
    return {
        "kind": model.kind.value,
        "seed": model.seed,
        "hyperparameters": model.hyperparameters,
        "learning_rate": model.learning_rate,
        "base_prediction": model.base_prediction,
        "trees": [t.preorder() for t in model.trees],
    }


def _model_from_dict(d: dict) -> EnsembleModel:
    return EnsembleModel(
        kind=ModelKind(d["kind"]),
        trees=tuple(TreeNode.from_preorder(t) for t in d["trees"]),
        hyperparameters=d["hyperparameters"],
        seed=d["seed"],
        learning_rate=d["learning_rate"],
        base_prediction=d["base_prediction"],
    )


def registry_to_json(registry: ModelRegistry) -> str:
    """Versioned JSON text; each tree is a preorder list of nodes."""
    models: dict[int, int] = {}
    model_list = []
    cells = []
    for (k, s), cell in sorted(registry.cells.items()):
        mid = models.get(id(cell.model))
        if mid is None:
            mid = models[id(cell.model)] = len(model_list)
            model_list.append(_model_to_dict(cell.model))
        cells.append({"regime": RegimeLabel(k).slug, "sector": SECTORS[s], "model": mid,
                      "n_rows": cell.n_rows, "low_sample": cell.low_sample})
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "variant": registry.variant.value,
        "kind": registry.kind.value,
        "features": list(FEATURES),
        "cells": cells,
        "models": model_list,
    }
    if registry.scaler is not None:
        sc = registry.scaler
        doc["scaler"] = {
            "mean": sc.mean.tolist(), "std": sc.std.tolist(),
            "fitted": sc.fitted.tolist(), "degenerate": sc.degenerate.tolist(), "pooled": sc.pooled,
        }
    return json.dumps(doc, separators=(",", ":"))


def registry_from_json(text: str) -> ModelRegistry:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_NAME or doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported registry format {doc.get('format')!r} v{doc.get('version')}")
    models = [_model_from_dict(m) for m in doc["models"]]
    slugs = {r.slug: int(r) for r in RegimeLabel}
    cells = {
        (slugs[c["regime"]], SECTORS.index(c["sector"])): ModelCell(models[c["model"]], c["n_rows"], c["low_sample"])
        for c in doc["cells"]
    }
    scaler = None
    if "scaler" in doc:
        sc = doc["scaler"]
        scaler = RegimeScaler(np.array(sc["mean"]), np.array(sc["std"]), np.array(sc["fitted"], dtype=bool),
                              np.array(sc["degenerate"], dtype=bool), sc["pooled"])
    return ModelRegistry(cells, Variant(doc["variant"]), ModelKind(doc["kind"]), scaler)


def save_registry(path: str | Path, registry: ModelRegistry) -> None:
    Path(path).write_text(registry_to_json(registry))


def load_registry(path: str | Path) -> ModelRegistry:
    return registry_from_json(Path(path).read_text())
