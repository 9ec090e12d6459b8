"""Random forest and least-squares gradient boosting over CART base learners."""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from ..errors import EmptyTrainingSet, TooFewRows
from .cart import TreeNode, _predict_forest, expand_presort, fit_cart, presort


class ModelKind(str, enum.Enum):
    RANDOM_FOREST = "random-forest"
    GRADIENT_BOOSTING = "gradient-boosting"


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    max_depth: int = 10
    min_samples_split: int = 5
    random_state: int = 42


@dataclass(frozen=True)
class BoostingParams:
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_split: int = 2
    random_state: int = 42


def tree_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by seed and stream coordinates."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    kind: ModelKind
    trees: tuple[TreeNode, ...]
    hyperparameters: dict
    seed: int
    learning_rate: float = 1.0
    base_prediction: float = 0.0
    train_mse: tuple[float, ...] = field(default=(), repr=False)

    @cached_property
    def _packed(self):
        roots = np.zeros(len(self.trees), dtype=np.int64)
        if self.trees:
            roots[1:] = np.cumsum([t.n_nodes for t in self.trees])[:-1]
        cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees]) if self.trees else np.zeros(0)  # noqa: E731
        return (
            cat("feature").astype(np.int64),
            cat("threshold").astype(np.float64),
            cat("left").astype(np.int64),
            cat("right").astype(np.int64),
            cat("value").astype(np.float64),
            roots,
        )

    def tree_outputs(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if not self.trees:
            return np.zeros((0, len(X)))
        return _predict_forest(*self._packed, X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = self.tree_outputs(X)
        if self.kind is ModelKind.RANDOM_FOREST:
            return out.mean(axis=0)
        pred = np.full(out.shape[1], self.base_prediction)
        for row in out:  # staged, in boosting order
            pred += self.learning_rate * row
        return pred

    def used_features(self) -> set[int]:
        used: set[int] = set()
        for t in self.trees:
            used |= t.used_features()
        return used


def _check_rows(X: np.ndarray, y: np.ndarray, need: int) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if len(X) == 0:
        raise EmptyTrainingSet("no training rows")
    if len(X) < need:
        raise EmptyTrainingSet(f"{len(X)} training rows, need at least {need}")
    return X, y


def fit_random_forest(
    X: np.ndarray,
    y: np.ndarray,
    hp: ForestParams = ForestParams(),
    seed: int | None = None,
    stream: tuple[int, ...] = (),
) -> EnsembleModel:
    """Bagged CART trees with ``max(1, p // 3)`` candidate features per node.

    Tree ``j`` draws its bootstrap sample and feature subsets from
    ``tree_rng(seed, *stream, j)``, so trees are independent of fitting order.
    """
    X, y = _check_rows(X, y, hp.min_samples_split)
    seed = hp.random_state if seed is None else seed
    n, p = X.shape
    mtry = max(1, p // 3)
    order = presort(X, np.arange(n, dtype=np.int64))
    trees = []
    for j in range(hp.n_estimators):
        rng = tree_rng(seed, *stream, j)
        sample = rng.integers(0, n, n)
        # ties between distinct rows keep row order, duplicates sit together
        sorted_rows = expand_presort(order, np.bincount(sample, minlength=n))
        trees.append(fit_cart(X, y, hp.max_depth, hp.min_samples_split, mtry, rng, sample, sorted_rows))
    return EnsembleModel(ModelKind.RANDOM_FOREST, tuple(trees), asdict(hp), seed)


def fit_gbm(
    X: np.ndarray,
    y: np.ndarray,
    hp: BoostingParams = BoostingParams(),
    seed: int | None = None,
) -> EnsembleModel:
    """Least-squares boosting from the target mean; no row or feature subsampling."""
    X, y = _check_rows(X, y, hp.min_samples_split)
    seed = hp.random_state if seed is None else seed
    base = float(y.mean())
    fitted = np.full(len(y), base)
    mse = [float(np.mean((y - fitted) ** 2))]
    rows = np.arange(len(y), dtype=np.int64)
    order = presort(X, rows)  # every round splits the same rows
    trees = []
    for _ in range(hp.n_estimators):
        tree = fit_cart(X, y - fitted, hp.max_depth, hp.min_samples_split, sorted_rows=order)
        fitted = fitted + hp.learning_rate * tree.predict(X)
        trees.append(tree)
        mse.append(float(np.mean((y - fitted) ** 2)))
    return EnsembleModel(
        ModelKind.GRADIENT_BOOSTING, tuple(trees), asdict(hp), seed,
        learning_rate=hp.learning_rate, base_prediction=base, train_mse=tuple(mse),
    )


def permutation_importance(
    model: EnsembleModel,
    X: np.ndarray,
    y: np.ndarray,
    seed: int = 42,
    n_repeats: int = 10,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean MSE increase when each column is shuffled.

    Returns ``(raw, normalized)`` where ``normalized`` clips negatives to zero
    and rescales to sum to one (all zeros if nothing helps).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(X) < 20:
        raise TooFewRows(f"permutation importance needs 20 rows, got {len(X)}")
    base = np.mean((model.predict(X) - y) ** 2)
    raw = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        deltas = []
        for r in range(n_repeats):
            perm = tree_rng(seed, j, r).permutation(len(X))
            Xp = X.copy()
            Xp[:, j] = X[perm, j]
            deltas.append(np.mean((model.predict(Xp) - y) ** 2) - base)
        raw[j] = np.mean(deltas)
    clipped = np.clip(raw, 0.0, None)
    total = clipped.sum()
    return raw, (clipped / total if total > 0 else clipped)
