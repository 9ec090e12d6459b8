from .cart import TreeNode, fit_cart
from .ensemble import (
    BoostingParams,
    EnsembleModel,
    ForestParams,
    ModelKind,
    fit_gbm,
    fit_random_forest,
    permutation_importance,
    tree_rng,
)
from .registry import (
    ModelCell,
    ModelRegistry,
    Variant,
    importance_table,
    load_registry,
    predict_next_day,
    registry_from_json,
    registry_to_json,
    save_registry,
    train_registry,
    write_importance_csv,
)

__all__ = [
    "BoostingParams",
    "EnsembleModel",
    "ForestParams",
    "ModelCell",
    "ModelKind",
    "ModelRegistry",
    "TreeNode",
    "Variant",
    "fit_cart",
    "fit_gbm",
    "fit_random_forest",
    "importance_table",
    "load_registry",
    "permutation_importance",
    "predict_next_day",
    "registry_from_json",
    "registry_to_json",
    "save_registry",
    "train_registry",
    "tree_rng",
    "write_importance_csv",
]
