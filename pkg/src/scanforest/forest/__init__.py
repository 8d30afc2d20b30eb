"""Decision trees and random forests grown from scratch."""
from .ensemble import (
    ForestModel,
    HyperparamSet,
    combine_importances,
    fit,
    grow_trees,
    predict,
    predict_score,
    tree_seed,
)
from .impurity import class_weights, entropy, feature_subset_size, gini
from .tree import Internal, Leaf, Presorted, Split, Tree, TreeNode, best_split, build_tree

__all__ = [
    "ForestModel", "HyperparamSet", "Internal", "Leaf", "Presorted", "Split", "Tree",
    "TreeNode", "best_split", "build_tree", "class_weights", "combine_importances",
    "entropy", "feature_subset_size", "fit", "gini", "grow_trees", "predict",
    "predict_score", "tree_seed",
]
