"""Hierarchical contextual bandits (HCB / pHCB) over clustered item trees."""
from .bandits import Arm, BudgetLedger, EstimatorConfig, sample_candidates, select, update
from .experiment import ExperimentConfig, ExperimentLog, load_config, report, run_experiment
from .kmeans import kmeans
from .policies import (
    FlatPolicy,
    HcbPolicy,
    HcbUserState,
    NodeStats,
    PhcbPolicy,
    PhcbUserState,
    PolicyOutcome,
    TwoStagePolicy,
    check_expansion,
    hcb_select,
    hcb_update,
    item_set_of,
    phcb_select,
    phcb_update,
)
from .ridge import RidgeBank, RidgeState, new_ridge_state, quadratic_form, rank1_update
from .tree import HierarchyTree, ItemEmbedding, TreeNode, build_category_grouping, build_tree
from .world import SyntheticWorld, cumulative_regret, draw_reward, expected_reward, gen_synthetic, oracle_best

__version__ = "0.1.0"
