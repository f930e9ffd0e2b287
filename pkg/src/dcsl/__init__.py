"""Discriminative cost-sensitive learning on small dense networks, in numpy."""
from dcsl.centers import CenterBank, delta_centers, init_centers, update_centers
from dcsl.costs import (
    LossCostMatrix,
    ScoreCostMatrix,
    apply_score_costs,
    default_clinical_matrix,
    expected_risk,
    min_risk_decision,
    validate_clinical_ordering,
)
from dcsl.data import Dataset, SynthConfig, generate, kfold, load_csv, save_csv
from dcsl.errors import (
    DCSLError,
    DegenerateSampleError,
    ParseError,
    RejectedInputError,
    TrainingDivergenceError,
    UnsupportedConfigurationError,
)
from dcsl.evaluation import MetricsReport, confusion, metrics, paired_ttest
from dcsl.losses import (
    center_loss,
    conditional_center_loss,
    cost_weighted_ce,
    dcsl_loss,
    softmax,
    softmax_ce,
)
from dcsl.nncore import Network, build_network
from dcsl.trainer import LOSS_MODES, TrainConfig, TrainState, embed, fit, predict

__version__ = "0.1.0"
