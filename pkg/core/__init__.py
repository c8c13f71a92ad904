from .autodiff import Tape, Tensor, backward
from .graph import Graph, degrees, generate_sbm, label_assortativity, normalized_adjacency
from .losses import (
    LdamMargins,
    MergedSensitive,
    adversary_loss,
    classification_loss,
    imputation_loss,
    merge_sensitive,
)
from .optim import AdamState, adam_step

__all__ = [
    'Tape',
    'Tensor',
    'backward',
    'Graph',
    'degrees',
    'generate_sbm',
    'label_assortativity',
    'normalized_adjacency',
    'LdamMargins',
    'MergedSensitive',
    'adversary_loss',
    'classification_loss',
    'imputation_loss',
    'merge_sensitive',
    'AdamState',
    'adam_step',
]
