from core import Graph, generate_sbm
from core.trainer import train
from core.sweep import run_sweep
from core.verify import run_verification
from schemas import ExperimentPlan, MissingnessSpec, SbmConfig, TrainConfig

__all__ = [
    'Graph',
    'generate_sbm',
    'train',
    'run_sweep',
    'run_verification',
    'ExperimentPlan',
    'MissingnessSpec',
    'SbmConfig',
    'TrainConfig',
]
