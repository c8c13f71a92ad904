# schemas.py - Pydantic schemas for configuration, plans and result rows
import itertools
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_BLOCK_SIZES,
    DEFAULT_COVERAGE_RADIUS,
    DEFAULT_DROPOUT,
    DEFAULT_EPOCHS,
    DEFAULT_GAMMA,
    DEFAULT_HIDDEN_ADVERSARY,
    DEFAULT_HIDDEN_CLASSIFIER,
    DEFAULT_HIDDEN_IMPUTER,
    DEFAULT_LDAM_C,
    DEFAULT_LR,
    DEFAULT_N_FEATURES,
    DEFAULT_N_NOISE,
    DEFAULT_OBSERVED_FRAC,
    DEFAULT_P_BIAS,
    DEFAULT_P_IN,
    DEFAULT_P_OUT,
    DEFAULT_TRAIN_FRAC,
    DEFAULT_VAL_FRAC,
)

METRICS_HEADER = (
    "mode", "alpha", "beta", "observed_frac", "seed", "f1", "avpr", "ddp", "deqop",
    "corr_true", "corr_imputed", "assortativity",
)

Probability = Field(ge=0.0, le=1.0)


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SbmConfig(_Frozen):
    """Stochastic block model benchmark parameters."""
    block_sizes: List[int] = Field(default_factory=lambda: list(DEFAULT_BLOCK_SIZES))
    p_in: float = Field(DEFAULT_P_IN, ge=0.0, le=1.0)
    p_out: float = Field(DEFAULT_P_OUT, ge=0.0, le=1.0)
    p_bias: float = Field(DEFAULT_P_BIAS, ge=0.0, le=1.0)
    n_features: int = Field(DEFAULT_N_FEATURES, ge=1)
    n_noise: int = Field(DEFAULT_N_NOISE, ge=0)
    gamma: float = DEFAULT_GAMMA
    seed: int = Field(0, ge=0, lt=2**64)
    train_frac: float = Field(DEFAULT_TRAIN_FRAC, ge=0.0, le=1.0)
    val_frac: float = Field(DEFAULT_VAL_FRAC, ge=0.0, le=1.0)

    @field_validator("block_sizes")
    @classmethod
    def _non_negative_blocks(cls, sizes: List[int]) -> List[int]:
        if not sizes or any(size < 0 for size in sizes):
            raise ValueError("block_sizes must be a non-empty list of non-negative counts")
        return sizes

    @model_validator(mode="after")
    def _consistent(self) -> "SbmConfig":
        if self.n_noise > self.n_features:
            raise ValueError("n_noise cannot exceed n_features")
        if self.train_frac + self.val_frac > 1.0:
            raise ValueError("train_frac + val_frac cannot exceed 1")
        return self

    @property
    def n_nodes(self) -> int:
        return sum(self.block_sizes)


class MissingnessSpec(_Frozen):
    """Which sensitive values stay observed. ``k_observed`` wins over ``observed_frac``."""
    kind: Literal["mcar", "degree", "coverage-greedy", "coverage-exact"] = "degree"
    k_observed: Optional[int] = Field(None, ge=0)
    observed_frac: Optional[float] = Field(DEFAULT_OBSERVED_FRAC, ge=0.0, le=1.0)
    seed: int = Field(0, ge=0)
    radius: int = Field(DEFAULT_COVERAGE_RADIUS, ge=0)

    def resolve_k(self, n_nodes: int) -> int:
        if self.k_observed is not None:
            k = self.k_observed
        else:
            k = int(round((self.observed_frac or 0.0) * n_nodes))
        if k > n_nodes:
            raise ValueError(f"k_observed={k} exceeds {n_nodes} nodes")
        return k


class ModelShapes(_Frozen):
    n_features: int = Field(ge=1)
    hidden_classifier: int = Field(DEFAULT_HIDDEN_CLASSIFIER, ge=1)
    hidden_imputer: int = Field(DEFAULT_HIDDEN_IMPUTER, ge=1)
    hidden_adversary: int = Field(DEFAULT_HIDDEN_ADVERSARY, ge=1)


class TrainConfig(_Frozen):
    """Hyperparameters and mode flags of one training run."""
    alpha: float = Field(DEFAULT_ALPHA, ge=0.0)
    beta: float = Field(DEFAULT_BETA, ge=0.0)
    ldam_C: float = Field(DEFAULT_LDAM_C, ge=0.0)
    imputer_loss: Literal["ldam", "ce"] = "ldam"
    lr_classifier: float = Field(DEFAULT_LR, gt=0.0)
    lr_imputer: float = Field(DEFAULT_LR, gt=0.0)
    lr_adversary: float = Field(DEFAULT_LR, gt=0.0)
    epochs: int = Field(DEFAULT_EPOCHS, ge=1)
    imputer_epochs: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    mode: Literal["bfts", "vanilla", "two-player", "indep"] = "bfts"
    sensitive_mode: Literal["observed", "label-proxy"] = "observed"
    select_on: Literal["val-avpr"] = "val-avpr"
    dropout: float = Field(DEFAULT_DROPOUT, ge=0.0, lt=1.0)
    hidden_classifier: int = Field(DEFAULT_HIDDEN_CLASSIFIER, ge=1)
    hidden_imputer: int = Field(DEFAULT_HIDDEN_IMPUTER, ge=1)
    hidden_adversary: int = Field(DEFAULT_HIDDEN_ADVERSARY, ge=1)
    oracle_sensitive: bool = False

    @field_validator("mode", mode="before")
    @classmethod
    def _mode_alias(cls, value):
        return "indep" if value == "independent-imputation" else value

    @property
    def effective_ldam_C(self) -> float:
        return 0.0 if self.imputer_loss == "ce" else self.ldam_C

    def shapes(self, n_features: int) -> ModelShapes:
        return ModelShapes(
            n_features=n_features,
            hidden_classifier=self.hidden_classifier,
            hidden_imputer=self.hidden_imputer,
            hidden_adversary=self.hidden_adversary,
        )


class PlanCell(_Frozen):
    """One fully specified experiment; seeds are applied by the plan."""
    train: TrainConfig = Field(default_factory=TrainConfig)
    missingness: MissingnessSpec = Field(default_factory=MissingnessSpec)
    sbm: Optional[SbmConfig] = None
    graph_path: Optional[str] = None

    @model_validator(mode="after")
    def _one_graph_source(self) -> "PlanCell":
        if (self.sbm is None) == (self.graph_path is None):
            raise ValueError("a cell needs exactly one of sbm or graph_path")
        return self

    def seeded(self, seed: int) -> "PlanCell":
        update = {
            "train": self.train.model_copy(update={"seed": seed}),
            "missingness": self.missingness.model_copy(update={"seed": seed}),
        }
        if self.sbm is not None:
            update["sbm"] = self.sbm.model_copy(update={"seed": seed})
        return self.model_copy(update=update)

    @property
    def key(self) -> str:
        graph = (
            f"sbm:{self.sbm.p_in:g}/{self.sbm.p_out:g}" if self.sbm is not None else f"file:{self.graph_path}"
        )
        frac = self.missingness.observed_frac if self.missingness.k_observed is None else self.missingness.k_observed
        return (
            f"{self.train.mode}|a={self.train.alpha:g}|b={self.train.beta:g}|"
            f"{self.missingness.kind}={frac}|{graph}"
        )


class ExperimentPlan(_Frozen):
    """A sweep: explicit cells, or a base cell expanded over grids."""
    base: Optional[PlanCell] = None
    cells: List[PlanCell] = Field(default_factory=list)
    modes: List[Literal["bfts", "vanilla", "two-player", "indep"]] = Field(default_factory=list)
    alpha_grid: List[float] = Field(default_factory=list)
    beta_grid: List[float] = Field(default_factory=list)
    observed_frac_grid: List[float] = Field(default_factory=list)
    p_grid: List[Tuple[float, float]] = Field(default_factory=list)
    seeds: List[int] = Field(default_factory=lambda: [0])
    output_dir: str = "sweep_out"

    @model_validator(mode="after")
    def _has_cells(self) -> "ExperimentPlan":
        if self.base is None and not self.cells:
            raise ValueError("plan needs a base cell or explicit cells")
        if not self.seeds:
            raise ValueError("plan needs at least one seed")
        return self

    def expand(self) -> List[PlanCell]:
        """Explicit cells followed by the grid product over ``base``."""
        cells = list(self.cells)
        if self.base is None:
            return cells
        base = self.base
        modes = self.modes or [base.train.mode]
        alphas = self.alpha_grid or [base.train.alpha]
        betas = self.beta_grid or [base.train.beta]
        fracs = self.observed_frac_grid or [base.missingness.observed_frac]
        probs = self.p_grid or [None]
        for mode, alpha, beta, frac, p in itertools.product(modes, alphas, betas, fracs, probs):
            update = {
                "train": base.train.model_copy(update={"mode": mode, "alpha": alpha, "beta": beta}),
                "missingness": base.missingness.model_copy(update={"observed_frac": frac, "k_observed": None}),
            }
            if p is not None:
                if base.sbm is None:
                    raise ValueError("p_grid needs an SBM base cell")
                update["sbm"] = base.sbm.model_copy(update={"p_in": p[0], "p_out": p[1]})
            cells.append(base.model_copy(update=update))
        return cells


class MetricsRecord(_Frozen):
    """One evaluated run. The CSV columns follow ``METRICS_HEADER``."""
    mode: str
    alpha: float
    beta: float
    observed_frac: float
    seed: int
    f1: float = Field(ge=0.0, le=1.0)
    avpr: float = Field(ge=0.0, le=1.0)
    ddp: float = Field(ge=0.0, le=1.0)
    deqop: float = Field(ge=0.0, le=1.0)
    corr_true: float
    corr_imputed: float
    assortativity: float
    imputation_acc: Optional[float] = None
    loss_c: Optional[float] = None
    loss_i: Optional[float] = None
    loss_a: Optional[float] = None

    def csv_row(self) -> str:
        cells = []
        for name in METRICS_HEADER:
            value = getattr(self, name)
            cells.append(format(value, ".17g") if isinstance(value, float) else str(value))
        return ",".join(cells)
