from typing import Optional

from typing_extensions import TypedDict


class EpochLosses(TypedDict):
    """Losses recorded for one training epoch (None when a term was skipped)."""
    epoch: int
    loss_c: float
    loss_i: Optional[float]
    loss_a: Optional[float]
    val_avpr: float


class AuditRow(TypedDict):
    """One row of the sensitive/label correlation audit."""
    method: str
    corr_true: float
    corr_imputed: float
    n: int


class CheckResult(TypedDict):
    """Outcome of one verification check."""
    name: str
    passed: bool
    detail: str
