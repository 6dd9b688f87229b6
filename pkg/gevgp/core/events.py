"""Event types published while fitting."""

from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Literal, Union


@dataclass
class FitEvent:
    """Base class for fit events."""
    timestamp: datetime = field(default_factory=datetime.now)
    metadata: Dict[str, Any] = field(default_factory=dict)


@dataclass
class FitStartEvent(FitEvent):
    """Outer optimization is about to start."""
    model: str = ""
    n_sites: int = 0
    n_obs: int = 0
    theta_names: List[str] = field(default_factory=list)
    theta_init: List[float] = field(default_factory=list)
    kind: Literal["fit_start"] = "fit_start"


@dataclass
class OuterStepEvent(FitEvent):
    """An outer quasi-Newton step was accepted."""
    iteration: int = 0
    theta: List[float] = field(default_factory=list)
    logml: float = 0.0
    grad_norm: float = 0.0
    kind: Literal["outer_step"] = "outer_step"


@dataclass
class PsdRepairEvent(FitEvent):
    """A covariance was projected to the nearest positive (semi)definite matrix."""
    target: str = ""
    min_eigenvalue: float = 0.0
    kind: Literal["psd_repair"] = "psd_repair"


@dataclass
class FitEndEvent(FitEvent):
    """The fit finished (successfully or not)."""
    converged: bool = False
    logml: float = 0.0
    iterations: int = 0
    wall_seconds: float = 0.0
    message: str = ""
    kind: Literal["fit_end"] = "fit_end"


Event = Union[FitStartEvent, OuterStepEvent, PsdRepairEvent, FitEndEvent]
