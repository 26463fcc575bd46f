"""Fisher information, CRBs and error bounds (PEB / OEB / RPEB)."""

from .bounds import (
    ClosedFormComponents,
    FimResult,
    closed_form_scaling_check,
    constrained_crb_orientation,
    crb_from_fim,
    crb_state,
    efim,
    fim_measurement,
    fim_state,
    orientation_basis,
    pinv_psd,
    scenario_metrics,
    state_crb,
)
from .model import ScenarioModel
from .params import ParamKind, ParamLayout, ParamVectors, fd_step

__all__ = [
    "ClosedFormComponents",
    "FimResult",
    "ParamKind",
    "ParamLayout",
    "ParamVectors",
    "ScenarioModel",
    "closed_form_scaling_check",
    "constrained_crb_orientation",
    "crb_from_fim",
    "crb_state",
    "efim",
    "fd_step",
    "fim_measurement",
    "fim_state",
    "orientation_basis",
    "pinv_psd",
    "scenario_metrics",
    "state_crb",
]
