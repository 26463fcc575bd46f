"""RIS coefficient optimization (SNR-max, quantized, min-max PEB over an
uncertainty region), subarray beam assignment search and offline RIS
placement by localization coverage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrays import ArraySpec
from .channel import RisProfile, quantize_phases
from .constants import SPEED_OF_LIGHT as C
from .errors import ConfigError
from .scenarios import Scenario

__all__ = [
    "BeamAssignment",
    "beam_assignment_search",
    "quantize_profile",
    "ris_minmax_peb",
    "ris_placement_coverage",
    "ris_snr_max",
]


@dataclass
class BeamAssignment:
    """Per-SA beam split at the BS: b_r beams to the RIS, the rest to the UE."""

    b_r: int
    n_sa: int

    def __post_init__(self):
        if not 0 <= self.b_r <= self.n_sa:
            raise ConfigError("beam split must satisfy 0 <= b_r <= n_sa")

    @property
    def b_u(self) -> int:
        return self.n_sa - self.b_r


def _cascade_phases(ris: ArraySpec, p_bs: np.ndarray, p_ue: np.ndarray, f_c: float) -> np.ndarray:
    """Per-element phase of the incoming x outgoing steering product at f_c."""
    units = ris.sa_centers_local
    rot = ris.pose.rotation
    t_rb = rot.T @ _unit(p_bs - ris.pose.position)
    t_ru = rot.T @ _unit(p_ue - ris.pose.position)
    return (2 * np.pi * f_c / C) * (units @ (t_rb + t_ru))


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ConfigError("coincident points in RIS geometry")
    return v / n


def ris_snr_max(ris: ArraySpec, p_bs, p_ue, f_c: float) -> RisProfile:
    """Phase-conjugate profile: every element cancels its cascade phase at
    the carrier, so the aggregate reflection reaches its maximum N_R."""
    phases = np.mod(-_cascade_phases(ris, np.asarray(p_bs, float), np.asarray(p_ue, float), f_c), 2 * np.pi)
    return RisProfile(np.ones(ris.n_sa), phases)


def aggregate_gain(ris: ArraySpec, profile: RisProfile, p_bs, p_ue, f_c: float) -> float:
    """|sum_n beta_n e^{j omega_n} e^{j cascade phase_n}| at the carrier."""
    phases = _cascade_phases(ris, np.asarray(p_bs, float), np.asarray(p_ue, float), f_c)
    return float(np.abs(np.sum(profile.coefficients() * np.exp(1j * phases))))


def quantize_profile(profile: RisProfile, bits: int) -> RisProfile:
    """Snap every phase to the 2**bits uniform grid (ties to the lower point)."""
    return RisProfile(profile.amplitudes.copy(), quantize_phases(profile.phases, bits))


def _scenario_peb(scenario: Scenario, profile: RisProfile | None = None) -> float:
    from .fim import ScenarioModel, crb_from_fim, fim_state

    model = ScenarioModel(scenario)
    if profile is not None:
        model.profile = profile
        model.omega = np.tile(profile.coefficients()[None, :], (model.n_g, 1))
    return crb_from_fim(fim_state(model, route="direct")).derived["peb"]


def _scenario_peb_profiles(scenario: Scenario, omega: np.ndarray) -> float:
    """PEB with explicit per-transmission RIS coefficient rows (G, N_R)."""
    from .fim import ScenarioModel, crb_from_fim, fim_state

    model = ScenarioModel(scenario)
    model.omega = np.asarray(omega, dtype=complex)
    return crb_from_fim(fim_state(model, route="direct")).derived["peb"]


def beam_assignment_search(scenario: Scenario, candidates=None) -> tuple[BeamAssignment, list]:
    """Grid search over the RIS/UE beam split b_r; returns the argmin
    assignment and the full (b_r, PEB) curve.

    Requires prior UE position knowledge (beams are aimed, not random).
    """
    bs = scenario.built_bs()
    if candidates is None:
        candidates = list(range(0, bs.n_sa + 1))
    curve = []
    for b_r in candidates:
        if scenario.ris.enabled is False and b_r > 0:
            curve.append((b_r, float("inf")))
            continue
        sc = scenario.copy()
        sc.beams.mode = "split"
        sc.beams.b_r = int(b_r)
        curve.append((int(b_r), _scenario_peb(sc)))
    best = min(curve, key=lambda t: t[1])
    return BeamAssignment(b_r=best[0], n_sa=bs.n_sa), curve


def ris_placement_coverage(scenario: Scenario, candidate_poses, ue_grid, threshold: float) -> dict:
    """Offline RIS placement: count UE grid points whose PEB stays within the
    threshold for each candidate (position, orientation) pose; nuisance
    parameters take their nominal channel-model values.

    Returns the argmax candidate index, per-candidate counts and the PEB maps.
    """
    candidate_poses = list(candidate_poses)
    ue_grid = [np.asarray(p, dtype=float) for p in ue_grid]
    if not candidate_poses or not ue_grid:
        raise ConfigError("placement search needs non-empty candidate and UE grids")
    counts = []
    peb_maps = []
    for position, orientation in candidate_poses:
        sc = scenario.copy()
        sc.ris.enabled = True
        sc.ris.position = list(np.asarray(position, dtype=float))
        sc.ris.orientation = list(np.asarray(orientation, dtype=float))
        pebs = []
        for p_ue in ue_grid:
            sc_u = sc.copy()
            sc_u.ue.position = list(p_ue)
            try:
                pebs.append(_scenario_peb(sc_u))
            except Exception:  # noqa: BLE001 - unreachable geometry counts as uncovered
                pebs.append(float("inf"))
        peb_maps.append(pebs)
        counts.append(int(sum(1 for v in pebs if v <= threshold)))
    best = int(np.argmax(counts))
    return {"best_index": best, "counts": counts, "peb_maps": peb_maps, "threshold": threshold}


def ris_minmax_peb(
    scenario: Scenario,
    region,
    max_iterations: int = 200,
    improvement_floor: float = 1e-6,
) -> dict:
    """Min-max PEB optimization of per-transmission RIS phase profiles over a
    finite UE uncertainty region.

    Alternating scheme: initialize from the SNR-max profile at the region
    centroid; at each iteration relax the unit-modulus constraint by moving
    the complex coefficients toward the SNR-max solution of the current
    worst-case point, project back to unit modulus, and accept only strict
    worst-case improvements.  The returned worst-case PEB is re-evaluated
    exactly after projection.
    """
    region = [np.asarray(p, dtype=float) for p in region]
    if not region:
        raise ConfigError("uncertainty region must be non-empty")
    if not scenario.ris.enabled:
        raise ConfigError("min-max RIS optimization needs an enabled RIS")
    ris = scenario.built_ris()
    f_c = scenario.waveform.f_c_hz
    p_bs = np.asarray(scenario.bs.position, dtype=float)
    n_g = scenario.waveform.n_transmissions

    centroid = np.mean(np.stack(region), axis=0)
    w0 = ris_snr_max(ris, p_bs, centroid, f_c).coefficients()
    omega = np.tile(w0[None, :], (n_g, 1))

    def worst_case(om):
        pebs = []
        for p_u in region:
            sc = scenario.copy()
            sc.ue.position = list(p_u)
            pebs.append(_scenario_peb_profiles(sc, om))
        return max(pebs), pebs

    best_worst, best_pebs = worst_case(omega)
    improved_any = False
    history = [best_worst]
    for _ in range(max_iterations):
        worst_idx = int(np.argmax(best_pebs))
        target = ris_snr_max(ris, p_bs, region[worst_idx], f_c).coefficients()
        accepted = False
        for step in (0.5, 0.25, 0.1, 0.05):
            relaxed = (1 - step) * omega + step * target[None, :]
            mags = np.abs(relaxed)
            projected = np.where(mags > 1e-12, relaxed / np.maximum(mags, 1e-12), 1.0)
            cand_worst, cand_pebs = worst_case(projected)
            if cand_worst < best_worst * (1 - improvement_floor):
                omega = projected
                best_worst, best_pebs = cand_worst, cand_pebs
                accepted = True
                improved_any = True
                break
        history.append(best_worst)
        if not accepted:
            break
    phases = np.mod(np.angle(omega), 2 * np.pi)
    profiles = [RisProfile(np.ones(ris.n_sa), phases[g]) for g in range(n_g)]
    return {
        "profiles": profiles,
        "omega": omega,
        "worst_case_peb": best_worst,
        "per_point_peb": best_pebs,
        "improved": improved_any,
        "history": history,
    }
