"""Measurement models with analytic derivatives for Fisher-information
analysis.

A :class:`ScenarioModel` binds a scenario to a parameterization family:

* ``local``  - channel-parameter measurement vector with local AOA/AOD
  pairs at each array (far-field / PWM only),
* ``global`` - anchor-side global angle pairs plus the UE orientation as
  measurement entries (far-field / PWM only),
* ``direct`` - the measurement vector is the state vector itself; the only
  family valid under the spherical wave model, where per-unit phases
  depend on positions rather than angles.

The model exposes the noise-free observation tensor mu (G, K, M) and its
analytic Jacobian w.r.t. the measurement vector, the state-to-measurement
mapping gamma(s) with its analytic Jacobian, and finite-difference
fallbacks for validation.  Under PWM the direct family chains the
measurement-level Jacobian through gamma(s) per (g, k); under SWM the
state derivatives are assembled from per-unit distances directly.
"""

from __future__ import annotations

import numpy as np

from ..arrays import ArraySpec, sector_gain
from ..channel import (
    PathDescriptor,
    PathKind,
    RisProfile,
    WaveModel,
    attenuation,
    los_path,
    nlos_paths,
    ris_channel,
)
from ..constants import SPEED_OF_LIGHT as C
from ..errors import ConfigError, DegenerateGeometryError
from ..geometry import (
    angles_with_jacobian,
    direction_from_angles,
    direction_jacobian,
    rotation_derivatives,
    rotation_from_euler,
)
from ..scenarios import Scenario, derive_seed
from ..signal import PilotSchedule, noise_variance, random_combiner
from .params import LayoutBuilder, ParamKind, ParamLayout, ParamVectors, fd_step

__all__ = ["ScenarioModel"]

_TWO_PI = 2 * np.pi


def _steer_grad(positions: np.ndarray, freqs: np.ndarray, t: np.ndarray):
    """Steering vectors over subcarriers: (K, N) values and the (K, N, 3)
    gradient w.r.t. the local direction."""
    proj = positions @ t
    phase = (_TWO_PI / C) * freqs[:, None] * proj[None, :]
    a = np.exp(1j * phase)
    da = (1j * _TWO_PI / C) * freqs[:, None, None] * positions[None, :, :] * a[:, :, None]
    return a, da


def _af_grad(offsets, freqs, f_c, t_steer, beam_dirs, bse):
    """Array factors (K, G, n_sa) for one steering direction and per-SA beams,
    plus the (K, G, n_sa, 3) gradient w.r.t. the steering direction."""
    n_ae = offsets.shape[0]
    psi_s = offsets @ t_steer
    psi_b = np.einsum("gsd,ad->gsa", beam_dirs, offsets)
    fk = freqs[:, None, None, None]
    f_beam = f_c if bse else fk
    phase = (_TWO_PI / C) * (fk * psi_s[None, None, None, :] - f_beam * psi_b[None, :, :, :])
    terms = np.exp(1j * phase)  # (K, G, n_sa, n_ae)
    value = terms.sum(axis=-1) / np.sqrt(n_ae)
    grad = (1j * _TWO_PI / C) * freqs[:, None, None, None] * np.einsum("kgsa,ad->kgsd", terms, offsets) / np.sqrt(n_ae)
    return value, grad


def _af_grad_pairwise(offsets, freqs, f_c, t_steer_pairs, beam_dirs, bse):
    """Pairwise array factors (K, G, n_sa, n_other) with per-pair steering
    directions (n_sa, n_other, 3), and the gradient w.r.t. those directions."""
    n_ae = offsets.shape[0]
    psi_s = np.einsum("ad,smd->sma", offsets, t_steer_pairs)
    psi_b = np.einsum("gsd,ad->gsa", beam_dirs, offsets)
    n_k = len(freqs)
    n_g = beam_dirs.shape[0]
    n_sa, n_other = t_steer_pairs.shape[:2]
    value = np.empty((n_k, n_g, n_sa, n_other), dtype=complex)
    grad = np.empty((n_k, n_g, n_sa, n_other, 3), dtype=complex)
    for ki, fk in enumerate(freqs):
        f_beam = f_c if bse else fk
        phase = (_TWO_PI / C) * (fk * psi_s[None, :, :, :] - f_beam * psi_b[:, :, None, :])
        terms = np.exp(1j * phase)  # (G, n_sa, n_other, n_ae)
        value[ki] = terms.sum(axis=-1) / np.sqrt(n_ae)
        grad[ki] = (1j * _TWO_PI * fk / C) * np.einsum("gsma,ad->gsmd", terms, offsets) / np.sqrt(n_ae)
    return value, grad


def _unit_rows(delta: np.ndarray):
    d = np.linalg.norm(delta, axis=-1)
    return delta / d[..., None], d


class _Path:
    """Per-path truth constants shared by all evaluators."""

    def __init__(self, key: str, desc: PathDescriptor, order: int):
        self.key = key
        self.kind = desc.kind
        self.desc = desc
        self.order = order  # c_k exponent: 1 (LOS/NLOS) or 2 (RIS cascade)


class _GammaContext:
    """A concrete measurement layout (family, layout, values, index map)."""

    def __init__(self, family: str, layout: ParamLayout, values: np.ndarray):
        self.family = family
        self.layout = layout
        self.values = values
        self.ix = {n: i for i, n in enumerate(layout.names)}


class ScenarioModel:
    def __init__(self, scenario: Scenario, family: str = "auto"):
        self.scenario = scenario
        self.wf = scenario.built_waveform()
        self.n_g = self.wf.n_transmissions
        self.n_k = self.wf.n_subcarriers
        self.bs = scenario.built_bs()
        self.ue = scenario.built_ue()
        self.ris = scenario.built_ris()
        self.wave_model = scenario.built_wave_model()
        self.absorption = scenario.built_absorption()
        self.sigma2 = noise_variance(self.wf)
        self.mimo = scenario.mimo
        self.bse = scenario.bse and scenario.mimo == "aosa"
        self.clock_offset = scenario.sync_offset_s
        self.gains_free = scenario.gain_knowledge == "unknown"

        if family == "auto":
            family = "direct" if self.wave_model is WaveModel.SWM else "local"
        if family not in ("local", "global", "direct"):
            raise ConfigError(f"unknown parameterization family {family!r}")
        if self.wave_model is WaveModel.SWM and family != "direct":
            raise ConfigError("SWM scenarios support only the direct (gamma = s) family")
        self.family = family

        rng = np.random.default_rng(derive_seed(scenario.seed, "schedule"))
        self.schedule: PilotSchedule = scenario.built_schedule(rng)
        self.profile = scenario.built_ris_profile(np.random.default_rng(derive_seed(scenario.seed, "ris_profile")))
        self.omega = None
        if self.profile is not None:
            # Per-transmission profiles are supported; a static profile is tiled.
            self.omega = np.tile(self.profile.coefficients()[None, :], (self.n_g, 1))

        self._setup_receive_chain(scenario)
        self._setup_paths()
        self._build_state()
        self._precompute_constants()

        if self.wave_model is WaveModel.PWM:
            inner_family = family if family != "direct" else "local"
            self._inner = self._make_gamma(inner_family)
        else:
            self._inner = None
        if family == "direct":
            self._gamma = _GammaContext("direct", self.state_layout, self.state_values.copy())
        else:
            self._gamma = self._inner

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------
    def _setup_receive_chain(self, scenario: Scenario):
        symbols = self.schedule.symbols
        if self.mimo == "hybrid":
            rng = np.random.default_rng(derive_seed(scenario.seed, "hybrid"))
            self.combiner = random_combiner(self.bs.n_sa, scenario.n_rfc_bs, rng)
            self.precoder = random_combiner(self.ue.n_sa, scenario.n_rfc_ue, rng)
            a = self.combiner.T  # (M_B, N_B)
            chol = np.linalg.cholesky(a @ np.conj(a.T))
            self.t_rx = np.linalg.solve(chol, a)  # whitening x combining
            self.x_eff = np.einsum("un,gkn->gku", self.precoder, symbols)
        else:
            self.combiner = None
            self.precoder = None
            self.t_rx = None
            self.x_eff = np.asarray(symbols, dtype=complex)
            if self.x_eff.shape[2] != self.ue.n_sa:
                raise ConfigError("schedule symbols do not match the UE unit count")
        self.n_rx = self.t_rx.shape[0] if self.t_rx is not None else self.bs.n_sa
        if self.mimo == "aosa":
            if self.schedule.beams_bs is None or self.schedule.beams_ue is None:
                raise ConfigError("AOSA scenario requires beam schedules")
            self.beam_dirs_bs = np.stack(
                [[direction_from_angles(b) for b in per_g] for per_g in self.schedule.beams_bs]
            )
            self.beam_dirs_ue = np.stack(
                [[direction_from_angles(b) for b in per_g] for per_g in self.schedule.beams_ue]
            )
        else:
            self.beam_dirs_bs = None
            self.beam_dirs_ue = None

    def _setup_paths(self):
        self.paths: list[_Path] = []
        desc, _ = los_path(self.bs, self.ue, self.wf, self.clock_offset, self.absorption, WaveModel.PWM)
        self.paths.append(_Path("L", desc, order=1))
        if self.ris is not None:
            desc_r, _ = ris_channel(
                self.bs, self.ris, self.ue, RisProfile.uniform(self.ris.n_sa), self.wf, self.clock_offset, self.absorption
            )
            self.paths.append(_Path("R", desc_r, order=2))
        for desc_n, _ in nlos_paths(
            self.bs, self.ue, self.scenario.scatterer_list(), self.wf, self.clock_offset, self.absorption
        ):
            self.paths.append(_Path(f"N{desc_n.index}", desc_n, order=1))

    def _build_state(self):
        sc = self.scenario
        b = LayoutBuilder()
        pos = self.ue.pose.position
        ori = self.ue.pose.orientation
        b.add("x_U", ParamKind.POSITION, pos[0])
        b.add("y_U", ParamKind.POSITION, pos[1])
        b.add("z_U", ParamKind.POSITION, pos[2], active=sc.position_dims == 3)
        b.add("alpha_U", ParamKind.ORIENTATION, ori[0], active=sc.orientation_dims >= 1)
        b.add("beta_U", ParamKind.ORIENTATION, ori[1], active=sc.orientation_dims == 3)
        b.add("gamma_U", ParamKind.ORIENTATION, ori[2], active=sc.orientation_dims == 3)
        for p in self.paths:
            b.add(f"rho_{p.key}", ParamKind.AMPLITUDE, p.desc.rho, active=self.gains_free)
        for p in self.paths:
            b.add(f"xi_{p.key}", ParamKind.PHASE, p.desc.xi)
        for p in self.paths:
            if p.kind is PathKind.NLOS:
                sp = p.desc.scatter_position
                b.add(f"x_{p.key}", ParamKind.POSITION, sp[0])
                b.add(f"y_{p.key}", ParamKind.POSITION, sp[1])
                b.add(f"z_{p.key}", ParamKind.POSITION, sp[2], active=sc.position_dims == 3)
        b.add("B", ParamKind.OFFSET, sc.sync_offset_s, active=not sc.sync_known)
        self.state_layout, self.state_values = b.build()
        self._six = {n: i for i, n in enumerate(self.state_layout.names)}

    def _make_gamma(self, family: str) -> _GammaContext:
        b = LayoutBuilder()
        for p in self.paths:
            b.add(f"rho_{p.key}", ParamKind.AMPLITUDE, p.desc.rho)
        for p in self.paths:
            b.add(f"xi_{p.key}", ParamKind.PHASE, p.desc.xi)
        for p in self.paths:
            b.add(f"tau_{p.key}", ParamKind.DELAY, p.desc.tau)
        if family == "local":
            for p in self.paths:
                for side, ang in self._local_angle_entries(p):
                    b.add(f"az_{side}", ParamKind.ANGLE, ang.azimuth)
                    b.add(f"el_{side}", ParamKind.ANGLE, ang.elevation)
        else:
            for p in self.paths:
                for side, t_global in self._global_angle_entries(p):
                    az, el, _ = angles_with_jacobian(t_global)
                    b.add(f"az_{side}", ParamKind.ANGLE, az)
                    b.add(f"el_{side}", ParamKind.ANGLE, el)
            ori = self.ue.pose.orientation
            b.add("alpha_U", ParamKind.ORIENTATION, ori[0])
            b.add("beta_U", ParamKind.ORIENTATION, ori[1])
            b.add("gamma_U", ParamKind.ORIENTATION, ori[2])
        layout, values = b.build()
        return _GammaContext(family, layout, values)

    def _local_angle_entries(self, p: _Path):
        d = p.desc
        if p.kind is PathKind.LOS:
            return [("BU", d.angles["bs_local"]), ("UB", d.angles["ue_local"])]
        if p.kind is PathKind.RIS:
            return [("RU", d.angles["ris_out_local"]), ("UR", d.angles["ue_local"])]
        l = p.key[1:]
        return [(f"BN{l}", d.angles["bs_local"]), (f"UN{l}", d.angles["ue_local"])]

    def _global_angle_entries(self, p: _Path):
        p_u = self.ue.pose.position
        if p.kind is PathKind.LOS:
            t, _ = _unit_rows(p_u - self.bs.pose.position)
            return [("BU", t)]
        if p.kind is PathKind.RIS:
            t, _ = _unit_rows(p_u - self.ris.pose.position)
            return [("RU", t)]
        l = p.key[1:]
        p_n = p.desc.scatter_position
        t_bn, _ = _unit_rows(p_n - self.bs.pose.position)
        t_nu, _ = _unit_rows(p_u - p_n)
        return [(f"BN{l}", t_bn), (f"NU{l}", t_nu)]

    def _precompute_constants(self):
        wf = self.wf
        self.freqs = wf.subcarrier_freqs
        self.dfreqs = wf.subcarrier_offsets
        self.cks = wf.freq_ratios
        # Per-element power model: AOSA chains radiate (UE side) and collect
        # (BS side) power proportional to their SA sizes.
        power_scale = 1.0
        if self.mimo == "aosa" and self.scenario.per_element_power:
            power_scale = np.sqrt(self.bs.n_ae * self.ue.n_ae)
        self.sqrt_p = np.sqrt(wf.power_mw) * power_scale
        self.r_bs = self.bs.pose.rotation
        self.r_ris = self.ris.pose.rotation if self.ris is not None else None
        self.bs_units = self.bs.sa_centers_local
        self.ue_units = self.ue.sa_centers_local
        if self.ris is not None:
            d = next(p.desc for p in self.paths if p.kind is PathKind.RIS)
            self._t_b_ris_local = direction_from_angles(d.angles["bs_local"])
            self._t_rb_local = direction_from_angles(d.angles["ris_in_local"])
            self._a_rb = _steer_grad(self.ris.sa_centers_local, self.freqs, self._t_rb_local)[0]

    # ------------------------------------------------------------------
    # public layout accessors
    # ------------------------------------------------------------------
    @property
    def gamma_layout(self) -> ParamLayout:
        return self._gamma.layout

    @property
    def gamma_values(self) -> np.ndarray:
        return self._gamma.values

    @property
    def param_vectors(self) -> ParamVectors:
        return ParamVectors(self.state_layout, self.state_values.copy(), self.gamma_layout, self.gamma_values.copy())

    # ------------------------------------------------------------------
    # gamma(s)
    # ------------------------------------------------------------------
    def gamma_of_state(self, s: np.ndarray) -> np.ndarray:
        if self.family == "direct":
            return np.asarray(s, dtype=float).copy()
        return self._gamma_of_state_ctx(np.asarray(s, dtype=float), self._gamma)

    def _gamma_of_state_ctx(self, s: np.ndarray, ctx: _GammaContext) -> np.ndarray:
        six = self._six
        p_u = np.array([s[six["x_U"]], s[six["y_U"]], s[six["z_U"]]])
        o_u = np.array([s[six["alpha_U"]], s[six["beta_U"]], s[six["gamma_U"]]])
        r_ue = rotation_from_euler(o_u)
        b_off = s[six["B"]]
        out = np.empty(len(ctx.layout))
        for p in self.paths:
            geo = self._path_geometry(p, s, p_u, r_ue, ctx.family)
            out[ctx.ix[f"tau_{p.key}"]] = geo["d_total"] / C + b_off
            out[ctx.ix[f"xi_{p.key}"]] = s[six[f"xi_{p.key}"]]
            out[ctx.ix[f"rho_{p.key}"]] = s[six[f"rho_{p.key}"]] if self.gains_free else geo["rho"]
            for name, vec in geo["angle_vectors"].items():
                az, el, _ = angles_with_jacobian(vec)
                out[ctx.ix[f"az_{name}"]] = az
                out[ctx.ix[f"el_{name}"]] = el
        if ctx.family == "global":
            out[ctx.ix["alpha_U"]], out[ctx.ix["beta_U"]], out[ctx.ix["gamma_U"]] = o_u
        return out

    def _path_geometry(self, p: _Path, s, p_u, r_ue, family: str):
        """Distances, geometry-derived rho, and the vectors whose angles form
        the measurement entries of a path."""
        six = self._six
        wl = self.wf.wavelength
        if p.kind is PathKind.LOS:
            delta = p_u - self.bs.pose.position
            d = float(np.linalg.norm(delta))
            if d < 1e-9:
                raise DegenerateGeometryError("UE coincides with the BS")
            rho = wl / (4 * np.pi * d) * attenuation(self.absorption, self.wf.f_c, d) * self._sector_product(p)
            vecs = {"BU": self.r_bs.T @ delta, "UB": r_ue.T @ (-delta)} if family == "local" else {"BU": delta}
            return {"d_total": d, "rho": rho, "angle_vectors": vecs}
        if p.kind is PathKind.RIS:
            d_br = p.desc.distances["bs_ris"]
            delta = p_u - self.ris.pose.position
            d_ru = float(np.linalg.norm(delta))
            if d_ru < 1e-9:
                raise DegenerateGeometryError("UE coincides with the RIS")
            rho = (
                wl**2
                / (16 * np.pi**2 * d_br * d_ru)
                * attenuation(self.absorption, self.wf.f_c, d_br)
                * attenuation(self.absorption, self.wf.f_c, d_ru)
                * self._sector_product(p)
            )
            vecs = {"RU": self.r_ris.T @ delta, "UR": r_ue.T @ (-delta)} if family == "local" else {"RU": delta}
            return {"d_total": d_br + d_ru, "rho": rho, "angle_vectors": vecs}
        l = p.key[1:]
        p_n = np.array([s[six[f"x_N{l}"]], s[six[f"y_N{l}"]], s[six[f"z_N{l}"]]])
        delta_b = p_n - self.bs.pose.position
        d_bn = float(np.linalg.norm(delta_b))
        delta_u = p_n - p_u
        d_nu = float(np.linalg.norm(delta_u))
        if d_bn < 1e-9 or d_nu < 1e-9:
            raise DegenerateGeometryError("scatterer coincides with an endpoint")
        d_tot = d_bn + d_nu
        rho = (
            wl
            / (4 * np.pi * d_tot)
            * p.desc.reflection_coeff
            * attenuation(self.absorption, self.wf.f_c, d_tot)
            * self._sector_product(p)
        )
        if family == "local":
            vecs = {f"BN{l}": self.r_bs.T @ delta_b, f"UN{l}": r_ue.T @ delta_u}
        else:
            vecs = {f"BN{l}": delta_b, f"NU{l}": -delta_u}
        return {"d_total": d_tot, "rho": rho, "angle_vectors": vecs}

    def _sector_product(self, p: _Path) -> float:
        # Sector gains are piecewise constant: evaluated at the true geometry,
        # they contribute no derivative information.
        d = p.desc
        if p.kind is PathKind.RIS:
            return (
                sector_gain(self.bs.gain, d.angles["bs_local"])
                * sector_gain(self.ris.gain, d.angles["ris_in_local"])
                * sector_gain(self.ris.gain, d.angles["ris_out_local"])
                * sector_gain(self.ue.gain, d.angles["ue_local"])
            )
        return sector_gain(self.bs.gain, d.angles["bs_local"]) * sector_gain(self.ue.gain, d.angles["ue_local"])

    def jac_gamma_state(self, s: np.ndarray | None = None, mode: str = "analytic", step_scale: float = 1.0) -> np.ndarray:
        """J_S = d gamma / d s over the full layouts (inactive columns included)."""
        s = self.state_values if s is None else np.asarray(s, dtype=float)
        if self.family == "direct" and self.wave_model is WaveModel.SWM:
            return np.eye(len(self.state_layout))
        ctx = self._inner if self.family == "direct" else self._gamma
        if self.family == "direct":
            # gamma == s: the public Jacobian is the identity.
            return np.eye(len(self.state_layout))
        if mode == "fd":
            return self._jac_gamma_state_fd(s, ctx, step_scale)
        return self._jac_ctx(s, ctx)

    def _jac_gamma_state_fd(self, s: np.ndarray, ctx: _GammaContext, step_scale: float) -> np.ndarray:
        cols = []
        for i in range(len(self.state_layout)):
            h = fd_step(self.state_layout.kinds[i], s[i], step_scale)
            sp, sm = s.copy(), s.copy()
            sp[i] += h
            sm[i] -= h
            cols.append((self._gamma_of_state_ctx(sp, ctx) - self._gamma_of_state_ctx(sm, ctx)) / (2 * h))
        return np.stack(cols, axis=1)

    def _jac_ctx(self, s: np.ndarray, ctx: _GammaContext) -> np.ndarray:
        six = self._six
        gix = ctx.ix
        family = ctx.family
        p_u = np.array([s[six["x_U"]], s[six["y_U"]], s[six["z_U"]]])
        o_u = np.array([s[six["alpha_U"]], s[six["beta_U"]], s[six["gamma_U"]]])
        r_ue = rotation_from_euler(o_u)
        dr = rotation_derivatives(o_u)
        jac = np.zeros((len(ctx.layout), len(self.state_layout)))
        i_pu = [six["x_U"], six["y_U"], six["z_U"]]
        i_ou = [six["alpha_U"], six["beta_U"], six["gamma_U"]]
        kabs = self.absorption.k_abs

        def fill_angles(name, block, cols, accumulate=False):
            rows = [gix[f"az_{name}"], gix[f"el_{name}"]]
            for r_i in range(2):
                for c_i, col in enumerate(cols):
                    if accumulate:
                        jac[rows[r_i], col] += block[r_i, c_i]
                    else:
                        jac[rows[r_i], col] = block[r_i, c_i]

        for p in self.paths:
            key = p.key
            row_tau = gix[f"tau_{key}"]
            row_rho = gix[f"rho_{key}"]
            jac[gix[f"xi_{key}"], six[f"xi_{key}"]] = 1.0
            jac[row_tau, six["B"]] = 1.0
            if p.kind is PathKind.LOS:
                delta = p_u - self.bs.pose.position
                t, d = _unit_rows(delta)
                jac[row_tau, i_pu] = t / C
                if self.gains_free:
                    jac[row_rho, six[f"rho_{key}"]] = 1.0
                else:
                    jac[row_rho, i_pu] = p.desc.rho * (-1.0 / d - kabs / 2) * t
                if family == "local":
                    _, _, j_bu = angles_with_jacobian(self.r_bs.T @ delta)
                    fill_angles("BU", j_bu @ self.r_bs.T, i_pu)
                    _, _, j_ub = angles_with_jacobian(r_ue.T @ (-delta))
                    fill_angles("UB", j_ub @ (-r_ue.T), i_pu)
                    for ax in range(3):
                        jac[[gix["az_UB"], gix["el_UB"]], i_ou[ax]] = j_ub @ (dr[ax].T @ (-delta))
                else:
                    _, _, j_g = angles_with_jacobian(delta)
                    fill_angles("BU", j_g, i_pu)
            elif p.kind is PathKind.RIS:
                delta = p_u - self.ris.pose.position
                t, d_ru = _unit_rows(delta)
                jac[row_tau, i_pu] = t / C
                if self.gains_free:
                    jac[row_rho, six[f"rho_{key}"]] = 1.0
                else:
                    jac[row_rho, i_pu] = p.desc.rho * (-1.0 / d_ru - kabs / 2) * t
                if family == "local":
                    _, _, j_ru = angles_with_jacobian(self.r_ris.T @ delta)
                    fill_angles("RU", j_ru @ self.r_ris.T, i_pu)
                    _, _, j_ur = angles_with_jacobian(r_ue.T @ (-delta))
                    fill_angles("UR", j_ur @ (-r_ue.T), i_pu)
                    for ax in range(3):
                        jac[[gix["az_UR"], gix["el_UR"]], i_ou[ax]] = j_ur @ (dr[ax].T @ (-delta))
                else:
                    _, _, j_g = angles_with_jacobian(delta)
                    fill_angles("RU", j_g, i_pu)
            else:
                l = key[1:]
                i_pn = [six[f"x_N{l}"], six[f"y_N{l}"], six[f"z_N{l}"]]
                p_n = np.array([s[j] for j in i_pn])
                delta_b = p_n - self.bs.pose.position
                t_bn, d_bn = _unit_rows(delta_b)
                delta_u = p_n - p_u
                t_nu, d_nu = _unit_rows(delta_u)  # unit(p_n - p_u)
                jac[row_tau, i_pn] = (t_bn + t_nu) / C
                jac[row_tau, i_pu] = -t_nu / C
                if self.gains_free:
                    jac[row_rho, six[f"rho_{key}"]] = 1.0
                else:
                    scale = p.desc.rho * (-1.0 / (d_bn + d_nu) - kabs / 2)
                    jac[row_rho, i_pn] = scale * (t_bn + t_nu)
                    jac[row_rho, i_pu] = scale * (-t_nu)
                if family == "local":
                    _, _, j_bn = angles_with_jacobian(self.r_bs.T @ delta_b)
                    fill_angles(f"BN{l}", j_bn @ self.r_bs.T, i_pn)
                    _, _, j_un = angles_with_jacobian(r_ue.T @ delta_u)
                    fill_angles(f"UN{l}", j_un @ r_ue.T, i_pn)
                    fill_angles(f"UN{l}", j_un @ (-r_ue.T), i_pu, accumulate=True)
                    for ax in range(3):
                        jac[[gix[f"az_UN{l}"], gix[f"el_UN{l}"]], i_ou[ax]] = j_un @ (dr[ax].T @ delta_u)
                else:
                    _, _, j_bn = angles_with_jacobian(delta_b)
                    fill_angles(f"BN{l}", j_bn, i_pn)
                    _, _, j_nu = angles_with_jacobian(-delta_u)
                    fill_angles(f"NU{l}", j_nu, i_pu)
                    fill_angles(f"NU{l}", -j_nu, i_pn, accumulate=True)
        if family == "global":
            for ax, name in enumerate(("alpha_U", "beta_U", "gamma_U")):
                jac[gix[name], i_ou[ax]] = 1.0
        return jac

    # ------------------------------------------------------------------
    # mu and its Jacobians
    # ------------------------------------------------------------------
    def mu_gamma(self, gamma: np.ndarray | None = None) -> np.ndarray:
        """Noise-free observation tensor (G, K, M) at a measurement vector."""
        gamma = self._gamma.values if gamma is None else np.asarray(gamma, dtype=float)
        if self.family == "direct":
            return self.mu_state(gamma)
        mu, _ = self._assemble_pwm(gamma, self._gamma, want_grad=False)
        return mu

    def mu_jac_gamma(self, gamma: np.ndarray | None = None):
        """mu plus its analytic Jacobian (G, K, M, n_gamma)."""
        gamma = self._gamma.values if gamma is None else np.asarray(gamma, dtype=float)
        if self.family == "direct":
            return self.mu_jac_state(gamma)
        return self._assemble_pwm(gamma, self._gamma, want_grad=True)

    def mu_state(self, s: np.ndarray | None = None) -> np.ndarray:
        s = self.state_values if s is None else np.asarray(s, dtype=float)
        if self.wave_model is WaveModel.SWM:
            mu, _ = self._assemble_swm(s, want_grad=False)
            return mu
        inner = self._gamma_of_state_ctx(s, self._inner)
        mu, _ = self._assemble_pwm(inner, self._inner, want_grad=False)
        return mu

    def mu_jac_state(self, s: np.ndarray | None = None):
        """mu plus its analytic Jacobian w.r.t. the full state vector."""
        s = self.state_values if s is None else np.asarray(s, dtype=float)
        if self.wave_model is WaveModel.SWM:
            return self._assemble_swm(s, want_grad=True)
        inner = self._gamma_of_state_ctx(s, self._inner)
        mu, dmu = self._assemble_pwm(inner, self._inner, want_grad=True)
        j_s = self._jac_ctx(s, self._inner)
        return mu, np.einsum("gkmp,pq->gkmq", dmu, j_s)

    def mu_jac_gamma_fd(self, gamma: np.ndarray | None = None, step_scale: float = 1.0):
        """Central-difference Jacobian of mu over the measurement vector
        (validation mode; per-parameter-class steps)."""
        gamma = self._gamma.values if gamma is None else np.asarray(gamma, dtype=float)
        eval_mu = self.mu_state if self.family == "direct" else self.mu_gamma
        cols = []
        for i in range(len(gamma)):
            h = fd_step(self._gamma.layout.kinds[i], gamma[i], step_scale)
            gp, gm = gamma.copy(), gamma.copy()
            gp[i] += h
            gm[i] -= h
            cols.append((eval_mu(gp) - eval_mu(gm)) / (2 * h))
        return eval_mu(gamma), np.stack(cols, axis=-1)

    # ------------------------------------------------------------------
    # PWM assembly
    # ------------------------------------------------------------------
    def _assemble_pwm(self, gamma: np.ndarray, ctx: _GammaContext, want_grad: bool):
        gix = ctx.ix
        g_n, k_n = self.n_g, self.n_k
        n_par = len(gamma)
        mu = np.zeros((g_n, k_n, self.n_rx), dtype=complex)
        dmu = np.zeros((g_n, k_n, self.n_rx, n_par), dtype=complex) if want_grad else None

        if ctx.family == "global":
            o_u = np.array([gamma[gix["alpha_U"]], gamma[gix["beta_U"]], gamma[gix["gamma_U"]]])
            r_ue = rotation_from_euler(o_u)
            dr_ue = rotation_derivatives(o_u) if want_grad else None
            i_ou = [gix["alpha_U"], gix["beta_U"], gix["gamma_U"]]
        else:
            r_ue = dr_ue = i_ou = None

        for p in self.paths:
            key = p.key
            rho = gamma[gix[f"rho_{key}"]]
            if rho == 0.0 and not want_grad:
                continue  # zeroed path contributes nothing to the value
            xi = gamma[gix[f"xi_{key}"]]
            tau = gamma[gix[f"tau_{key}"]]
            sides = self._pwm_sides(p, gamma, ctx, r_ue, dr_ue, i_ou)
            scal = (self.cks**p.order) * np.exp(-1j * xi) * np.exp(-2j * np.pi * self.dfreqs * tau)

            v_b, dv_b, b_cols = self._side_response(self.bs, self.bs_units, self.beam_dirs_bs, sides["bs"], want_grad)
            v_u, dv_u, u_cols = self._side_response(self.ue, self.ue_units, self.beam_dirs_ue, sides["ue"], want_grad)
            s_u = np.einsum("kgu,gku->gk", v_u, self.x_eff)

            extra = np.ones((g_n, k_n), dtype=complex)
            if p.kind is PathKind.RIS:
                t_ru = sides["ris"]["t"]
                a_ru, da_ru = _steer_grad(self.ris.sa_centers_local, self.freqs, t_ru)
                extra = np.einsum("kn,gn,kn->gk", self._a_rb, self.omega, a_ru)

            core = v_b if self.t_rx is None else np.einsum("mr,kgr->kgm", self.t_rx, v_b)
            stem = self.sqrt_p * scal[None, :, None] * np.transpose(core, (1, 0, 2))  # no rho factor
            base = rho * stem
            mu_p = base * (s_u * extra)[:, :, None]
            mu += mu_p

            if not want_grad:
                continue

            dmu[..., gix[f"rho_{key}"]] += stem * (s_u * extra)[:, :, None]
            dmu[..., gix[f"xi_{key}"]] += -1j * mu_p
            dmu[..., gix[f"tau_{key}"]] += (-2j * np.pi) * self.dfreqs[None, :, None] * mu_p
            for col, chain in b_cols:
                dv = np.einsum("kgrd,d->kgr", dv_b, chain)
                dcore = dv if self.t_rx is None else np.einsum("mr,kgr->kgm", self.t_rx, dv)
                dmu[..., col] += (
                    self.sqrt_p * rho * scal[None, :, None] * np.transpose(dcore, (1, 0, 2)) * (s_u * extra)[:, :, None]
                )
            for col, chain in u_cols:
                ds_u = np.einsum("kgud,d,gku->gk", dv_u, chain, self.x_eff)
                dmu[..., col] += base * (ds_u * extra)[:, :, None]
            if p.kind is PathKind.RIS:
                dr_scal = np.einsum("kn,gn,knd->gkd", self._a_rb, self.omega, da_ru)
                for col, chain in sides["ris"]["cols"]:
                    dmu[..., col] += base * (s_u * (dr_scal @ chain))[:, :, None]
        return mu, dmu

    def _pwm_sides(self, p: _Path, gamma, ctx: _GammaContext, r_ue, dr_ue, i_ou):
        """Per-side local steering directions plus (column, d t_local / d entry)
        chain rules for every measurement entry the side depends on."""
        gix = ctx.ix
        out = {}

        def from_local(name):
            az, el = gamma[gix[f"az_{name}"]], gamma[gix[f"el_{name}"]]
            jt = direction_jacobian((az, el))
            return {
                "t": direction_from_angles((az, el)),
                "cols": [(gix[f"az_{name}"], jt[:, 0]), (gix[f"el_{name}"], jt[:, 1])],
            }

        def from_global(name, rot):
            az, el = gamma[gix[f"az_{name}"]], gamma[gix[f"el_{name}"]]
            t_g = direction_from_angles((az, el))
            jt = direction_jacobian((az, el))
            side = {
                "t": rot.T @ t_g,
                "cols": [(gix[f"az_{name}"], rot.T @ jt[:, 0]), (gix[f"el_{name}"], rot.T @ jt[:, 1])],
            }
            return side, t_g, jt

        def ue_from_global(name, t_g, jt):
            side = {
                "t": r_ue.T @ (-t_g),
                "cols": [(gix[f"az_{name}"], r_ue.T @ (-jt[:, 0])), (gix[f"el_{name}"], r_ue.T @ (-jt[:, 1]))],
            }
            if dr_ue is not None:
                for ax in range(3):
                    side["cols"].append((i_ou[ax], dr_ue[ax].T @ (-t_g)))
            return side

        if ctx.family == "local":
            if p.kind is PathKind.LOS:
                out["bs"] = from_local("BU")
                out["ue"] = from_local("UB")
            elif p.kind is PathKind.RIS:
                out["bs"] = {"t": self._t_b_ris_local, "cols": []}
                out["ris"] = from_local("RU")
                out["ue"] = from_local("UR")
            else:
                l = p.key[1:]
                out["bs"] = from_local(f"BN{l}")
                out["ue"] = from_local(f"UN{l}")
            return out

        if p.kind is PathKind.LOS:
            out["bs"], t_g, jt = from_global("BU", self.r_bs)
            out["ue"] = ue_from_global("BU", t_g, jt)
        elif p.kind is PathKind.RIS:
            out["bs"] = {"t": self._t_b_ris_local, "cols": []}
            out["ris"], t_g, jt = from_global("RU", self.r_ris)
            out["ue"] = ue_from_global("RU", t_g, jt)
        else:
            l = p.key[1:]
            out["bs"], _, _ = from_global(f"BN{l}", self.r_bs)
            name = f"NU{l}"
            az, el = gamma[gix[f"az_{name}"]], gamma[gix[f"el_{name}"]]
            t_nu = direction_from_angles((az, el))
            jt_n = direction_jacobian((az, el))
            out["ue"] = ue_from_global(name, t_nu, jt_n)
        return out

    def _side_response(self, spec: ArraySpec, units, beam_dirs, side, want_grad):
        """Per-unit weighted response (K, G, N) = AF x steering, its direction
        gradient (K, G, N, 3) and the side's chain columns."""
        t_local = side["t"]
        a, da = _steer_grad(units, self.freqs, t_local)
        g_n = self.n_g
        k_n = len(self.freqs)
        if self.mimo == "aosa":
            af, daf = _af_grad(spec.ae_offsets_local, self.freqs, self.wf.f_c, t_local, beam_dirs, self.bse)
            v = af * a[:, None, :]
            dv = daf * a[:, None, :, None] + af[..., None] * da[:, None, :, :] if want_grad else None
        else:
            v = np.broadcast_to(a[:, None, :], (k_n, g_n, a.shape[1])).copy()
            dv = np.broadcast_to(da[:, None, :, :], (k_n, g_n) + da.shape[1:]).copy() if want_grad else None
        return v, dv, side["cols"]

    # ------------------------------------------------------------------
    # SWM assembly (direct family)
    # ------------------------------------------------------------------
    def _assemble_swm(self, s: np.ndarray, want_grad: bool):
        six = self._six
        g_n, k_n = self.n_g, self.n_k
        n_par = len(self.state_layout)
        p_u = np.array([s[six["x_U"]], s[six["y_U"]], s[six["z_U"]]])
        o_u = np.array([s[six["alpha_U"]], s[six["beta_U"]], s[six["gamma_U"]]])
        b_off = s[six["B"]]
        r_ue = rotation_from_euler(o_u)
        dr = rotation_derivatives(o_u)
        ue_units_g = self.ue.sa_centers_local @ r_ue.T + p_u
        d_ue_units_do = [self.ue.sa_centers_local @ dr[ax].T for ax in range(3)]
        bs_units_g = self.bs.sa_centers_global()

        mu = np.zeros((g_n, k_n, self.n_rx), dtype=complex)
        dmu = np.zeros((g_n, k_n, self.n_rx, n_par), dtype=complex) if want_grad else None
        common = (s, p_u, r_ue, dr, ue_units_g, d_ue_units_do, b_off)
        for p in self.paths:
            if p.kind is PathKind.RIS:
                self._swm_ris_path(p, common, mu, dmu, want_grad)
            else:
                self._swm_two_point_path(p, common, mu, dmu, bs_units_g, want_grad)
        return mu, dmu

    def _rho_and_grad(self, p: _Path, d_info, s):
        """Amplitude and gradient columns {state index: d rho}: identity for
        free amplitudes, geometric under the partially-known gain model."""
        six = self._six
        wl = self.wf.wavelength
        kabs = self.absorption.k_abs
        if self.gains_free:
            return s[six[f"rho_{p.key}"]], {six[f"rho_{p.key}"]: 1.0}
        if p.kind is PathKind.RIS:
            d_br, d_ru = d_info["d_br"], d_info["d_ru"]
            rho = (
                wl**2
                / (16 * np.pi**2 * d_br * d_ru)
                * attenuation(self.absorption, self.wf.f_c, d_br)
                * attenuation(self.absorption, self.wf.f_c, d_ru)
                * self._sector_product(p)
            )
            scale = rho * (-1.0 / d_ru - kabs / 2)
            return rho, {col: scale * dd for col, dd in d_info["dd"].items()}
        d = d_info["d"]
        coeff = p.desc.reflection_coeff if p.kind is PathKind.NLOS else 1.0
        rho = wl / (4 * np.pi * d) * coeff * attenuation(self.absorption, self.wf.f_c, d) * self._sector_product(p)
        scale = rho * (-1.0 / d - kabs / 2)
        return rho, {col: scale * dd for col, dd in d_info["dd"].items()}

    def _swm_two_point_path(self, p, common, mu, dmu, bs_units_g, want_grad):
        s, p_u, r_ue, dr, ue_units_g, d_ue_units_do, b_off = common
        six = self._six
        i_pu = [six["x_U"], six["y_U"], six["z_U"]]
        i_ou = [six["alpha_U"], six["beta_U"], six["gamma_U"]]
        xi = s[six[f"xi_{p.key}"]]
        n_b, n_u = self.bs.n_sa, self.ue.n_sa
        eye = np.eye(3)

        if p.kind is PathKind.LOS:
            t_cu, d_center = _unit_rows(p_u - self.bs.pose.position)
            delta_bu = ue_units_g[None, :, :] - bs_units_g[:, None, :]
            u_bu, d_bu = _unit_rows(delta_bu)  # (N_B, N_U, 3), (N_B, N_U)
            d_pair = d_bu
            dd_pair_pu = u_bu
            dd_pair_do = np.stack([np.einsum("bud,ud->bu", u_bu, d_ue_units_do[ax]) for ax in range(3)], axis=-1)
            dd_center_pu = t_cu
            t_b_pairs = u_bu @ self.r_bs
            t_u_pairs = -np.swapaxes(u_bu, 0, 1) @ r_ue
            d_info = {"d": d_center, "dd": {col: t_cu[ax] for ax, col in enumerate(i_pu)}}
        else:
            l = p.key[1:]
            i_pn = [six[f"x_N{l}"], six[f"y_N{l}"], six[f"z_N{l}"]]
            p_n = np.array([s[j] for j in i_pn])
            t_bn_c, d_bn_c = _unit_rows(p_n - self.bs.pose.position)
            t_nu_c, d_nu_c = _unit_rows(p_n - p_u)
            d_center = d_bn_c + d_nu_c
            u_bn, d_bn = _unit_rows(p_n[None, :] - bs_units_g)  # (N_B, 3)
            u_nu, d_nu = _unit_rows(p_n[None, :] - ue_units_g)  # (N_U, 3)
            d_pair = d_bn[:, None] + d_nu[None, :]
            dd_pair_pu = np.broadcast_to(-u_nu[None, :, :], (n_b, n_u, 3))
            dd_pair_do = np.stack(
                [
                    np.broadcast_to(-np.einsum("ud,ud->u", u_nu, d_ue_units_do[ax])[None, :], (n_b, n_u))
                    for ax in range(3)
                ],
                axis=-1,
            )
            dd_pair_pn = u_bn[:, None, :] + u_nu[None, :, :]
            dd_center_pu = -t_nu_c
            dd_center_pn = t_bn_c + t_nu_c
            t_b_pairs = np.broadcast_to((u_bn @ self.r_bs)[:, None, :], (n_b, n_u, 3)).copy()
            t_u_pairs = np.broadcast_to((u_nu @ r_ue)[:, None, :], (n_u, n_b, 3)).copy()
            d_info = {
                "d": d_center,
                "dd": {
                    **{col: dd_center_pu[ax] for ax, col in enumerate(i_pu)},
                    **{col: dd_center_pn[ax] for ax, col in enumerate(i_pn)},
                },
            }

        rho, rho_grad = self._rho_and_grad(p, d_info, s)
        tau = d_center / C + b_off
        dtau_pair = (d_pair - d_center) / C

        if self.mimo == "aosa":
            af_b, daf_b = _af_grad_pairwise(
                self.bs.ae_offsets_local, self.freqs, self.wf.f_c, t_b_pairs, self.beam_dirs_bs, self.bse
            )
            af_u, daf_u = _af_grad_pairwise(
                self.ue.ae_offsets_local, self.freqs, self.wf.f_c, t_u_pairs, self.beam_dirs_ue, self.bse
            )
            af_u = np.swapaxes(af_u, 2, 3)  # (K, G, N_B, N_U)
            daf_u = np.swapaxes(daf_u, 2, 3)
        else:
            shape = (len(self.freqs), self.n_g, n_b, n_u)
            af_b = np.ones(shape, dtype=complex)
            af_u = np.ones(shape, dtype=complex)
            daf_b = daf_u = np.zeros(shape + (3,), dtype=complex)

        scal = (self.cks**p.order) * np.exp(-1j * xi)
        phase = np.exp(-2j * np.pi * (self.dfreqs[:, None, None] * tau + self.freqs[:, None, None] * dtau_pair[None]))
        base = scal[:, None, None] * phase  # (K, N_B, N_U)
        entry = af_b * af_u * base[:, None, :, :]  # (K, G, N_B, N_U)
        mu_p = self._apply_rx(self.sqrt_p * rho * np.einsum("kgbu,gku->gkb", entry, self.x_eff))
        mu += mu_p
        if not want_grad:
            return

        dmu[..., six[f"xi_{p.key}"]] += -1j * mu_p
        stem = mu_p / rho if rho != 0 else self._apply_rx(self.sqrt_p * np.einsum("kgbu,gku->gkb", entry, self.x_eff))
        for col, val in rho_grad.items():
            dmu[..., col] += val * stem
        dmu[..., six["B"]] += (-2j * np.pi) * self.dfreqs[None, :, None] * mu_p

        def add_param(col, dd_pair, dd_center, dt_b, dt_u):
            """dd_pair (N_B, N_U): derivative of the pair distance (meters);
            dd_center: scalar derivative of the center distance; dt_b / dt_u:
            (N_B, N_U, 3) derivatives of the local pair directions."""
            dphi = -2j * np.pi * (
                self.dfreqs[:, None, None] * (dd_center / C)
                + self.freqs[:, None, None] * ((dd_pair - dd_center) / C)[None]
            )
            term = entry * dphi[:, None, :, :]
            if dt_b is not None:
                term = term + np.einsum("kgbud,bud->kgbu", daf_b, dt_b) * af_u * base[:, None]
            if dt_u is not None:
                term = term + af_b * np.einsum("kgbud,bud->kgbu", daf_u, dt_u) * base[:, None]
            dmu[..., col] += self._apply_rx(self.sqrt_p * rho * np.einsum("kgbu,gku->gkb", term, self.x_eff))

        if p.kind is PathKind.LOS:
            proj = (eye[None, None] - u_bu[..., :, None] * u_bu[..., None, :]) / d_bu[..., None, None]
            for ax in range(3):
                dt_glob = proj[..., ax]  # d u_bu / d p_U[ax]
                add_param(
                    i_pu[ax],
                    dd_pair_pu[..., ax],
                    dd_center_pu[ax],
                    dt_glob @ self.r_bs,
                    -dt_glob @ r_ue,
                )
            for ax in range(3):
                dt_glob = np.einsum("budc,uc->bud", proj, d_ue_units_do[ax])
                # t_u(b, u) = -R(o)^T u_bu: both the rotation and u_bu move.
                dt_u = -dt_glob @ r_ue - u_bu @ dr[ax]
                add_param(i_ou[ax], dd_pair_do[..., ax], 0.0, dt_glob @ self.r_bs, dt_u)
        else:
            l = p.key[1:]
            i_pn = [six[f"x_N{l}"], six[f"y_N{l}"], six[f"z_N{l}"]]
            proj_bn = (eye[None] - u_bn[:, :, None] * u_bn[:, None, :]) / d_bn[:, None, None]
            proj_nu = (eye[None] - u_nu[:, :, None] * u_nu[:, None, :]) / d_nu[:, None, None]
            for ax in range(3):
                dt_b = np.broadcast_to((proj_bn[..., ax] @ self.r_bs)[:, None, :], (n_b, n_u, 3))
                dt_u = np.broadcast_to((proj_nu[..., ax] @ r_ue)[None, :, :], (n_b, n_u, 3))
                add_param(i_pn[ax], dd_pair_pn[..., ax], dd_center_pn[ax], dt_b, dt_u)
                dt_u_pu = np.broadcast_to((-proj_nu[..., ax] @ r_ue)[None, :, :], (n_b, n_u, 3))
                add_param(i_pu[ax], dd_pair_pu[..., ax], dd_center_pu[ax], None, dt_u_pu)
            for ax in range(3):
                du_nu = -np.einsum("ucd,uc->ud", proj_nu, d_ue_units_do[ax])  # d u_nu / d o_ax
                dt_u = np.broadcast_to((du_nu @ r_ue + u_nu @ dr[ax])[None, :, :], (n_b, n_u, 3))
                add_param(i_ou[ax], dd_pair_do[..., ax], 0.0, None, dt_u)

    def _swm_ris_path(self, p, common, mu, dmu, want_grad):
        s, p_u, r_ue, dr, ue_units_g, d_ue_units_do, b_off = common
        six = self._six
        i_pu = [six["x_U"], six["y_U"], six["z_U"]]
        i_ou = [six["alpha_U"], six["beta_U"], six["gamma_U"]]
        xi = s[six[f"xi_{p.key}"]]
        n_b, n_u = self.bs.n_sa, self.ue.n_sa
        p_r_units = self.ris.sa_centers_global()
        n_r = p_r_units.shape[0]
        eye = np.eye(3)

        t_ru_c, d_ru_c = _unit_rows(p_u - self.ris.pose.position)
        d_br_c = p.desc.distances["bs_ris"]
        d_br_units = np.linalg.norm(self.bs.sa_centers_global()[:, None, :] - p_r_units[None, :, :], axis=-1)
        delta_ru = ue_units_g[None, :, :] - p_r_units[:, None, :]  # (N_R, N_U, 3)
        u_ru, d_ru = _unit_rows(delta_ru)
        d_info = {"d_br": d_br_c, "d_ru": d_ru_c, "dd": {col: t_ru_c[ax] for ax, col in enumerate(i_pu)}}
        rho, rho_grad = self._rho_and_grad(p, d_info, s)
        tau = (d_br_c + d_ru_c) / C + b_off
        dtau_pair = (d_br_units[:, :, None] + d_ru[None, :, :] - d_br_c - d_ru_c) / C  # (N_B, N_R, N_U)

        if self.mimo == "aosa":
            t_b_pairs = _unit_rows(p_r_units[None, :, :] - self.bs.sa_centers_global()[:, None, :])[0] @ self.r_bs
            af_b, _ = _af_grad_pairwise(
                self.bs.ae_offsets_local, self.freqs, self.wf.f_c, t_b_pairs, self.beam_dirs_bs, self.bse
            )  # anchor-anchor: no gradient needed
            u_ur = -np.swapaxes(u_ru, 0, 1)  # unit(p_r - p_u) per (u, r)
            t_u_pairs = u_ur @ r_ue
            af_u, daf_u = _af_grad_pairwise(
                self.ue.ae_offsets_local, self.freqs, self.wf.f_c, t_u_pairs, self.beam_dirs_ue, self.bse
            )  # (K, G, N_U, N_R)
        else:
            u_ur = -np.swapaxes(u_ru, 0, 1)
            af_b = np.ones((len(self.freqs), self.n_g, n_b, n_r), dtype=complex)
            af_u = np.ones((len(self.freqs), self.n_g, n_u, n_r), dtype=complex)
            daf_u = np.zeros(af_u.shape + (3,), dtype=complex)

        d_ur = np.swapaxes(d_ru, 0, 1)
        proj_ur = (eye[None, None] - u_ur[..., :, None] * u_ur[..., None, :]) / d_ur[..., None, None]
        dd_ru_do = np.stack([np.einsum("rud,ud->ru", u_ru, d_ue_units_do[ax]) for ax in range(3)], axis=-1)

        scal = self.sqrt_p * rho * (self.cks**2) * np.exp(-1j * xi)
        mu_p = np.zeros_like(mu)
        grad_cols = i_pu + (i_ou if self.scenario.orientation_dims else []) if want_grad else []
        dcols = {c: np.zeros_like(mu) for c in grad_cols}

        for ki in range(len(self.freqs)):
            phase = np.exp(-2j * np.pi * (self.dfreqs[ki] * tau + self.freqs[ki] * dtau_pair))  # (N_B, N_R, N_U)
            for gi in range(self.n_g):
                w = self.omega[gi]
                wafb = w[None, :] * af_b[ki, gi]  # (N_B, N_R)
                core = np.einsum("br,ur,bru->bu", wafb, af_u[ki, gi], phase)
                mu_p[gi, ki] += scal[ki] * (core @ self.x_eff[gi, ki])
                for ax_i, col in enumerate(grad_cols):
                    if ax_i < 3:  # position of the UE
                        ax = ax_i
                        dd_pair = u_ru[..., ax]  # d d_ru / d p_U[ax] per (r, u)
                        dphi = -2j * np.pi * (
                            self.dfreqs[ki] * t_ru_c[ax] / C + self.freqs[ki] * (dd_pair - t_ru_c[ax]) / C
                        )  # (N_R, N_U)
                        term = np.einsum("br,ur,bru,ru->bu", wafb, af_u[ki, gi], phase, dphi)
                        dt_u = -proj_ur[..., ax] @ r_ue  # (N_U, N_R, 3)
                        daf = np.einsum("urd,urd->ur", daf_u[ki, gi], dt_u)
                        term += np.einsum("br,ur,bru->bu", wafb, daf, phase)
                    else:  # orientation
                        ax = ax_i - 3
                        dphi = -2j * np.pi * (self.freqs[ki] * dd_ru_do[..., ax] / C)  # (N_R, N_U)
                        term = np.einsum("br,ur,bru,ru->bu", wafb, af_u[ki, gi], phase, dphi)
                        du_ur = -np.einsum("urcd,uc->urd", proj_ur, d_ue_units_do[ax])
                        dt_u = du_ur @ r_ue + u_ur @ dr[ax]
                        daf = np.einsum("urd,urd->ur", daf_u[ki, gi], dt_u)
                        term += np.einsum("br,ur,bru->bu", wafb, daf, phase)
                    dcols[col][gi, ki] += scal[ki] * (term @ self.x_eff[gi, ki])

        mu_p = self._apply_rx(mu_p)
        mu += mu_p
        if not want_grad:
            return
        dmu[..., six[f"xi_{p.key}"]] += -1j * mu_p
        stem = mu_p / rho if rho != 0 else mu_p
        for col, val in rho_grad.items():
            dmu[..., col] += val * stem
        dmu[..., six["B"]] += (-2j * np.pi) * self.dfreqs[None, :, None] * mu_p
        for col, arr in dcols.items():
            dmu[..., col] += self._apply_rx(arr)

    def _apply_rx(self, tensors: np.ndarray) -> np.ndarray:
        if self.t_rx is None:
            return tensors
        return np.einsum("mr,gkr->gkm", self.t_rx, tensors)

    # ------------------------------------------------------------------
    # observation synthesis (shares the generative model exactly)
    # ------------------------------------------------------------------
    def observe(self, rng: np.random.Generator, noise_scale: float = 1.0):
        from ..signal import ObservationSet

        mu = self.mu_state()
        var = self.sigma2 * noise_scale
        if var > 0:
            sd = np.sqrt(var / 2)
            y = mu + rng.normal(0.0, sd, mu.shape) + 1j * rng.normal(0.0, sd, mu.shape)
        else:
            y = mu.copy()
        return ObservationSet(y=y, mu=mu, noise_var=var)
