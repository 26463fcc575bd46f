"""Localization estimators: direct maximum likelihood, multi-stage
(channel parameters then geometry), orientation recovery from AODs, and
classic TOA/TDOA/AOA/ADOD solvers.

The direct and multi-stage estimators operate on the fully digital
single-RFC-per-unit uplink with a single-antenna UE (the estimator
benchmark family); path gains are always profiled out as linear nuisance
parameters.  Bounds-side machinery (ScenarioModel) provides the exact
generative model, gamma(s) mapping and Fisher covariances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .constants import SPEED_OF_LIGHT as C
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    DomainError,
    InsufficientMeasurementsError,
    UnidentifiableError,
)
from .fim.model import ScenarioModel
from .fim.bounds import fim_measurement, pinv_psd
from .geometry import direction_from_angles
from .signal import ObservationSet

__all__ = [
    "EstimationResult",
    "SearchConfig",
    "direct_mle",
    "estimate_channel_params",
    "multistage_solve",
    "orientation_from_aods",
    "solve_adod",
    "solve_aoa",
    "solve_tdoa",
    "solve_toa",
]


@dataclass
class EstimationResult:
    estimate: dict
    cost: float
    iterations: int
    converged: bool
    covariance: np.ndarray | None = None
    covariance_names: list = field(default_factory=list)
    notes: str = ""

    def position(self) -> np.ndarray:
        keys = [k for k in ("x_U", "y_U", "z_U") if k in self.estimate]
        return np.array([self.estimate[k] for k in keys])


@dataclass
class SearchConfig:
    grid_points: int = 25  # per UE position axis in the coarse stage
    delay_oversample: int = 8  # grid step = 1 / (oversample * W)
    angle_step_deg: float = 1.0
    refine_levels: int = 3
    refine: bool = True
    max_iterations: int = 200


# ---------------------------------------------------------------------------
# direct MLE
# ---------------------------------------------------------------------------


def _profiled_cost(model: ScenarioModel, y: np.ndarray, s: np.ndarray, basis_paths=None):
    """Least-squares cost with the per-path complex gains profiled out.

    Returns (cost, gains).  basis_paths restricts the basis to a subset of
    path keys (the coarse grid stage fits the LOS component only).
    """
    six = {n: i for i, n in enumerate(model.state_layout.names)}
    keys = [p.key for p in model.paths] if basis_paths is None else list(basis_paths)
    basis = []
    for key in keys:
        sb = s.copy()
        for p in model.paths:
            sb[six[f"rho_{p.key}"]] = 1.0 if p.key == key else 0.0
            sb[six[f"xi_{p.key}"]] = 0.0
        basis.append(model.mu_state(sb).ravel())
    a = np.stack(basis, axis=1)
    gains, *_ = np.linalg.lstsq(a, y.ravel(), rcond=None)
    resid = y.ravel() - a @ gains
    return float(np.vdot(resid, resid).real), dict(zip(keys, gains))


def _profiled_residual(model: ScenarioModel, y: np.ndarray, s: np.ndarray) -> np.ndarray:
    six = {n: i for i, n in enumerate(model.state_layout.names)}
    basis = []
    for key in [p.key for p in model.paths]:
        sb = s.copy()
        for p in model.paths:
            sb[six[f"rho_{p.key}"]] = 1.0 if p.key == key else 0.0
            sb[six[f"xi_{p.key}"]] = 0.0
        basis.append(model.mu_state(sb).ravel())
    a = np.stack(basis, axis=1)
    gains, *_ = np.linalg.lstsq(a, y.ravel(), rcond=None)
    r = y.ravel() - a @ gains
    return np.concatenate([r.real, r.imag])


def _search_indices(model: ScenarioModel) -> list:
    """Indices of the geometric unknowns direct MLE searches over."""
    layout = model.state_layout
    idx = []
    for i in layout.active_indices():
        name = layout.names[i]
        if name.startswith(("rho_", "xi_")):
            continue  # profiled analytically
        idx.append(int(i))
    return idx


def direct_mle(
    obs: ObservationSet,
    model: ScenarioModel,
    config: SearchConfig = SearchConfig(),
    prior_box: tuple | None = None,
) -> EstimationResult:
    """Maximum-likelihood state estimation from raw observations.

    Coarse stage: a grid over the UE position (profiling the gains, fitting
    the LOS component only).  Refinement: derivative-free minimization of
    the full profiled cost over every active geometric unknown; scatterer
    positions are initialized from a residual delay/angle scan.
    """
    y = obs.y
    layout = model.state_layout
    six = {n: i for i, n in enumerate(layout.names)}
    search_idx = _search_indices(model)
    pos_idx = [six[n] for n in ("x_U", "y_U", "z_U") if six[n] in search_idx]
    if not pos_idx:
        raise ConfigError("direct MLE needs at least one free UE position coordinate")

    if prior_box is None:
        pts = [model.bs.pose.position, model.ue.pose.position]
        if model.ris is not None:
            pts.append(model.ris.pose.position)
        pts = np.stack(pts)
        lo = pts.min(axis=0) - 2.0
        hi = pts.max(axis=0) + 2.0
    else:
        lo, hi = (np.asarray(v, dtype=float) for v in prior_box)

    s = model.state_values.copy()
    best_cost = np.inf
    best = s.copy()
    axes = [np.linspace(lo[ax], hi[ax], config.grid_points) for ax in range(3)]
    grids = [axes[i - six["x_U"]] if i in pos_idx else [s[i]] for i in (six["x_U"], six["y_U"], six["z_U"])]
    for x in grids[0]:
        for yy in grids[1]:
            for z in grids[2]:
                cand = s.copy()
                cand[six["x_U"]], cand[six["y_U"]], cand[six["z_U"]] = x, yy, z
                try:
                    cost, _ = _profiled_cost(model, y, cand, basis_paths=["L"])
                except (DegenerateGeometryError, DomainError):
                    continue
                if cost < best_cost:
                    best_cost = cost
                    best = cand.copy()

    # Initialize free scatterer positions from the residual after the LOS fit.
    scatter_keys = [p.key for p in model.paths if f"x_{p.key}" in layout.names and six[f"x_{p.key}"] in search_idx]
    if scatter_keys:
        best = _init_scatterers(model, obs, best, scatter_keys, config)

    result_iter = 0
    converged = True
    if config.refine and search_idx:
        n_res = 2 * y.size
        big = np.full(n_res, 1e3 * np.linalg.norm(y) + 1.0)

        def residual(theta):
            cand = best.copy()
            cand[search_idx] = theta
            try:
                return _profiled_residual(model, y, cand)
            except (DegenerateGeometryError, DomainError):
                return big

        scale = np.array(
            [1e-2 if layout.names[i].startswith(("x_", "y_", "z_")) else 1e-3 for i in search_idx]
        )
        res = least_squares(
            residual, best[search_idx], x_scale=scale, method="lm", xtol=1e-15, ftol=1e-15, max_nfev=800
        )
        best[search_idx] = res.x
        result_iter = int(res.nfev)
        converged = bool(res.success)

    cost, gains = _profiled_cost(model, y, best)
    for key, g in gains.items():
        best[six[f"rho_{key}"]] = abs(g)
        best[six[f"xi_{key}"]] = float(np.mod(-np.angle(g), 2 * np.pi))
    estimate = {layout.names[i]: float(best[i]) for i in layout.active_indices()}
    return EstimationResult(estimate=estimate, cost=cost, iterations=result_iter, converged=converged)


def _init_scatterers(model: ScenarioModel, obs: ObservationSet, s, scatter_keys, config: SearchConfig):
    """Seed free scatterer positions from a successive-cancellation scan of
    the raw observation: the earliest delay peak is the LOS (single-bounce
    paths are strictly longer), later peaks locate the scatterers."""
    six = {n: i for i, n in enumerate(model.state_layout.names)}
    found = estimate_channel_params(obs, model, n_paths=1 + len(scatter_keys), config=config, polish=False)
    b_off = s[six["B"]]
    p_u = np.array([s[six["x_U"]], s[six["y_U"]], s[six["z_U"]]])
    out = s.copy()
    for key, path in zip(scatter_keys, found["paths"][1:]):
        t = model.r_bs @ direction_from_angles((path["azimuth"], path["elevation"]))
        p_n = _scatter_from_toa_aoa(model.bs.pose.position, t, p_u, C * (path["delay"] - b_off))
        out[six[f"x_{key}"]], out[six[f"y_{key}"]], out[six[f"z_{key}"]] = p_n
    return out


def _scatter_from_toa_aoa(p_b, t, p_u, total_len):
    """Scatterer on the ray p_b + d t with d + |p_n - p_u| = total path length."""
    q = p_u - p_b
    denom = 2 * (total_len - t @ q)
    if abs(denom) < 1e-12:
        return p_b + 0.5 * total_len * t
    d = (total_len**2 - q @ q) / denom
    d = min(max(d, 1e-3), total_len - 1e-3)
    return p_b + d * t


# ---------------------------------------------------------------------------
# stage 1: channel-parameter estimation
# ---------------------------------------------------------------------------


def estimate_channel_params(
    obs: ObservationSet,
    model: ScenarioModel,
    n_paths: int,
    config: SearchConfig = SearchConfig(),
    polish: bool = True,
) -> dict:
    """Per-path delay / AOA / complex-gain estimation by successive
    cancellation: delay correlation peak (quadratically interpolated),
    beamspace angle scan with local refinement, linear LS for the gains,
    then an optional joint variable-projection polish over all paths.

    Supports the fully digital BS with a single-antenna UE.  Returns
    {"paths": [...], "gamma": values, "names": labels, "covariance": ...};
    paths are ordered by increasing delay and flagged when two delay peaks
    collapse into one resolution cell.
    """
    if model.mimo != "digital" or model.ue.n_sa != 1:
        raise ConfigError("channel-parameter estimation supports the digital single-antenna-UE uplink")
    if n_paths == 0:
        return {"paths": [], "gamma": np.array([]), "names": [], "covariance": None, "warnings": []}
    wf = model.wf
    y = obs.y  # (G, K, N_B)
    # Remove the pilot phase: single-antenna UE -> scalar unit-modulus symbols.
    z = y * np.conj(model.x_eff[:, :, 0])[:, :, None]
    window = wf.n_subcarriers / wf.bandwidth
    step = 1.0 / (config.delay_oversample * wf.bandwidth)
    taus = np.arange(0.0, window, step)

    residual = z.copy()
    found = []
    warnings = []
    for _ in range(n_paths):
        spec = _delay_spectrum(residual, wf, taus)
        peak = int(np.argmax(spec))
        tau_hat = _parabolic(taus, spec, peak)
        for prev in found:
            if abs(prev["delay"] - tau_hat) < 1.0 / wf.bandwidth:
                warnings.append(
                    f"delay peaks at {prev['delay']:.3e} and {tau_hat:.3e} s fall within one resolution cell"
                )
        az_hat, el_hat = _angle_scan(residual, model, tau_hat, config)
        found.append({"delay": float(tau_hat), "azimuth": float(az_hat), "elevation": float(el_hat)})
        gains = _ls_gains(z, model, found)
        residual = z - _synth(model, found, gains)
    gains = _ls_gains(z, model, found)

    if polish:
        theta0 = np.concatenate([[p["delay"], p["azimuth"], p["elevation"]] for p in found])
        scale = np.concatenate([[1.0 / wf.bandwidth, 1e-2, 1e-2] for _ in found])

        def resid_fun(theta):
            paths = [
                {"delay": theta[3 * i], "azimuth": theta[3 * i + 1], "elevation": theta[3 * i + 2]}
                for i in range(n_paths)
            ]
            g = _ls_gains(z, model, paths)
            r = (z - _synth(model, paths, g)).ravel()
            return np.concatenate([r.real, r.imag])

        sol = least_squares(resid_fun, theta0, x_scale=scale, method="lm", xtol=1e-15, ftol=1e-15, max_nfev=400)
        theta = sol.x
        found = [
            {"delay": float(theta[3 * i]), "azimuth": float(theta[3 * i + 1]), "elevation": float(theta[3 * i + 2])}
            for i in range(n_paths)
        ]
        gains = _ls_gains(z, model, found)

    order = np.argsort([p["delay"] for p in found])
    found = [found[i] for i in order]
    gains = gains[order]
    for p, g in zip(found, gains):
        p["rho"] = float(abs(g) / np.sqrt(wf.power_mw))
        p["xi"] = float(np.mod(-np.angle(g), 2 * np.pi))

    names, values = _pack_gamma(found)
    cov, cov_names = _stage1_covariance(model, found)
    return {
        "paths": found,
        "gamma": values,
        "names": names,
        "covariance": cov,
        "covariance_names": cov_names,
        "warnings": warnings,
    }


def _delay_spectrum(z: np.ndarray, wf, taus: np.ndarray) -> np.ndarray:
    """Energy of the delay-matched correlation, summed over transmissions."""
    phase = np.exp(2j * np.pi * np.outer(taus, wf.subcarrier_offsets))  # (T, K)
    corr = np.einsum("tk,gkm->tgm", phase, z) / wf.n_subcarriers
    return np.sum(np.abs(corr) ** 2, axis=(1, 2))


def _parabolic(xs, ys, i):
    if i == 0 or i == len(xs) - 1:
        return xs[i]
    denom = ys[i - 1] - 2 * ys[i] + ys[i + 1]
    if abs(denom) < 1e-300:
        return xs[i]
    delta = 0.5 * (ys[i - 1] - ys[i + 1]) / denom
    return xs[i] + delta * (xs[1] - xs[0])


def _angle_scan(z, model: ScenarioModel, tau, config: SearchConfig):
    wf = model.wf
    phase = np.exp(2j * np.pi * wf.subcarrier_offsets * tau)
    corr = np.einsum("k,gkm->gm", phase, z) / wf.n_subcarriers  # (G, N_B)

    def power(az, el):
        t = direction_from_angles((az, el))
        # steering at the carrier is adequate for a scan; the polish stage is exact
        a = np.exp(1j * (2 * np.pi * wf.f_c / C) * (model.bs_units @ t))
        return float(np.sum(np.abs(corr @ np.conj(a)) ** 2))

    step = np.deg2rad(config.angle_step_deg)
    azs = np.arange(-np.pi / 2, np.pi / 2 + step, step)
    vals = [power(az, 0.0) for az in azs]
    az = azs[int(np.argmax(vals))]
    el = 0.0
    for _ in range(config.refine_levels):
        step /= 10
        azs = az + np.linspace(-5, 5, 11) * step
        vals = [power(a, el) for a in azs]
        az = azs[int(np.argmax(vals))]
        els = el + np.linspace(-5, 5, 11) * step
        vals = [power(az, e) for e in els]
        el = els[int(np.argmax(vals))]
    return az, el


def _basis_matrix(model: ScenarioModel, paths) -> np.ndarray:
    wf = model.wf
    cols = []
    for p in paths:
        t = direction_from_angles((p["azimuth"], p["elevation"]))
        col = np.empty((wf.n_transmissions, wf.n_subcarriers, model.bs.n_sa), dtype=complex)
        for k, f_k in enumerate(wf.subcarrier_freqs):
            a = np.exp(1j * (2 * np.pi * f_k / C) * (model.bs_units @ t))
            col[:, k, :] = (
                wf.freq_ratios[k]
                * np.exp(-2j * np.pi * wf.subcarrier_offsets[k] * p["delay"])
                * a[None, :]
            )
        cols.append(col.ravel())
    return np.stack(cols, axis=1)


def _ls_gains(z, model, paths) -> np.ndarray:
    a = _basis_matrix(model, paths)
    g, *_ = np.linalg.lstsq(a, z.ravel(), rcond=None)
    return g


def _synth(model, paths, gains) -> np.ndarray:
    a = _basis_matrix(model, paths)
    wf = model.wf
    return (a @ gains).reshape(wf.n_transmissions, wf.n_subcarriers, model.bs.n_sa)


def _pack_gamma(paths):
    names, values = [], []
    for i, p in enumerate(paths, start=1):
        names += [f"rho_{i}", f"xi_{i}", f"tau_{i}", f"az_{i}", f"el_{i}"]
        values += [p["rho"], p["xi"], p["delay"], p["azimuth"], p["elevation"]]
    return names, np.array(values)


def _stage1_covariance(model: ScenarioModel, paths):
    """Local Fisher approximation at the estimate: per-path (rho, xi, tau,
    az, el) information from the generic multipath model."""
    wf = model.wf
    n = len(paths)
    jac_cols = []
    names = []
    h = {"delay": 1e-13, "azimuth": 1e-7, "elevation": 1e-7}

    def synth_all(pp):
        g = np.array([p["rho"] * np.sqrt(wf.power_mw) * np.exp(-1j * p["xi"]) for p in pp])
        return _synth(model, pp, g)

    base_paths = [dict(p) for p in paths]
    for i, p in enumerate(paths, start=1):
        mu_i = _synth(model, [p], np.array([p["rho"] * np.sqrt(wf.power_mw) * np.exp(-1j * p["xi"])]))
        jac_cols.append((mu_i / p["rho"]).ravel() if p["rho"] != 0 else mu_i.ravel())
        names.append(f"rho_{i}")
        jac_cols.append((-1j * mu_i).ravel())
        names.append(f"xi_{i}")
        for field_name, label in (("delay", "tau"), ("azimuth", "az"), ("elevation", "el")):
            pp = [dict(q) for q in base_paths]
            pp[i - 1][field_name] += h[field_name]
            pm = [dict(q) for q in base_paths]
            pm[i - 1][field_name] -= h[field_name]
            jac_cols.append(((synth_all(pp) - synth_all(pm)) / (2 * h[field_name])).ravel())
            names.append(f"{label}_{i}")
    jac = np.stack(jac_cols, axis=1)
    info = (2.0 / model.sigma2) * np.real(np.conj(jac.T) @ jac)
    try:
        cov, _, _ = pinv_psd(info, names, on_singular="pinv")
    except UnidentifiableError:  # pragma: no cover - pinv mode never raises
        cov = np.linalg.pinv(info)
    return cov, names


# ---------------------------------------------------------------------------
# stage 2: weighted geometry solve
# ---------------------------------------------------------------------------


def multistage_solve(
    gamma_hat: dict,
    covariance: np.ndarray | None,
    model: ScenarioModel,
    solve_for: list | None = None,
    x0: dict | None = None,
    max_iterations: int = 100,
) -> EstimationResult:
    """Weighted Gauss-Newton fit of the state to estimated measurement
    entries.

    gamma_hat maps measurement names (from model.gamma_layout) to estimated
    values; covariance is the matching square matrix (identity with a logged
    caveat when absent).  solve_for defaults to every active non-gain state
    entry; the closed-form TOA/AOA intersection seeds the UE position.
    """
    names = list(gamma_hat.keys())
    rows = [model.gamma_layout.index(n) for n in names]
    gh = np.array([gamma_hat[n] for n in names])
    notes = ""
    if covariance is None:
        covariance = np.eye(len(names))
        notes = "no stage-1 covariance supplied; identity weighting"
    w = np.linalg.inv(_nearest_spd(np.asarray(covariance, dtype=float)))

    layout = model.state_layout
    six = {n: i for i, n in enumerate(layout.names)}
    if solve_for is None:
        solve_for = [n for n in layout.active_names if not n.startswith(("rho_", "xi_"))]
    idx = [six[n] for n in solve_for]
    if len(names) < len(idx):
        raise UnidentifiableError(
            f"{len(names)} measurements cannot determine {len(idx)} unknowns (see the geometry measurement table)"
        )

    s = model.state_values.copy()
    if x0:
        for k, v in x0.items():
            s[six[k]] = v
    else:
        s = _closed_form_init(model, gamma_hat, s, six)

    def residual(svec):
        return model.gamma_of_state(svec)[rows] - gh

    cost_prev = None
    it = 0
    converged = False
    for it in range(1, max_iterations + 1):
        r = _wrap_angle_rows(residual(s), names)
        cost = float(r @ w @ r)
        jac = model.jac_gamma_state(s)[np.ix_(rows, idx)]
        lhs = jac.T @ w @ jac
        rhs = -jac.T @ w @ r
        try:
            delta = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
        step = 1.0
        improved = False
        for _ in range(20):
            trial = s.copy()
            trial[idx] += step * delta
            rt = _wrap_angle_rows(residual(trial), names)
            if float(rt @ w @ rt) < cost:
                s = trial
                improved = True
                break
            step /= 2
        if not improved:
            converged = cost_prev is not None
            break
        if cost_prev is not None and abs(cost_prev - cost) <= 1e-14 * max(cost, 1.0):
            converged = True
            break
        cost_prev = cost
    r = _wrap_angle_rows(residual(s), names)
    final_cost = float(r @ w @ r)
    estimate = {layout.names[i]: float(s[i]) for i in layout.active_indices()}
    cov_proxy = None
    try:
        jac = model.jac_gamma_state(s)[np.ix_(rows, idx)]
        cov_proxy = np.linalg.inv(jac.T @ w @ jac)
    except np.linalg.LinAlgError:
        pass
    return EstimationResult(
        estimate=estimate,
        cost=final_cost,
        iterations=it,
        converged=converged or final_cost < 1e-20,
        covariance=cov_proxy,
        covariance_names=solve_for,
        notes=notes,
    )


def _wrap_angle_rows(r, names):
    out = r.copy()
    for i, n in enumerate(names):
        if n.startswith(("az_", "el_", "xi_")):
            out[i] = np.mod(out[i] + np.pi, 2 * np.pi) - np.pi
    return out


def _nearest_spd(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.T)
    vals = np.linalg.eigvalsh(m)
    floor = max(vals.max(), 0.0) * 1e-12
    if vals.min() <= floor:
        m = m + (floor - vals.min() + 1e-300) * np.eye(m.shape[0])
    return m


def _closed_form_init(model: ScenarioModel, gamma_hat: dict, s: np.ndarray, six: dict) -> np.ndarray:
    """TOA/AOA intersection: range the LOS delay, point the LOS angle."""
    s = s.copy()
    b_off = s[six["B"]]
    if "tau_L" in gamma_hat and "az_BU" in gamma_hat:
        el = gamma_hat.get("el_BU", 0.0)
        t_local = direction_from_angles((gamma_hat["az_BU"], el))
        d = C * (gamma_hat["tau_L"] - b_off)
        if d > 0:
            p = model.bs.pose.position + d * (model.r_bs @ t_local)
            s[six["x_U"]], s[six["y_U"]], s[six["z_U"]] = p
    for p in model.paths:
        key = p.key
        if key.startswith("N") and f"tau_{key}" in gamma_hat and f"az_B{key}" in gamma_hat:
            el = gamma_hat.get(f"el_B{key}", 0.0)
            t = model.r_bs @ direction_from_angles((gamma_hat[f"az_B{key}"], el))
            p_u = np.array([s[six["x_U"]], s[six["y_U"]], s[six["z_U"]]])
            p_n = _scatter_from_toa_aoa(
                model.bs.pose.position, t, p_u, C * (gamma_hat[f"tau_{key}"] - b_off)
            )
            s[six[f"x_{key}"]], s[six[f"y_{key}"]], s[six[f"z_{key}"]] = p_n
    return s


# ---------------------------------------------------------------------------
# orientation from AOD pairs
# ---------------------------------------------------------------------------


def orientation_from_aods(local_dirs, global_dirs) -> np.ndarray:
    """Least-squares rotation aligning measured local AOD directions to the
    known global directions (orthogonal Procrustes, det = +1 enforced).

    local_dirs[i] ~ R^T global_dirs[i]; needs >= 2 non-collinear directions.
    """
    t_local = np.atleast_2d(np.asarray(local_dirs, dtype=float))
    t_global = np.atleast_2d(np.asarray(global_dirs, dtype=float))
    if t_local.shape != t_global.shape or t_local.shape[0] < 2:
        raise InsufficientMeasurementsError("orientation recovery needs >= 2 AOD direction pairs")
    if np.linalg.matrix_rank(t_global, tol=1e-9) < 2:
        raise DegenerateGeometryError("AOD directions are collinear")
    m = t_global.T @ t_local
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


# ---------------------------------------------------------------------------
# classic geometry solvers
# ---------------------------------------------------------------------------

_MIN_MEASUREMENTS = {
    "toa": {2: 3, 3: 4},
    "tdoa": {2: 3, 3: 4},
    "aoa": {2: 2, 3: 2},
    "adod": {2: 3, 3: 4},
}


def _check_count(kind: str, count: int, dims: int):
    need = _MIN_MEASUREMENTS[kind][dims]
    if count < need:
        raise InsufficientMeasurementsError(
            f"{kind.upper()} {dims}D positioning needs >= {need} measurements, got {count}"
        )


def _nls(fun, p0, dims):
    sol = least_squares(fun, p0, method="lm", xtol=1e-15, ftol=1e-15, max_nfev=500)
    return EstimationResult(
        estimate={("x", "y", "z")[i]: float(sol.x[i]) for i in range(dims)},
        cost=float(2 * sol.cost),
        iterations=int(sol.nfev),
        converged=bool(sol.success),
    )


def solve_toa(anchors, ranges, dims: int = 2) -> EstimationResult:
    """Trilateration from absolute ranges; linearized init + Gauss-Newton."""
    anchors = np.asarray(anchors, dtype=float)[:, :dims]
    ranges = np.asarray(ranges, dtype=float)
    _check_count("toa", len(ranges), dims)
    a0, r0 = anchors[0], ranges[0]
    rows = 2 * (anchors[1:] - a0)
    rhs = (
        np.sum(anchors[1:] ** 2, axis=1) - np.sum(a0**2) - ranges[1:] ** 2 + r0**2
    )
    p0, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    return _nls(lambda p: np.linalg.norm(anchors - p, axis=1) - ranges, p0, dims)


def solve_tdoa(anchors, range_diffs, dims: int = 2) -> EstimationResult:
    """Multilateration from range differences w.r.t. the first anchor.

    range_diffs[i] = |p - anchors[i+1]| - |p - anchors[0]|.
    """
    anchors = np.asarray(anchors, dtype=float)[:, :dims]
    range_diffs = np.asarray(range_diffs, dtype=float)
    _check_count("tdoa", len(range_diffs), dims)
    if len(anchors) != len(range_diffs) + 1:
        raise ConfigError("need one more anchor than TDOA measurements")
    a0 = anchors[0]
    rows = np.hstack([2 * (anchors[1:] - a0), 2 * range_diffs[:, None]])
    rhs = np.sum(anchors[1:] ** 2, axis=1) - np.sum(a0**2) - range_diffs**2
    sol, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    p0 = sol[:dims]

    def fun(p):
        r = np.linalg.norm(anchors - p, axis=1)
        return (r[1:] - r[0]) - range_diffs

    return _nls(fun, p0, dims)


def solve_aoa(anchors, angles, dims: int = 2) -> EstimationResult:
    """Position from bearings measured at the anchors.

    2D: angles are scalars (bearing of the target seen from each anchor);
    3D: angles are (azimuth, elevation) pairs.  Two non-parallel lines
    suffice in either case.
    """
    anchors = np.asarray(anchors, dtype=float)[:, :dims]
    angles = np.asarray(angles, dtype=float)
    _check_count("aoa", len(anchors), dims)
    if dims == 2:
        units = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        units = np.stack([direction_from_angles(a) for a in angles])
    lhs = np.zeros((dims, dims))
    rhs = np.zeros(dims)
    for a, u in zip(anchors, units):
        proj = np.eye(dims) - np.outer(u, u)
        lhs += proj
        rhs += proj @ a
    if np.linalg.matrix_rank(lhs, tol=1e-9) < dims:
        raise DegenerateGeometryError("AOA lines are parallel: no unique intersection")
    p0 = np.linalg.solve(lhs, rhs)

    def fun(p):
        res = []
        for a, u in zip(anchors, units):
            delta = p - a
            proj = delta - (delta @ u) * u
            res.extend(proj)
        return np.asarray(res)

    return _nls(fun, p0, dims)


def solve_adod(anchors, pair_indices, angle_diffs, dims: int = 2, grid_points: int = 40) -> EstimationResult:
    """Position from angle differences of departure (orientation-free AODs).

    Each measurement is the wrapped difference of the bearings from the
    target to two anchors; a coarse grid over the anchor bounding box seeds
    a least-squares refinement.
    """
    anchors = np.asarray(anchors, dtype=float)[:, :dims]
    pair_indices = list(pair_indices)
    angle_diffs = np.asarray(angle_diffs, dtype=float)
    _check_count("adod", len(angle_diffs), dims)
    if dims != 2:
        raise ConfigError("ADOD solving is implemented for 2D scenarios")

    def model(p):
        bearings = np.arctan2(anchors[:, 1] - p[1], anchors[:, 0] - p[0])
        return np.array([_wrap(bearings[j] - bearings[i]) for i, j in pair_indices])

    def fun(p):
        return _wrap(model(p) - angle_diffs)

    lo = anchors.min(axis=0) - 1.0
    hi = anchors.max(axis=0) + 1.0
    span = hi - lo
    lo -= span
    hi += span
    best, best_cost = None, np.inf
    for x in np.linspace(lo[0], hi[0], grid_points):
        for y in np.linspace(lo[1], hi[1], grid_points):
            c = float(np.sum(fun(np.array([x, y])) ** 2))
            if c < best_cost:
                best_cost, best = c, np.array([x, y])
    return _nls(fun, best, dims)


def _wrap(a):
    return np.mod(np.asarray(a) + np.pi, 2 * np.pi) - np.pi
