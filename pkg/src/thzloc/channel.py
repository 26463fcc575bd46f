"""Multi-carrier MIMO channel synthesis: LOS, RIS and NLOS paths under
plane-wave (PWM) or spherical-wave (SWM) propagation, the AOSA effective
channel with per-subarray analog beamforming (optionally with beam split),
and hardware impairment distortion.

Channel matrices are built over the arrays' minimum communication units:
the SA centers of an :class:`~thzloc.arrays.ArraySpec` (a conventional
array is an AOSA with single-element SAs, an RIS element is its own unit).
The uplink convention is used throughout: the UE transmits, the BS
receives, so `H[k]` has shape (n_units_bs, n_units_ue).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, auto
from functools import cached_property

import numpy as np

from .arrays import ArraySpec, sector_gain, steering_vector
from .constants import SPEED_OF_LIGHT as C
from .errors import ConfigError, DegenerateGeometryError
from .geometry import AnglePair, angles_from_direction, direction_from_angles

__all__ = [
    "AbsorptionModel",
    "ImpairmentConfig",
    "PathDescriptor",
    "PathKind",
    "RisProfile",
    "WaveModel",
    "Waveform",
    "aosa_effective_channel",
    "apply_impairments",
    "attenuation",
    "los_path",
    "nlos_paths",
    "quantize_phases",
    "ris_channel",
]


class WaveModel(Enum):
    PWM = auto()
    SWM = auto()


class PathKind(Enum):
    LOS = auto()
    RIS = auto()
    NLOS = auto()


@dataclass(frozen=True)
class Waveform:
    """OFDM waveform description.

    Subcarrier k (1-based) sits at f_k = f_c + (2k - 1 - K) W / (2K); the
    grid is symmetric around the carrier so the offsets sum to zero.
    """

    f_c: float
    bandwidth: float
    n_subcarriers: int = 10
    n_transmissions: int = 10
    power_mw: float = 10.0
    noise_psd_dbm_hz: float = -173.86
    noise_figure_db: float = 13.0
    total_energy_norm: bool = False

    def __post_init__(self):
        if not (self.f_c > self.bandwidth / 2 > 0):
            raise ConfigError("waveform requires f_c > W/2 > 0")
        if self.n_subcarriers < 1 or self.n_transmissions < 1:
            raise ConfigError("K and G must be >= 1")
        if self.power_mw <= 0:
            raise ConfigError("transmit power must be positive")

    @property
    def wavelength(self) -> float:
        return C / self.f_c

    @cached_property
    def subcarrier_offsets(self) -> np.ndarray:
        """Delta f_k (Hz), k = 1..K."""
        k = np.arange(1, self.n_subcarriers + 1)
        return (2 * k - 1 - self.n_subcarriers) * self.bandwidth / (2 * self.n_subcarriers)

    @cached_property
    def subcarrier_freqs(self) -> np.ndarray:
        return self.f_c + self.subcarrier_offsets

    @cached_property
    def freq_ratios(self) -> np.ndarray:
        """c_k = f_c / f_k."""
        return self.f_c / self.subcarrier_freqs


@dataclass(frozen=True)
class AbsorptionModel:
    """Molecular absorption with a scenario-supplied constant coefficient.

    k_abs = 0 disables absorption.  The coefficient is taken identical
    across subcarriers, so the frequency argument of :func:`attenuation`
    only exists for interface symmetry.
    """

    k_abs: float = 0.0

    def __post_init__(self):
        if self.k_abs < 0:
            raise ConfigError("absorption coefficient must be non-negative")


def attenuation(model: AbsorptionModel, f: float, d: float) -> float:
    """Amplitude attenuation exp(-k_abs d / 2) over a distance d >= 0."""
    if d < 0:
        raise ConfigError("distance must be non-negative")
    return float(np.exp(-0.5 * model.k_abs * d))


@dataclass(frozen=True)
class RisProfile:
    """Per-element RIS coefficients: amplitudes in [0, 1], phases in [0, 2pi)."""

    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=float).ravel()
        ph = np.mod(np.asarray(self.phases, dtype=float).ravel(), 2 * np.pi)
        if amp.size == 0:
            raise ConfigError("RIS profile must have at least one element")
        if amp.size != ph.size:
            raise ConfigError("amplitude/phase lengths differ")
        if np.any(amp < 0) or np.any(amp > 1):
            raise ConfigError("RIS amplitudes must lie in [0, 1]")
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "phases", ph)

    def __len__(self) -> int:
        return self.amplitudes.size

    def coefficients(self) -> np.ndarray:
        """Diagonal of the RIS coefficient matrix: beta_n exp(j omega_n)."""
        return self.amplitudes * np.exp(1j * self.phases)

    @staticmethod
    def uniform(n: int, amplitude: float = 1.0, phase: float = 0.0) -> "RisProfile":
        return RisProfile(np.full(n, amplitude), np.full(n, phase))

    @staticmethod
    def random(n: int, rng: np.random.Generator) -> "RisProfile":
        return RisProfile(np.ones(n), rng.uniform(0.0, 2 * np.pi, n))


@dataclass(frozen=True)
class ImpairmentConfig:
    """Hardware imperfection knobs; everything defaults to off."""

    tx_impair: float = 0.0  # kappa_t
    rx_impair: float = 0.0  # kappa_r
    phase_noise_std: float = 0.0  # sigma_theta, rad
    ps_quant_bits: int | None = None
    ris_quant_bits: int | None = None
    adc_bits: int | None = None

    def __post_init__(self):
        if min(self.tx_impair, self.rx_impair, self.phase_noise_std) < 0:
            raise ConfigError("impairment coefficients must be non-negative")
        for bits in (self.ps_quant_bits, self.ris_quant_bits, self.adc_bits):
            if bits is not None and bits < 1:
                raise ConfigError("quantization bits must be >= 1")

    @property
    def active(self) -> bool:
        return (
            self.tx_impair > 0
            or self.rx_impair > 0
            or self.phase_noise_std > 0
            or self.adc_bits is not None
        )


@dataclass
class PathDescriptor:
    """Synthesized propagation path parameters."""

    kind: PathKind
    rho: float
    xi: float
    tau: float
    angles: dict[str, AnglePair]
    distances: dict[str, float]
    index: int = 0
    reflection_coeff: float | None = None
    scatter_position: np.ndarray | None = None
    in_sector: bool = True


def _local_angles(spec: ArraySpec, t_global: np.ndarray) -> tuple[AnglePair, np.ndarray]:
    t_local = spec.pose.rotation.T @ t_global
    return angles_from_direction(t_local), t_local


def _link(spec_a: ArraySpec, spec_b: ArraySpec):
    """Geometry of the a->b link: distance, global direction, local angles."""
    delta = spec_b.pose.position - spec_a.pose.position
    d = float(np.linalg.norm(delta))
    if d < 1e-12:
        raise DegenerateGeometryError("coincident array centers")
    t_ab = delta / d
    ang_a, t_a_local = _local_angles(spec_a, t_ab)
    ang_b, t_b_local = _local_angles(spec_b, -t_ab)
    return d, t_ab, (ang_a, t_a_local), (ang_b, t_b_local)


def _subcarrier_scalars(wf: Waveform, rho: float, xi: float, tau: float, order: int = 1) -> np.ndarray:
    """c_k^order * rho * exp(-j xi) * exp(-j 2 pi df_k tau) for every subcarrier."""
    return (wf.freq_ratios**order) * rho * np.exp(-1j * xi) * np.exp(-2j * np.pi * wf.subcarrier_offsets * tau)


def _pairwise_distances(pos_a: np.ndarray, pos_b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(pos_a[:, None, :] - pos_b[None, :, :], axis=-1)


def los_path(
    bs: ArraySpec,
    ue: ArraySpec,
    wf: Waveform,
    clock_offset: float = 0.0,
    absorption: AbsorptionModel = AbsorptionModel(),
    wave_model: WaveModel = WaveModel.PWM,
) -> tuple[PathDescriptor, np.ndarray]:
    """BS-UE LOS channel: path descriptor and per-subcarrier (K, N_B, N_U) matrices.

    Under PWM each subcarrier matrix is the rank-one steering outer product;
    under SWM entry phases follow the exact unit-to-unit distances while the
    amplitude stays at the array-center value.
    """
    d, _, (ang_bs, t_bs), (ang_ue, t_ue) = _link(bs, ue)
    g_b = sector_gain(bs.gain, ang_bs)
    g_u = sector_gain(ue.gain, ang_ue)
    rho = wf.wavelength / (4 * np.pi * d) * attenuation(absorption, wf.f_c, d) * g_b * g_u
    tau = d / C + clock_offset
    xi = np.mod(2 * np.pi * wf.f_c * tau, 2 * np.pi)
    desc = PathDescriptor(
        kind=PathKind.LOS,
        rho=rho,
        xi=xi,
        tau=tau,
        angles={"bs_local": ang_bs, "ue_local": ang_ue},
        distances={"bs_ue": d},
        in_sector=(g_b > 0 and g_u > 0),
    )
    scal = _subcarrier_scalars(wf, rho, xi, tau)
    if wave_model is WaveModel.PWM:
        h = np.zeros((wf.n_subcarriers, bs.n_sa, ue.n_sa), dtype=complex)
        for k, f_k in enumerate(wf.subcarrier_freqs):
            a_b = steering_vector(bs.sa_centers_local, f_k, t_bs)
            a_u = steering_vector(ue.sa_centers_local, f_k, t_ue)
            h[k] = scal[k] * np.outer(a_b, a_u)
        return desc, h
    d_units = _pairwise_distances(bs.sa_centers_global(), ue.sa_centers_global())
    dtau = (d_units - d) / C
    phase = np.exp(-2j * np.pi * wf.subcarrier_freqs[:, None, None] * dtau[None, :, :])
    return desc, scal[:, None, None] * phase


def ris_channel(
    bs: ArraySpec,
    ris: ArraySpec,
    ue: ArraySpec,
    profile: RisProfile,
    wf: Waveform,
    clock_offset: float = 0.0,
    absorption: AbsorptionModel = AbsorptionModel(),
    wave_model: WaveModel = WaveModel.PWM,
) -> tuple[PathDescriptor, np.ndarray]:
    """BS-RIS-UE cascade channel with a per-element reflection profile."""
    if len(profile) != ris.n_sa:
        raise ConfigError(f"profile length {len(profile)} != RIS element count {ris.n_sa}")
    d_br, _, (ang_b, t_b), (ang_rb, t_rb) = _link(bs, ris)
    d_ru, _, (ang_ru, t_ru), (ang_ur, t_ur) = _link(ris, ue)
    gains = (
        sector_gain(bs.gain, ang_b)
        * sector_gain(ris.gain, ang_rb)
        * sector_gain(ris.gain, ang_ru)
        * sector_gain(ue.gain, ang_ur)
    )
    rho = (
        wf.wavelength**2
        / (16 * np.pi**2 * d_br * d_ru)
        * attenuation(absorption, wf.f_c, d_br)
        * attenuation(absorption, wf.f_c, d_ru)
        * gains
    )
    tau = (d_br + d_ru) / C + clock_offset
    xi = np.mod(2 * np.pi * wf.f_c * tau, 2 * np.pi)
    desc = PathDescriptor(
        kind=PathKind.RIS,
        rho=rho,
        xi=xi,
        tau=tau,
        angles={"bs_local": ang_b, "ris_in_local": ang_rb, "ris_out_local": ang_ru, "ue_local": ang_ur},
        distances={"bs_ris": d_br, "ris_ue": d_ru},
        in_sector=gains > 0,
    )
    omega = profile.coefficients()
    scal = _subcarrier_scalars(wf, rho, xi, tau, order=2)
    if wave_model is WaveModel.PWM:
        h = np.zeros((wf.n_subcarriers, bs.n_sa, ue.n_sa), dtype=complex)
        for k, f_k in enumerate(wf.subcarrier_freqs):
            a_b = steering_vector(bs.sa_centers_local, f_k, t_b)
            a_rb = steering_vector(ris.sa_centers_local, f_k, t_rb)
            a_ru = steering_vector(ris.sa_centers_local, f_k, t_ru)
            a_u = steering_vector(ue.sa_centers_local, f_k, t_ur)
            aggregate = np.sum(a_rb * omega * a_ru)
            h[k] = scal[k] * aggregate * np.outer(a_b, a_u)
        return desc, h
    p_r = ris.sa_centers_global()
    d_br_units = _pairwise_distances(bs.sa_centers_global(), p_r)  # (N_B, N_R)
    d_ru_units = _pairwise_distances(p_r, ue.sa_centers_global())  # (N_R, N_U)
    dtau = (d_br_units[:, :, None] + d_ru_units[None, :, :] - d_br - d_ru) / C  # (N_B, N_R, N_U)
    h = np.zeros((wf.n_subcarriers, bs.n_sa, ue.n_sa), dtype=complex)
    for k, f_k in enumerate(wf.subcarrier_freqs):
        phase = np.exp(-2j * np.pi * f_k * dtau)
        h[k] = scal[k] * np.einsum("r,brn->bn", omega, phase)
    return desc, h


def nlos_paths(
    bs: ArraySpec,
    ue: ArraySpec,
    scatterers,
    wf: Waveform,
    clock_offset: float = 0.0,
    absorption: AbsorptionModel = AbsorptionModel(),
    wave_model: WaveModel = WaveModel.PWM,
) -> list[tuple[PathDescriptor, np.ndarray]]:
    """Single-bounce NLOS channels, one per (scatter position, coefficient) pair.

    The total NLOS matrix is the sum of the returned per-path matrices.
    """
    out = []
    for idx, (pos, coeff) in enumerate(scatterers, start=1):
        pos = np.asarray(pos, dtype=float).reshape(3)
        if not 0 <= coeff <= 1:
            raise ConfigError("NLOS reflection coefficient must lie in [0, 1]")
        delta_b = pos - bs.pose.position
        d_bn = float(np.linalg.norm(delta_b))
        delta_u = pos - ue.pose.position
        d_nu = float(np.linalg.norm(delta_u))
        if d_bn < 1e-12 or d_nu < 1e-12:
            raise DegenerateGeometryError("scatterer coincides with an array center")
        t_bn = delta_b / d_bn
        t_un = delta_u / d_nu
        ang_b, t_b_local = _local_angles(bs, t_bn)
        ang_u, t_u_local = _local_angles(ue, t_un)
        d_total = d_bn + d_nu
        rho = (
            wf.wavelength
            / (4 * np.pi * d_total)
            * coeff
            * attenuation(absorption, wf.f_c, d_total)
            * sector_gain(bs.gain, ang_b)
            * sector_gain(ue.gain, ang_u)
        )
        tau = d_total / C + clock_offset
        xi = np.mod(2 * np.pi * wf.f_c * tau, 2 * np.pi)
        desc = PathDescriptor(
            kind=PathKind.NLOS,
            rho=rho,
            xi=xi,
            tau=tau,
            angles={"bs_local": ang_b, "ue_local": ang_u},
            distances={"bs_scatter": d_bn, "scatter_ue": d_nu},
            index=idx,
            reflection_coeff=float(coeff),
            scatter_position=pos,
            in_sector=rho > 0 or coeff == 0,
        )
        scal = _subcarrier_scalars(wf, rho, xi, tau)
        if wave_model is WaveModel.PWM:
            h = np.zeros((wf.n_subcarriers, bs.n_sa, ue.n_sa), dtype=complex)
            for k, f_k in enumerate(wf.subcarrier_freqs):
                a_b = steering_vector(bs.sa_centers_local, f_k, t_b_local)
                a_u = steering_vector(ue.sa_centers_local, f_k, t_u_local)
                h[k] = scal[k] * np.outer(a_b, a_u)
        else:
            d_units = _pairwise_distances(bs.sa_centers_global(), pos[None, :]) + _pairwise_distances(
                pos[None, :], ue.sa_centers_global()
            )
            dtau = (d_units - d_total) / C
            h = scal[:, None, None] * np.exp(
                -2j * np.pi * wf.subcarrier_freqs[:, None, None] * dtau[None, :, :]
            )
        out.append((desc, h))
    return out


def _af_matrix(
    spec: ArraySpec,
    wf: Waveform,
    t_steer: np.ndarray,
    beams: np.ndarray,
    bse: bool,
) -> np.ndarray:
    """(K, n_sa) array factors of one array for a common steering direction.

    `beams` holds one (az, el) beam per SA.  With bse the beamforming phase
    is pinned at the carrier while the steering phase runs at f_k.
    """
    offsets = spec.ae_offsets_local  # (n_ae, 3)
    n_ae = offsets.shape[0]
    psi_steer = offsets @ t_steer  # (n_ae,)
    t_beams = np.stack([direction_from_angles(b) for b in beams])  # (n_sa, 3)
    psi_beam = t_beams @ offsets.T  # (n_sa, n_ae)
    f_k = wf.subcarrier_freqs[:, None, None]
    f_beam = wf.f_c if bse else f_k
    phase = (2 * np.pi / C) * (f_k * psi_steer[None, None, :] - f_beam * psi_beam[None, :, :])
    return np.exp(1j * phase).sum(axis=-1) / np.sqrt(n_ae)


def _af_matrix_pairwise(
    spec: ArraySpec,
    wf: Waveform,
    t_steer_pairs: np.ndarray,
    beams: np.ndarray,
    bse: bool,
) -> np.ndarray:
    """(K, n_sa, n_other) array factors with per-SA-pair steering directions.

    t_steer_pairs has shape (n_sa, n_other, 3): the local direction from each
    SA of `spec` toward each unit of the other end (SWM per-pair angles).
    """
    offsets = spec.ae_offsets_local
    n_ae = offsets.shape[0]
    psi_steer = np.einsum("ad,smd->sma", offsets, t_steer_pairs)  # (n_sa, n_other, n_ae)
    t_beams = np.stack([direction_from_angles(b) for b in beams])  # (n_sa, 3)
    psi_beam = t_beams @ offsets.T  # (n_sa, n_ae)
    f_k = wf.subcarrier_freqs[:, None, None, None]
    f_beam = wf.f_c if bse else f_k
    phase = (2 * np.pi / C) * (
        f_k * psi_steer[None, :, :, :] - f_beam * psi_beam[None, :, None, :]
    )
    return np.exp(1j * phase).sum(axis=-1) / np.sqrt(n_ae)


def _pair_directions(spec: ArraySpec, other_global: np.ndarray) -> np.ndarray:
    """(n_sa, n_other, 3) local directions from each SA center toward points."""
    own = spec.sa_centers_global()
    delta = other_global[None, :, :] - own[:, None, :]
    d = np.linalg.norm(delta, axis=-1, keepdims=True)
    if np.any(d < 1e-12):
        raise DegenerateGeometryError("coincident units in SWM pair geometry")
    return (delta / d) @ spec.pose.rotation


def aosa_effective_channel(
    bs: ArraySpec,
    ue: ArraySpec,
    wf: Waveform,
    beams_bs: np.ndarray,
    beams_ue: np.ndarray,
    ris: ArraySpec | None = None,
    profile: RisProfile | None = None,
    scatterers=(),
    clock_offset: float = 0.0,
    absorption: AbsorptionModel = AbsorptionModel(),
    wave_model: WaveModel = WaveModel.PWM,
    bse: bool = False,
) -> np.ndarray:
    """Effective AOSA channel (K, N_B, N_U) over SAs for one transmission.

    Each path's SA-level channel matrix is Hadamard-multiplied by the
    per-SA array factors of both ends.  Under SWM the array factors use
    per-SA-pair steering angles (each SA internally stays plane-wave).
    beams_* hold one (az, el) per SA in the local frame.
    """
    beams_bs = np.asarray(beams_bs, dtype=float).reshape(bs.n_sa, 2)
    beams_ue = np.asarray(beams_ue, dtype=float).reshape(ue.n_sa, 2)
    out = np.zeros((wf.n_subcarriers, bs.n_sa, ue.n_sa), dtype=complex)

    desc_los, h_los = los_path(bs, ue, wf, clock_offset, absorption, wave_model)
    if wave_model is WaveModel.PWM:
        af_b = _af_matrix(bs, wf, direction_from_angles(desc_los.angles["bs_local"]), beams_bs, bse)
        af_u = _af_matrix(ue, wf, direction_from_angles(desc_los.angles["ue_local"]), beams_ue, bse)
        out += af_b[:, :, None] * af_u[:, None, :] * h_los
    else:
        af_b = _af_matrix_pairwise(bs, wf, _pair_directions(bs, ue.sa_centers_global()), beams_bs, bse)
        af_u = _af_matrix_pairwise(ue, wf, _pair_directions(ue, bs.sa_centers_global()), beams_ue, bse)
        out += af_b * np.swapaxes(af_u, 1, 2) * h_los

    if ris is not None:
        if profile is None:
            raise ConfigError("RIS array given without a profile")
        desc_r, h_r = ris_channel(bs, ris, ue, profile, wf, clock_offset, absorption, wave_model)
        if wave_model is WaveModel.PWM:
            af_b = _af_matrix(bs, wf, direction_from_angles(desc_r.angles["bs_local"]), beams_bs, bse)
            af_u = _af_matrix(ue, wf, direction_from_angles(desc_r.angles["ue_local"]), beams_ue, bse)
            out += af_b[:, :, None] * af_u[:, None, :] * h_r
        else:
            # Per (b, r, u) pair: rebuild the RIS cascade with AF weights inside the r-sum.
            omega = profile.coefficients()
            p_r = ris.sa_centers_global()
            d_br_units = _pairwise_distances(bs.sa_centers_global(), p_r)
            d_ru_units = _pairwise_distances(p_r, ue.sa_centers_global())
            d_br = desc_r.distances["bs_ris"]
            d_ru = desc_r.distances["ris_ue"]
            dtau = (d_br_units[:, :, None] + d_ru_units[None, :, :] - d_br - d_ru) / C
            af_b = _af_matrix_pairwise(bs, wf, _pair_directions(bs, p_r), beams_bs, bse)  # (K, N_B, N_R)
            af_u = _af_matrix_pairwise(ue, wf, _pair_directions(ue, p_r), beams_ue, bse)  # (K, N_U, N_R)
            scal = _subcarrier_scalars(wf, desc_r.rho, desc_r.xi, desc_r.tau, order=2)
            for k, f_k in enumerate(wf.subcarrier_freqs):
                phase = np.exp(-2j * np.pi * f_k * dtau)  # (N_B, N_R, N_U)
                out[k] += scal[k] * np.einsum("br,r,brn,nr->bn", af_b[k], omega, phase, af_u[k])

    for desc_n, h_n in nlos_paths(bs, ue, scatterers, wf, clock_offset, absorption, wave_model):
        if wave_model is WaveModel.PWM:
            af_b = _af_matrix(bs, wf, direction_from_angles(desc_n.angles["bs_local"]), beams_bs, bse)
            af_u = _af_matrix(ue, wf, direction_from_angles(desc_n.angles["ue_local"]), beams_ue, bse)
            out += af_b[:, :, None] * af_u[:, None, :] * h_n
        else:
            pos = desc_n.scatter_position[None, :]
            af_b = _af_matrix_pairwise(bs, wf, _pair_directions(bs, pos), beams_bs, bse)[:, :, 0]
            af_u = _af_matrix_pairwise(ue, wf, _pair_directions(ue, pos), beams_ue, bse)[:, :, 0]
            out += af_b[:, :, None] * af_u[:, None, :] * h_n

    return out


def quantize_phases(phases, bits: int) -> np.ndarray:
    """Snap phases to the 2**bits uniform grid on [0, 2pi); ties go to the
    lower grid point."""
    if bits < 1:
        raise ConfigError("quantization bits must be >= 1")
    step = 2 * np.pi / (2**bits)
    ph = np.mod(np.asarray(phases, dtype=float), 2 * np.pi)
    idx = np.ceil(ph / step - 0.5).astype(int) % (2**bits)
    return idx * step


@dataclass
class ImpairmentContext:
    """Channel-side state needed to scale distortion noise."""

    channels: np.ndarray | None = None  # (G, K, N_rx, N_tx)
    power_mw: float = 1.0
    tx_symbols: np.ndarray | None = None  # (G, K, N_tx)


def apply_impairments(
    mu: np.ndarray,
    context: ImpairmentContext,
    cfg: ImpairmentConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Distort a clean observation tensor (G, K, N_rx) with RFC impairment
    noise, receiver phase noise and, if configured, ADC phase quantization."""
    y = np.array(mu, dtype=complex, copy=True)
    n_g, n_k, n_rx = y.shape
    if cfg.tx_impair > 0 or cfg.rx_impair > 0:
        if context.channels is None:
            raise ConfigError("RFC impairments need channel matrices in the context")
        h = context.channels
        p_bar = context.power_mw
        for g in range(n_g):
            for k in range(n_k):
                n_tx = h[g, k].shape[1]
                if cfg.tx_impair > 0:
                    nt = _cn(rng, n_tx, cfg.tx_impair**2 * p_bar)
                    y[g, k] += np.sqrt(p_bar) * h[g, k] @ nt
                if cfg.rx_impair > 0:
                    gain = np.linalg.norm(h[g, k]) ** 2 / (n_rx * n_tx)
                    y[g, k] += _cn(rng, n_rx, cfg.rx_impair**2 * p_bar * gain)
    if cfg.phase_noise_std > 0:
        for g in range(n_g):
            omega = rng.normal(0.0, cfg.phase_noise_std, n_rx)
            y[g] *= np.exp(1j * omega)[None, :]
    if cfg.adc_bits is not None:
        mag = np.abs(y)
        y = mag * np.exp(1j * quantize_phases(np.angle(y), cfg.adc_bits))
    return y


def _cn(rng: np.random.Generator, n: int, variance: float) -> np.ndarray:
    """Circularly symmetric complex normal draws with the given total variance."""
    s = np.sqrt(variance / 2)
    return rng.normal(0.0, s, n) + 1j * rng.normal(0.0, s, n)
