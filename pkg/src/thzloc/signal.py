"""Pilot schedules, link-budget noise and noisy observation synthesis for
fully digital, fully connected hybrid and AOSA receive chains."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Waveform
from .errors import ConfigError

__all__ = [
    "ObservationSet",
    "PilotSchedule",
    "noise_variance",
    "observe_aosa",
    "observe_digital",
    "observe_hybrid",
    "random_combiner",
]


def noise_variance(wf: Waveform) -> float:
    """Noise power sigma^2 in mW over the waveform bandwidth:
    10^((PSD_dBm/Hz + NF_dB) / 10) * W."""
    if wf.bandwidth <= 0:
        raise ConfigError("bandwidth must be positive")
    return 10 ** ((wf.noise_psd_dbm_hz + wf.noise_figure_db) / 10) * wf.bandwidth


@dataclass
class PilotSchedule:
    """Transmit symbols per (transmission, subcarrier) plus optional per-SA
    beam angles (AOSA) or an RF precoder/combiner pair (hybrid)."""

    symbols: np.ndarray  # (G, K, n_tx)
    beams_bs: np.ndarray | None = None  # (G, n_sa_bs, 2)
    beams_ue: np.ndarray | None = None  # (G, n_sa_ue, 2)

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=complex)
        if self.symbols.ndim != 3:
            raise ConfigError("symbols must have shape (G, K, n_tx)")

    @staticmethod
    def random(
        n_transmissions: int,
        n_subcarriers: int,
        n_tx: int,
        rng: np.random.Generator,
        total_energy_norm: bool = False,
    ) -> "PilotSchedule":
        """Unit-circle random symbols, unit-normalized per (g, k).

        With total_energy_norm the per-symbol norm becomes 1/sqrt(K G) so the
        energy spent over the whole schedule stays fixed as G grows.
        """
        phases = rng.uniform(0.0, 2 * np.pi, (n_transmissions, n_subcarriers, n_tx))
        sym = np.exp(1j * phases) / np.sqrt(n_tx)
        if total_energy_norm:
            sym /= np.sqrt(n_subcarriers * n_transmissions)
        return PilotSchedule(sym)

    @staticmethod
    def random_beams(n_transmissions: int, n_sa: int, rng: np.random.Generator) -> np.ndarray:
        """Per-SA beam angles drawn uniformly in (-pi/2, pi/2) x (-pi/2, pi/2)."""
        az = rng.uniform(-np.pi / 2, np.pi / 2, (n_transmissions, n_sa))
        el = rng.uniform(-np.pi / 2, np.pi / 2, (n_transmissions, n_sa))
        return np.stack([az, el], axis=-1)


def random_combiner(n_antennas: int, n_rfc: int, rng: np.random.Generator) -> np.ndarray:
    """Phase-shifter RF combiner/precoder: unit-modulus entries scaled 1/sqrt(N)."""
    phases = rng.uniform(0.0, 2 * np.pi, (n_antennas, n_rfc))
    return np.exp(1j * phases) / np.sqrt(n_antennas)


@dataclass
class ObservationSet:
    """Noisy observations with their noise-free counterpart.

    noise_cov is only set for colored-noise (hybrid) models: the per-(g, k)
    covariance sigma^2 W_B^T W_B^* needed for downstream whitening.
    """

    y: np.ndarray  # (G, K, n_rx)
    mu: np.ndarray
    noise_var: float
    noise_cov: np.ndarray | None = None


def _draw_noise(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    s = np.sqrt(variance / 2)
    return rng.normal(0.0, s, shape) + 1j * rng.normal(0.0, s, shape)


def observe_digital(
    channels: np.ndarray,
    schedule: PilotSchedule,
    noise_var: float,
    rng: np.random.Generator,
    power_mw: float,
) -> ObservationSet:
    """y = sqrt(P) H[k] x^(g)[k] + n with white complex Gaussian noise."""
    channels = np.asarray(channels, dtype=complex)
    n_g, n_k, n_tx = schedule.symbols.shape
    if channels.ndim == 3:
        channels = np.broadcast_to(channels, (n_g,) + channels.shape)
    if channels.shape[:2] != (n_g, n_k) or channels.shape[3] != n_tx:
        raise ConfigError(f"channel shape {channels.shape} incompatible with schedule")
    mu = np.sqrt(power_mw) * np.einsum("gkru,gku->gkr", channels, schedule.symbols)
    y = mu + _draw_noise(rng, mu.shape, noise_var) if noise_var > 0 else mu.copy()
    return ObservationSet(y=y, mu=mu, noise_var=noise_var)


def observe_hybrid(
    channels: np.ndarray,
    combiner: np.ndarray,
    precoder: np.ndarray,
    symbols0: np.ndarray,
    noise_var: float,
    rng: np.random.Generator,
    power_mw: float,
) -> ObservationSet:
    """y = sqrt(P) W_B^T H W_U x0 + W_B^T n; the combiner colors the noise."""
    channels = np.asarray(channels, dtype=complex)
    symbols0 = np.asarray(symbols0, dtype=complex)
    n_g, n_k, _ = symbols0.shape
    if channels.ndim == 3:
        channels = np.broadcast_to(channels, (n_g,) + channels.shape)
    h_eff = np.einsum("mr,gkru,un->gkmn", combiner.T, channels, precoder)
    mu = np.sqrt(power_mw) * np.einsum("gkmn,gkn->gkm", h_eff, symbols0)
    if noise_var > 0:
        n = _draw_noise(rng, channels.shape[:2] + (combiner.shape[0],), noise_var)
        y = mu + np.einsum("rm,gkr->gkm", combiner, n)
    else:
        y = mu.copy()
    noise_cov = noise_var * combiner.T @ np.conj(combiner)
    return ObservationSet(y=y, mu=mu, noise_var=noise_var, noise_cov=noise_cov)


def observe_aosa(
    effective_channels: np.ndarray,
    schedule: PilotSchedule,
    noise_var: float,
    rng: np.random.Generator,
    power_mw: float,
) -> ObservationSet:
    """AOSA observation: one output per SA/RFC, beams already baked into the
    effective channel tensor (G, K, N_B, N_U)."""
    eff = np.asarray(effective_channels, dtype=complex)
    n_g, n_k, n_tx = schedule.symbols.shape
    if eff.ndim == 3:
        eff = np.broadcast_to(eff, (n_g,) + eff.shape)
    if eff.shape[:2] != (n_g, n_k) or eff.shape[3] != n_tx:
        raise ConfigError(f"effective channel shape {eff.shape} incompatible with schedule")
    mu = np.sqrt(power_mw) * np.einsum("gkru,gku->gkr", eff, schedule.symbols)
    y = mu + _draw_noise(rng, mu.shape, noise_var) if noise_var > 0 else mu.copy()
    return ObservationSet(y=y, mu=mu, noise_var=noise_var)
