import numpy as np
import pytest

from thzloc.arrays import ArraySpec, GainModel, Role
from thzloc.channel import (
    AbsorptionModel,
    ImpairmentConfig,
    ImpairmentContext,
    PathKind,
    RisProfile,
    WaveModel,
    Waveform,
    aosa_effective_channel,
    apply_impairments,
    attenuation,
    los_path,
    nlos_paths,
    quantize_phases,
    ris_channel,
)
from thzloc.errors import ConfigError, DegenerateGeometryError
from thzloc.geometry import Pose

C = 299792458.0


def wf_thz(**kw):
    args = dict(f_c=0.3e12, bandwidth=100e6, n_subcarriers=4, n_transmissions=2, power_mw=10.0)
    args.update(kw)
    return Waveform(**args)


def bs_at(pos=(0, 0, 0), sa=(2, 2), ae=(1, 1), spacing=0.5e-3, gain=None, role=Role.BS, ori=(0, 0, 0)):
    return ArraySpec(
        role=role,
        pose=Pose(np.array(pos, dtype=float), np.array(ori, dtype=float)),
        sa_shape=sa,
        ae_shape=ae,
        ae_spacing=spacing,
        gain=gain or GainModel.omni(),
    )


class TestWaveform:
    def test_subcarrier_grid(self):
        wf = wf_thz(n_subcarriers=10)
        offs = wf.subcarrier_offsets
        assert np.isclose(offs.sum(), 0.0)
        assert np.isclose(offs[-1] - offs[0], wf.bandwidth * (1 - 1 / wf.n_subcarriers))
        assert np.allclose(wf.freq_ratios, wf.f_c / (wf.f_c + offs))

    def test_validation(self):
        with pytest.raises(ConfigError):
            Waveform(f_c=1e9, bandwidth=3e9)
        with pytest.raises(ConfigError):
            wf_thz(n_subcarriers=0)


class TestAttenuation:
    def test_disabled(self):
        assert attenuation(AbsorptionModel(0.0), 0.3e12, 123.0) == 1.0

    def test_zero_distance(self):
        assert attenuation(AbsorptionModel(0.01), 0.3e12, 0.0) == 1.0

    def test_hand_value(self):
        assert np.isclose(attenuation(AbsorptionModel(0.01), 0.3e12, 100.0), np.exp(-0.5))


class TestLosPath:
    def test_amplitude_hand_value(self):
        wf = wf_thz()
        bs = bs_at()
        ue = bs_at(pos=(10, 0, 0), sa=(1, 1))
        desc, h = los_path(bs, ue, wf)
        lam = wf.wavelength
        assert np.isclose(desc.rho, lam / (4 * np.pi * 10.0), rtol=1e-12)
        assert np.isclose(desc.rho, 1e-3 / (40 * np.pi), rtol=2e-3)

    def test_phase_invariant(self):
        wf = wf_thz()
        desc, _ = los_path(bs_at(), bs_at(pos=(3.7, 1.1, 0.4), sa=(1, 1)), wf, clock_offset=2e-9)
        expected = np.mod(2 * np.pi * wf.f_c * desc.tau, 2 * np.pi)
        assert abs((desc.xi - expected + np.pi) % (2 * np.pi) - np.pi) < 1e-9
        assert desc.tau >= 2e-9

    def test_center_subcarrier_phase(self):
        wf = wf_thz(n_subcarriers=3)  # middle subcarrier sits exactly at f_c
        bs = bs_at(sa=(1, 1))
        ue = bs_at(pos=(5, 0, 0), sa=(1, 1))
        desc, h = los_path(bs, ue, wf)
        assert np.isclose(h[1, 0, 0], desc.rho * np.exp(-1j * desc.xi))

    def test_rank_one(self):
        wf = wf_thz()
        _, h = los_path(bs_at(sa=(3, 3)), bs_at(pos=(8, 2, 0), sa=(2, 2)), wf)
        for k in range(wf.n_subcarriers):
            assert np.linalg.matrix_rank(h[k], tol=1e-12 * np.abs(h[k]).max()) == 1

    def test_out_of_sector_flagged(self):
        gain = GainModel(sector=True, g0=4.0, az_hpbw=np.pi / 4, el_hpbw=np.pi / 4)
        bs = bs_at(gain=gain, ori=(np.pi / 2, 0, 0))  # boresight along +y, UE at +x
        ue = bs_at(pos=(10, 0, 0), sa=(1, 1))
        desc, h = los_path(bs, ue, wf_thz())
        assert not desc.in_sector
        assert np.allclose(h, 0)

    def test_distance_halves_amplitude(self):
        wf = wf_thz()
        d1, _ = los_path(bs_at(sa=(1, 1)), bs_at(pos=(10, 0, 0), sa=(1, 1)), wf)
        d2, _ = los_path(bs_at(sa=(1, 1)), bs_at(pos=(20, 0, 0), sa=(1, 1)), wf)
        assert np.isclose(d2.rho, d1.rho / 2)


class TestRisChannel:
    def setup_method(self):
        self.wf = wf_thz()
        self.bs = bs_at(sa=(2, 2))
        self.ris = bs_at(pos=(5, 5, 0), sa=(3, 3), role=Role.RIS, ori=(-np.pi / 2, 0, 0))
        self.ue = bs_at(pos=(10, 0, 0), sa=(1, 1), role=Role.UE)

    def test_zero_profile(self):
        profile = RisProfile.uniform(9, amplitude=0.0)
        _, h = ris_channel(self.bs, self.ris, self.ue, profile, self.wf)
        assert np.allclose(h, 0)

    def test_single_element_cascade(self):
        ris1 = bs_at(pos=(5, 5, 0), sa=(1, 1), role=Role.RIS)
        desc, h = ris_channel(self.bs, ris1, self.ue, RisProfile.uniform(1), self.wf)
        lam = self.wf.wavelength
        d1 = 5 * np.sqrt(2)
        d2 = np.linalg.norm(np.array([10, 0, 0]) - np.array([5, 5, 0]))
        assert np.isclose(desc.rho, lam**2 / (16 * np.pi**2 * d1 * d2))
        assert np.isclose(desc.tau, (d1 + d2) / C)

    def test_profile_length_mismatch(self):
        with pytest.raises(ConfigError):
            ris_channel(self.bs, self.ris, self.ue, RisProfile.uniform(4), self.wf)

    def test_aligned_profile_maximal(self):
        from thzloc.arrays import steering_vector
        from thzloc.geometry import angles_from_direction

        desc, _ = ris_channel(self.bs, self.ris, self.ue, RisProfile.uniform(9), self.wf)
        f_c = self.wf.f_c
        rot = self.ris.pose.rotation
        t_rb = rot.T @ ((self.bs.pose.position - self.ris.pose.position) / (5 * np.sqrt(2)))
        delta = self.ue.pose.position - self.ris.pose.position
        t_ru = rot.T @ (delta / np.linalg.norm(delta))
        a_rb = steering_vector(self.ris.sa_centers_local, f_c, t_rb)
        a_ru = steering_vector(self.ris.sa_centers_local, f_c, t_ru)
        cascade = a_rb * a_ru
        profile = RisProfile(np.ones(9), np.mod(-np.angle(cascade), 2 * np.pi))
        agg = np.abs(np.sum(cascade * profile.coefficients()))
        assert np.isclose(agg, 9.0, rtol=1e-12)


class TestNlosPaths:
    def test_zero_coefficient(self):
        out = nlos_paths(bs_at(), bs_at(pos=(10, 0, 0), sa=(1, 1)), [((5, -5, 0), 0.0)], wf_thz())
        desc, h = out[0]
        assert np.allclose(h, 0)
        assert desc.reflection_coeff == 0.0

    def test_midpoint_same_delay(self):
        wf = wf_thz()
        bs = bs_at(sa=(1, 1))
        ue = bs_at(pos=(10, 0, 0), sa=(1, 1))
        (desc_n, _), = nlos_paths(bs, ue, [((5, 0, 0), 0.5)], wf)
        desc_l, _ = los_path(bs, ue, wf)
        assert np.isclose(desc_n.tau, desc_l.tau)

    def test_linearity(self):
        wf = wf_thz()
        bs = bs_at(sa=(2, 2))
        ue = bs_at(pos=(10, 0, 0), sa=(2, 1))
        scats = [((5, -5, 0), 0.7), ((3, 4, 0), 0.4)]
        both = nlos_paths(bs, ue, scats, wf)
        total = sum(h for _, h in both)
        single = [nlos_paths(bs, ue, [sc], wf)[0][1] for sc in scats]
        assert np.allclose(total, single[0] + single[1])

    def test_coincident_scatterer(self):
        with pytest.raises(DegenerateGeometryError):
            nlos_paths(bs_at(), bs_at(pos=(10, 0, 0), sa=(1, 1)), [((0, 0, 0), 0.5)], wf_thz())

    def test_total_path_length_amplitude(self):
        wf = wf_thz()
        (desc, _), = nlos_paths(bs_at(sa=(1, 1)), bs_at(pos=(10, 0, 0), sa=(1, 1)), [((5, -5, 0), 0.8)], wf)
        d_tot = np.sqrt(50) + np.sqrt(50)
        assert np.isclose(desc.rho, wf.wavelength / (4 * np.pi * d_tot) * 0.8)


class TestSwm:
    def test_single_element_equals_pwm(self):
        wf = wf_thz()
        bs = bs_at(sa=(1, 1))
        ue = bs_at(pos=(3, 2, 0), sa=(1, 1))
        _, h_pwm = los_path(bs, ue, wf, wave_model=WaveModel.PWM)
        _, h_swm = los_path(bs, ue, wf, wave_model=WaveModel.SWM)
        assert np.allclose(h_pwm, h_swm)

    def test_convergence_with_distance(self):
        wf = wf_thz()
        bs = bs_at(sa=(8, 8))
        devs = []
        for d in (0.5, 1.0, 2.0, 5.0, 15.0):
            ue = bs_at(pos=(d, 0.2, 0), sa=(1, 1))
            _, h_pwm = los_path(bs, ue, wf, wave_model=WaveModel.PWM)
            _, h_swm = los_path(bs, ue, wf, wave_model=WaveModel.SWM)
            devs.append(np.abs(h_swm - h_pwm).max())
        assert all(b < a for a, b in zip(devs, devs[1:]))

    def test_corner_phase_deviation_near_field(self):
        # ~2 cm aperture at 1 mm wavelength, 0.1 m range: corner elements
        # deviate from the plane-wave phase by more than 0.1 rad
        wf = wf_thz(n_subcarriers=1)
        lam = wf.wavelength
        bs = bs_at(sa=(20, 20), spacing=lam)
        ue = bs_at(pos=(0.1, 0, 0), sa=(1, 1))
        _, h_pwm = los_path(bs, ue, wf, wave_model=WaveModel.PWM)
        _, h_swm = los_path(bs, ue, wf, wave_model=WaveModel.SWM)
        dphi = np.abs(np.angle(h_swm[0] / h_pwm[0]))
        assert dphi.max() > 0.1

    def test_swm_ris_reduces_to_pwm_far_field(self):
        wf = wf_thz()
        bs = bs_at(sa=(2, 2))
        ris = bs_at(pos=(50, 50, 0), sa=(2, 2), role=Role.RIS)
        ue = bs_at(pos=(100, 0, 0), sa=(1, 1))
        prof = RisProfile.random(4, np.random.default_rng(0))
        _, h_pwm = ris_channel(bs, ris, ue, prof, wf, wave_model=WaveModel.PWM)
        _, h_swm = ris_channel(bs, ris, ue, prof, wf, wave_model=WaveModel.SWM)
        assert np.abs(h_swm - h_pwm).max() / np.abs(h_pwm).max() < 1e-3


class TestAosaEffective:
    def setup_method(self):
        self.wf = wf_thz()
        lam = self.wf.wavelength
        self.bs = bs_at(sa=(2, 2), ae=(3, 3), spacing=lam / 2)
        self.ue = bs_at(pos=(10, 0, 0), sa=(2, 1), ae=(3, 3), spacing=lam / 2, role=Role.UE)

    def test_single_ae_equals_sa_channel(self):
        bs = bs_at(sa=(2, 2), ae=(1, 1))
        ue = bs_at(pos=(10, 0, 0), sa=(2, 1), ae=(1, 1), role=Role.UE)
        beams_b = np.zeros((bs.n_sa, 2))
        beams_u = np.zeros((ue.n_sa, 2))
        eff = aosa_effective_channel(bs, ue, self.wf, beams_b, beams_u)
        _, h = los_path(bs, ue, self.wf)
        assert np.allclose(eff, h)

    def test_matched_beams_gain(self):
        from thzloc.geometry import angles_from_direction

        desc, h = los_path(self.bs, self.ue, self.wf)
        a_b = desc.angles["bs_local"]
        a_u = desc.angles["ue_local"]
        beams_b = np.tile([a_b.azimuth, a_b.elevation], (self.bs.n_sa, 1))
        beams_u = np.tile([a_u.azimuth, a_u.elevation], (self.ue.n_sa, 1))
        eff = aosa_effective_channel(self.bs, self.ue, self.wf, beams_b, beams_u)
        gain = np.abs(eff) / np.abs(h)
        assert np.allclose(gain, 3.0 * 3.0, rtol=1e-9)  # sqrt(9) per side

    def test_deterministic(self):
        rng = np.random.default_rng(42)
        beams_b = rng.uniform(-1, 1, (self.bs.n_sa, 2))
        beams_u = rng.uniform(-1, 1, (self.ue.n_sa, 2))
        scats = [((5, -5, 0), 0.6)]
        prof = RisProfile.random(9, np.random.default_rng(1))
        ris = bs_at(pos=(5, 5, 0), sa=(3, 3), role=Role.RIS, ori=(-np.pi / 2, 0, 0))
        kwargs = dict(ris=ris, profile=prof, scatterers=scats, wave_model=WaveModel.SWM)
        a = aosa_effective_channel(self.bs, self.ue, self.wf, beams_b, beams_u, **kwargs)
        b = aosa_effective_channel(self.bs, self.ue, self.wf, beams_b, beams_u, **kwargs)
        assert np.array_equal(a, b)

    def test_sum_of_paths(self):
        beams_b = np.zeros((self.bs.n_sa, 2))
        beams_u = np.zeros((self.ue.n_sa, 2))
        ris = bs_at(pos=(5, 5, 0), sa=(2, 2), role=Role.RIS, ori=(-np.pi / 2, 0, 0))
        prof = RisProfile.random(4, np.random.default_rng(5))
        scats = [((4, -4, 0), 0.5)]
        total = aosa_effective_channel(self.bs, self.ue, self.wf, beams_b, beams_u, ris=ris, profile=prof, scatterers=scats)
        los_only = aosa_effective_channel(self.bs, self.ue, self.wf, beams_b, beams_u)
        ris_only = aosa_effective_channel(self.bs, self.ue, self.wf, beams_b, beams_u, ris=ris, profile=prof)
        nlos_only = aosa_effective_channel(self.bs, self.ue, self.wf, beams_b, beams_u, scatterers=scats)
        assert np.allclose(total, ris_only + nlos_only - los_only)

    def test_beam_count_mismatch(self):
        with pytest.raises(Exception):
            aosa_effective_channel(self.bs, self.ue, self.wf, np.zeros((3, 2)), np.zeros((2, 2)))


class TestImpairments:
    def test_zero_config_identity(self):
        mu = np.random.default_rng(0).normal(size=(2, 3, 4)) + 0j
        out = apply_impairments(mu, ImpairmentContext(), ImpairmentConfig(), np.random.default_rng(1))
        assert np.array_equal(out, mu)

    def test_phase_noise_preserves_magnitude(self):
        rng = np.random.default_rng(0)
        mu = rng.normal(size=(2, 3, 4)) + 1j * rng.normal(size=(2, 3, 4))
        cfg = ImpairmentConfig(phase_noise_std=0.3)
        out = apply_impairments(mu, ImpairmentContext(), cfg, np.random.default_rng(2))
        assert np.allclose(np.abs(out), np.abs(mu))
        assert not np.allclose(out, mu)

    def test_quantize_phases_example(self):
        assert np.isclose(quantize_phases(0.3 * np.pi, 2), np.pi / 2)

    def test_quantize_tie_to_lower(self):
        # exactly between 0 and pi/2 -> lower point
        assert quantize_phases(np.pi / 4, 2) == 0.0

    def test_quantize_on_grid_unchanged(self):
        grid = np.array([0, np.pi / 2, np.pi, 3 * np.pi / 2])
        assert np.allclose(quantize_phases(grid, 2), grid)

    def test_rfc_noise_needs_context(self):
        mu = np.zeros((1, 1, 2), dtype=complex)
        with pytest.raises(ConfigError):
            apply_impairments(mu, ImpairmentContext(), ImpairmentConfig(tx_impair=0.1), np.random.default_rng(0))

    def test_rfc_noise_scales(self):
        rng = np.random.default_rng(0)
        h = np.ones((1, 1, 2, 2), dtype=complex)
        mu = np.zeros((1, 1, 2), dtype=complex)
        ctx = ImpairmentContext(channels=h, power_mw=4.0)
        cfg = ImpairmentConfig(tx_impair=0.1, rx_impair=0.05)
        out = apply_impairments(mu, ctx, cfg, rng)
        assert out.shape == mu.shape and not np.allclose(out, 0)
