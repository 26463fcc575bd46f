"""Analytic-derivative validation of the measurement models against central
differences, plus the hand-derived closed forms of the simplest cases."""

import numpy as np
import pytest

from thzloc.constants import SPEED_OF_LIGHT as C
from thzloc.errors import ConfigError
from thzloc.fim import ScenarioModel, fim_measurement
from thzloc.fim.params import ParamKind
from thzloc.scenarios import ScattererConfig, Scenario, mmwave_preset


def pwm_scenario(**kw):
    sc = mmwave_preset()
    sc.wave_model = "pwm"
    sc.waveform.n_transmissions = 3
    sc.waveform.n_subcarriers = 4
    sc.ris.enabled = False
    sc.scatterers = []
    for key, value in kw.items():
        setattr(sc, key, value)
    return sc


def rich_pwm_scenario():
    sc = pwm_scenario()
    sc.ris.enabled = True
    sc.ris.sa_shape = [4, 4]
    sc.ris.profile_mode = "random"
    sc.scatterers = [ScattererConfig(position=[5.0, -5.0, 0.0], coeff=0.7)]
    sc.sync_known = False
    sc.sync_offset_s = 1e-5
    return sc


def max_rel_err(ja, jf):
    out = {}
    for i in range(ja.shape[-1]):
        denom = max(np.abs(ja[..., i]).max(), np.abs(jf[..., i]).max(), 1e-300)
        out[i] = np.abs(ja[..., i] - jf[..., i]).max() / denom
    return out


def assert_gamma_jacobian(sc, family, tol=1e-5):
    m = ScenarioModel(sc, family=family)
    _, ja = m.mu_jac_gamma()
    _, jf = m.mu_jac_gamma_fd()
    errs = max_rel_err(ja, jf)
    bad = {m.gamma_layout.names[i]: e for i, e in errs.items() if e >= tol}
    assert not bad, bad


class TestMeasurementJacobians:
    def test_local_family_all_paths(self):
        assert_gamma_jacobian(rich_pwm_scenario(), "local")

    def test_global_family_all_paths(self):
        assert_gamma_jacobian(rich_pwm_scenario(), "global")

    def test_partial_gain_model(self):
        sc = rich_pwm_scenario()
        sc.gain_knowledge = "partial"
        assert_gamma_jacobian(sc, "local")

    def test_aosa_thz(self):
        sc = Scenario()
        sc.wave_model = "pwm"
        sc.waveform.n_transmissions = 3
        sc.waveform.n_subcarriers = 4
        sc.ris.enabled = True
        sc.ris.sa_shape = [6, 6]
        sc.ris.profile_mode = "random"
        sc.scatterers = [ScattererConfig(position=[5.0, -5.0, 0.0], coeff=0.7)]
        sc.sync_known = False
        sc.sync_offset_s = 1e-5
        assert_gamma_jacobian(sc, "local")
        assert_gamma_jacobian(sc, "global")

    def test_hybrid_whitened(self):
        sc = pwm_scenario(mimo="hybrid", n_rfc_bs=4, n_rfc_ue=2)
        assert_gamma_jacobian(sc, "local")

    def test_bse_model(self):
        sc = Scenario()
        sc.wave_model = "pwm"
        sc.bse = True
        sc.waveform.bandwidth_hz = 5e9
        sc.waveform.n_transmissions = 2
        sc.waveform.n_subcarriers = 4
        sc.ris.enabled = False
        assert_gamma_jacobian(sc, "local")


def fd_state_jacobian(model, pos_step):
    s0 = model.state_values
    cols = []
    for i, kind in enumerate(model.state_layout.kinds):
        v = abs(s0[i])
        if kind is ParamKind.POSITION:
            h = pos_step
        elif kind is ParamKind.AMPLITUDE:
            h = 1e-6 * max(v, 1e-12)
        elif kind is ParamKind.OFFSET:
            h = 1e-13
        else:
            h = 1e-6
        sp, sm = s0.copy(), s0.copy()
        sp[i] += h
        sm[i] -= h
        cols.append((model.mu_state(sp) - model.mu_state(sm)) / (2 * h))
    return np.stack(cols, axis=-1)


def assert_state_jacobian(sc, family="auto", tol=3e-5):
    m = ScenarioModel(sc, family=family)
    _, ja = m.mu_jac_state()
    jf = fd_state_jacobian(m, pos_step=m.wf.wavelength / 2000)
    errs = max_rel_err(ja, jf)
    bad = {m.state_layout.names[i]: e for i, e in errs.items() if e >= tol}
    assert not bad, bad


class TestStateJacobians:
    def test_pwm_direct_chain(self):
        assert_state_jacobian(rich_pwm_scenario(), family="direct")

    def test_swm_digital_full(self):
        sc = mmwave_preset()
        sc.wave_model = "swm"
        sc.waveform.n_transmissions = 2
        sc.waveform.n_subcarriers = 3
        sc.ue.position = [1.0, 0.3, 0.0]
        sc.ris.enabled = True
        sc.ris.sa_shape = [6, 6]
        sc.ris.position = [0.5, 0.8, 0.0]
        sc.ris.profile_mode = "random"
        sc.scatterers = [ScattererConfig(position=[0.8, -0.6, 0.0], coeff=0.8)]
        sc.sync_known = False
        sc.sync_offset_s = 1e-5
        assert_state_jacobian(sc)

    def test_swm_thz_aosa_full(self):
        sc = Scenario()
        sc.waveform.n_transmissions = 2
        sc.waveform.n_subcarriers = 3
        sc.ue.position = [0.6, 0.1, 0.0]
        sc.ris.enabled = True
        sc.ris.sa_shape = [8, 8]
        sc.ris.position = [0.5, 0.5, 0.1]
        sc.ris.profile_mode = "random"
        sc.scatterers = [ScattererConfig(position=[0.5, -0.4, 0.0], coeff=0.8)]
        sc.sync_known = False
        sc.sync_offset_s = 1e-5
        assert_state_jacobian(sc)

    def test_swm_partial_gains(self):
        sc = Scenario()
        sc.waveform.n_transmissions = 2
        sc.waveform.n_subcarriers = 3
        sc.ue.position = [0.6, 0.1, 0.0]
        sc.gain_knowledge = "partial"
        sc.ris.enabled = False
        assert_state_jacobian(sc)


class TestStateToMeasurementJacobian:
    def test_analytic_vs_fd(self):
        sc = rich_pwm_scenario()
        for fam in ("local", "global"):
            m = ScenarioModel(sc, family=fam)
            ja = m.jac_gamma_state()
            jf = m._jac_gamma_state_fd(m.state_values, m._gamma, 1.0)
            assert np.abs(ja - jf).max() / np.abs(ja).max() < 1e-6

    def test_richardson_step_halving(self):
        # FD at h and h/2 agree to better than 1e-6 relative (smooth mapping)
        sc = rich_pwm_scenario()
        m = ScenarioModel(sc, family="local")
        j1 = m._jac_gamma_state_fd(m.state_values, m._gamma, 1.0)
        j2 = m._jac_gamma_state_fd(m.state_values, m._gamma, 0.5)
        assert np.abs(j1 - j2).max() / np.abs(j1).max() < 1e-6

    def test_delay_gradient_closed_form(self):
        sc = rich_pwm_scenario()
        m = ScenarioModel(sc, family="local")
        jac = m.jac_gamma_state()
        gl = m.gamma_layout
        sl = m.state_layout
        row = gl.index("tau_L")
        t = (m.ue.pose.position - m.bs.pose.position)
        t = t / np.linalg.norm(t)
        for ax, name in enumerate(("x_U", "y_U", "z_U")):
            assert np.isclose(jac[row, sl.index(name)], t[ax] / C, rtol=1e-12)
        assert jac[row, sl.index("B")] == 1.0

    def test_direct_family_identity(self):
        sc = rich_pwm_scenario()
        m = ScenarioModel(sc, family="direct")
        assert np.array_equal(m.jac_gamma_state(), np.eye(len(m.state_layout)))


class TestClosedFormToy:
    def test_scalar_los_delay_information(self):
        # 1 BS antenna, 1 UE antenna, sync, unit pilots: the delay-delay FIM
        # entry is (2/sigma^2) G P rho^2 sum_k c_k^2 (2 pi df_k)^2
        sc = mmwave_preset()
        sc.wave_model = "pwm"
        sc.bs.sa_shape = [1, 1]
        sc.ue.sa_shape = [1, 1]
        sc.orientation_dims = 0
        sc.waveform.n_subcarriers = 2
        sc.waveform.n_transmissions = 3
        sc.ris.enabled = False
        m = ScenarioModel(sc, family="local")
        info = fim_measurement(m)
        wf = m.wf
        rho = m.paths[0].desc.rho
        expected = (
            (2.0 / m.sigma2)
            * wf.n_transmissions
            * wf.power_mw
            * rho**2
            * np.sum(wf.freq_ratios**2 * (2 * np.pi * wf.subcarrier_offsets) ** 2)
        )
        got = info.matrix[info.index("tau_L"), info.index("tau_L")]
        assert np.isclose(got, expected, rtol=1e-10)

    def test_zero_dependence_rows(self):
        # single-antenna UE: the observation does not depend on the UE-side
        # angles, so their FIM rows and columns vanish identically
        sc = mmwave_preset()
        sc.wave_model = "pwm"
        sc.ue.sa_shape = [1, 1]
        sc.orientation_dims = 0
        sc.ris.enabled = False
        sc.waveform.n_subcarriers = 3
        sc.waveform.n_transmissions = 2
        m = ScenarioModel(sc, family="local")
        info = fim_measurement(m)
        for name in ("az_UB", "el_UB"):
            i = info.index(name)
            assert np.allclose(info.matrix[i, :], 0.0, atol=1e-20 * np.abs(info.matrix).max())

    def test_noise_scaling(self):
        sc = pwm_scenario()
        m = ScenarioModel(sc, family="local")
        i1 = fim_measurement(m).matrix
        m.sigma2 *= 4
        i2 = fim_measurement(m).matrix
        assert np.allclose(i2, i1 / 4)

    def test_fd_mode_matches_analytic(self):
        sc = pwm_scenario()
        m = ScenarioModel(sc, family="local")
        ia = fim_measurement(m, mode="analytic").matrix
        inum = fim_measurement(m, mode="fd").matrix
        assert np.abs(ia - inum).max() / np.abs(ia).max() < 1e-4


class TestModelGuards:
    def test_swm_requires_direct(self):
        sc = Scenario()
        sc.wave_model = "swm"
        with pytest.raises(ConfigError):
            ScenarioModel(sc, family="local")

    def test_unknown_family(self):
        with pytest.raises(ConfigError):
            ScenarioModel(pwm_scenario(), family="bogus")

    def test_observe_matches_signal_path(self):
        # the model's generative mu agrees with the standalone channel+signal ops
        from thzloc.channel import los_path
        from thzloc.signal import observe_digital

        sc = pwm_scenario()
        m = ScenarioModel(sc, family="local")
        obs = m.observe(np.random.default_rng(0), noise_scale=0.0)
        _, h = los_path(m.bs, m.ue, m.wf, m.clock_offset, m.absorption)
        ref = observe_digital(h, m.schedule, 0.0, np.random.default_rng(1), m.wf.power_mw)
        assert np.abs(obs.mu - ref.mu).max() / np.abs(ref.mu).max() < 1e-10
