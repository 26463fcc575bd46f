import math

import numpy as np
import pytest
import yaml

from thzloc.errors import ConfigError
from thzloc.scenarios import (
    ResultTable,
    Scenario,
    SweepSpec,
    derive_seed,
    emit_results,
    load_scenario,
    mmwave_preset,
    run_sweep,
    save_scenario,
    scenario_from_dict,
)


class TestDefaults:
    def test_table_defaults(self):
        sc = load_scenario("")
        assert sc.waveform.f_c_hz == 0.3e12
        assert sc.waveform.power_dbm == 10.0
        assert sc.waveform.bandwidth_hz == 100e6
        assert sc.waveform.n_transmissions == 10
        assert sc.waveform.n_subcarriers == 10
        assert sc.waveform.noise_psd_dbm_hz == -173.86
        assert sc.waveform.noise_figure_db == 13.0
        assert sc.bs.position == [0.0, 0.0, 0.0]
        assert sc.ris.position == [5.0, 5.0, 0.0]
        assert sc.ue.position == [10.0, 0.0, 0.0]
        assert np.isclose(sc.ue.orientation[0], 5 * math.pi / 6)
        assert np.isclose(sc.ris.orientation[0], -math.pi / 2)
        assert sc.bs.sa_shape == [4, 4] and sc.bs.ae_shape == [5, 5]
        assert sc.ue.sa_shape == [2, 2] and sc.ue.ae_shape == [5, 5]
        assert sc.ris.sa_shape == [100, 100]
        assert sc.wave_model == "swm"
        assert sc.position_dims == 2 and sc.orientation_dims == 1

    def test_mmwave_preset(self):
        sc = mmwave_preset()
        assert sc.waveform.f_c_hz == 60e9
        assert sc.bs.sa_shape == [4, 4] and sc.bs.ae_shape == [1, 1]
        assert sc.ue.sa_shape == [2, 2]
        assert sc.ris.sa_shape == [20, 20]
        assert sc.mimo == "digital"

    def test_default_half_wavelength_spacing(self):
        sc = Scenario()
        spec = sc.built_bs()
        assert np.isclose(spec.ae_spacing, sc.wavelength / 2)


class TestValidation:
    def test_negative_bandwidth(self):
        with pytest.raises(ConfigError):
            load_scenario({"waveform": {"bandwidth_hz": -1.0}})

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError) as err:
            load_scenario({"waveform": {"bandwith_hz": 1e8}})
        assert "bandwith_hz" in str(err.value)

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError) as err:
            load_scenario({"wavefrm": {}})
        assert "wavefrm" in str(err.value)

    def test_bad_enums(self):
        with pytest.raises(ConfigError):
            load_scenario({"wave_model": "spherical"})
        with pytest.raises(ConfigError):
            load_scenario({"mimo": "analogish"})
        with pytest.raises(ConfigError):
            load_scenario({"schema_version": 99})

    def test_scatterer_coeff_range(self):
        with pytest.raises(ConfigError):
            load_scenario({"scatterers": [{"position": [1, 1, 0], "coeff": 1.5}]})


class TestSerialization:
    def test_round_trip_identity(self, tmp_path):
        sc = Scenario()
        sc.scatterers = [
            scenario_from_dict({"scatterers": [{"position": [5, -5, 0], "coeff": 0.7}]}).scatterers[0]
        ]
        path = tmp_path / "scenario.yaml"
        save_scenario(sc, str(path))
        sc2 = load_scenario(str(path))
        assert sc2.to_dict() == sc.to_dict()

    def test_yaml_text_round_trip(self):
        sc = mmwave_preset()
        text = yaml.safe_dump(sc.to_dict())
        assert load_scenario(text).to_dict() == sc.to_dict()

    def test_overrides(self):
        sc = Scenario()
        sc2 = sc.with_overrides({"waveform.power_dbm": 13.0, "ue.position": [3.0, 1.0, 0.0]})
        assert sc2.waveform.power_dbm == 13.0
        assert sc2.ue.position == [3.0, 1.0, 0.0]
        assert sc.waveform.power_dbm == 10.0  # original untouched

    def test_unknown_override_key(self):
        with pytest.raises(ConfigError) as err:
            Scenario().with_overrides({"waveform.power": 1})
        assert "power" in str(err.value)


class TestSweep:
    def sweep_scenario(self):
        sc = mmwave_preset()
        sc.wave_model = "pwm"
        sc.waveform.n_transmissions = 2
        sc.waveform.n_subcarriers = 3
        sc.ris.enabled = False
        return sc

    def test_single_row(self):
        table = run_sweep(self.sweep_scenario(), SweepSpec("waveform.power_dbm", [10.0]))
        assert len(table.rows) == 1
        assert table.columns[0] == "waveform.power_dbm"
        assert np.isfinite(table.rows[0][2])

    def test_trials_and_values(self):
        table = run_sweep(self.sweep_scenario(), SweepSpec("waveform.power_dbm", [10.0, 13.0], trials=2))
        assert len(table.rows) == 4

    def test_failures_recorded_not_fatal(self):
        sc = self.sweep_scenario()
        sweep = SweepSpec("ue.position", [[10.0, 0.0, 0.0], [0.0, 0.0, 0.0]])  # second is degenerate
        table = run_sweep(sc, sweep)
        assert table.rows[0][-1] == ""
        assert table.rows[1][-1] != ""
        assert math.isnan(table.rows[1][2])

    def test_deterministic(self):
        t1 = run_sweep(self.sweep_scenario(), SweepSpec("waveform.power_dbm", [10.0, 13.0], trials=2))
        t2 = run_sweep(self.sweep_scenario(), SweepSpec("waveform.power_dbm", [10.0, 13.0], trials=2))
        assert emit_results(t1, "csv") == emit_results(t2, "csv")

    def test_empty_values_rejected(self):
        with pytest.raises(ConfigError):
            SweepSpec("waveform.power_dbm", [])

    def test_derive_seed_stable(self):
        assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
        assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)


class TestEmitResults:
    def test_empty_table_header_only(self):
        text = emit_results(ResultTable(columns=["a", "b"], rows=[]), "csv")
        assert text == "a,b\r\n"

    def test_row_count(self):
        table = ResultTable(columns=["a"], rows=[[1.0], [2.0], [float("nan")]])
        text = emit_results(table, "csv")
        assert text.count("\r\n") == 4

    def test_json_round_trip_exact(self):
        import json

        values = [0.1 + 0.2, 1e-300, 123456.789012345678]
        table = ResultTable(columns=["v"], rows=[[v] for v in values])
        parsed = json.loads(emit_results(table, "json"))
        assert [r["v"] for r in parsed] == values

    def test_csv_quoting(self):
        table = ResultTable(columns=["msg"], rows=[['hello, "world"']])
        text = emit_results(table, "csv")
        assert '"hello, ""world"""' in text

    def test_csv_17_digits(self):
        table = ResultTable(columns=["v"], rows=[[1 / 3]])
        text = emit_results(table, "csv")
        assert float(text.splitlines()[1]) == 1 / 3

    def test_write_failure_surfaced(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            emit_results(ResultTable(columns=["a"], rows=[]), "csv", str(tmp_path / "missing" / "f.csv"))
        assert "f.csv" in str(err.value)

    def test_unknown_format(self):
        with pytest.raises(ConfigError):
            emit_results(ResultTable(columns=["a"], rows=[]), "xml")
