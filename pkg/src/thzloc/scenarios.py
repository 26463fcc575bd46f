"""Declarative scenario configuration, Table-style defaults, sweep running
and result serialization.

A scenario is a plain hierarchical mapping (YAML on disk) validated against
the dataclass schema below; unknown keys are rejected by name.  The default
values reproduce the simulation defaults of the reference setup: a 0.3 THz
AOSA uplink with a 4x4-of-5x5 BS at the origin, a 2x2-of-5x5 UE at
[10, 0, 0] and an optional RIS at [5, 5, 0].
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .arrays import ArraySpec, GainModel, Role
from .channel import AbsorptionModel, ImpairmentConfig, RisProfile, WaveModel, Waveform
from .constants import SPEED_OF_LIGHT as C
from .errors import ConfigError
from .signal import PilotSchedule, noise_variance

__all__ = [
    "ArrayConfig",
    "ResultTable",
    "Scenario",
    "SweepSpec",
    "derive_seed",
    "emit_results",
    "load_scenario",
    "run_sweep",
    "save_scenario",
    "scenario_from_dict",
]

SCHEMA_VERSION = 1


def db_to_pow(db: float) -> float:
    return 10 ** (db / 10)


def derive_seed(master_seed: int, *labels) -> int:
    """Stable per-stream seed from a master seed and string labels."""
    text = ":".join([str(master_seed)] + [str(x) for x in labels])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class GainConfig:
    sector: bool = False
    g0: float = 1.0
    az_hpbw_deg: float = 180.0
    el_hpbw_deg: float = 180.0

    def build(self) -> GainModel:
        if not self.sector:
            return GainModel.omni()
        return GainModel(
            sector=True,
            g0=self.g0,
            az_hpbw=math.radians(self.az_hpbw_deg),
            el_hpbw=math.radians(self.el_hpbw_deg),
        )


@dataclass
class ArrayConfig:
    position: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    orientation: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    sa_shape: list = field(default_factory=lambda: [1, 1])
    ae_shape: list = field(default_factory=lambda: [1, 1])
    ae_spacing: float | None = None  # None -> half carrier wavelength
    sa_spacing: float | None = None  # None -> contiguous SA tiling
    gain: GainConfig = field(default_factory=GainConfig)

    def build(self, role: Role, wavelength: float) -> ArraySpec:
        from .geometry import Pose

        spacing = self.ae_spacing if self.ae_spacing is not None else wavelength / 2
        return ArraySpec(
            role=role,
            pose=Pose(np.asarray(self.position, float), np.asarray(self.orientation, float)),
            sa_shape=tuple(int(v) for v in self.sa_shape),
            ae_shape=tuple(int(v) for v in self.ae_shape),
            ae_spacing=spacing,
            sa_spacing=self.sa_spacing,
            gain=self.gain.build(),
        )


@dataclass
class RisConfig(ArrayConfig):
    enabled: bool = False
    profile_mode: str = "snr_max"  # snr_max | random | uniform
    quant_bits: int | None = None


@dataclass
class WaveformConfig:
    f_c_hz: float = 0.3e12
    bandwidth_hz: float = 100e6
    n_subcarriers: int = 10
    n_transmissions: int = 10
    power_dbm: float = 10.0
    noise_psd_dbm_hz: float = -173.86
    noise_figure_db: float = 13.0
    total_energy_norm: bool = False

    def build(self) -> Waveform:
        if self.bandwidth_hz <= 0:
            raise ConfigError("waveform.bandwidth_hz must be positive")
        return Waveform(
            f_c=self.f_c_hz,
            bandwidth=self.bandwidth_hz,
            n_subcarriers=int(self.n_subcarriers),
            n_transmissions=int(self.n_transmissions),
            power_mw=db_to_pow(self.power_dbm),
            noise_psd_dbm_hz=self.noise_psd_dbm_hz,
            noise_figure_db=self.noise_figure_db,
            total_energy_norm=self.total_energy_norm,
        )


@dataclass
class ScattererConfig:
    position: list = field(default_factory=lambda: [5.0, -5.0, 0.0])
    coeff: float = 0.7


@dataclass
class BeamConfig:
    """AOSA per-SA beam policy: random draws per transmission, or a fixed
    prior-informed split with b_r beams aimed at the RIS and the rest at
    the other end of the link."""

    mode: str = "random"  # random | split | split_bs (UE side stays random)
    b_r: int = 0


@dataclass
class ImpairmentSettings:
    tx_impair: float = 0.0
    rx_impair: float = 0.0
    phase_noise_std: float = 0.0
    ps_quant_bits: int | None = None
    ris_quant_bits: int | None = None
    adc_bits: int | None = None

    def build(self) -> ImpairmentConfig:
        return ImpairmentConfig(
            tx_impair=self.tx_impair,
            rx_impair=self.rx_impair,
            phase_noise_std=self.phase_noise_std,
            ps_quant_bits=self.ps_quant_bits,
            ris_quant_bits=self.ris_quant_bits,
            adc_bits=self.adc_bits,
        )


@dataclass
class Scenario:
    schema_version: int = SCHEMA_VERSION
    name: str = "default"
    waveform: WaveformConfig = field(default_factory=WaveformConfig)
    bs: ArrayConfig = field(
        default_factory=lambda: ArrayConfig(
            position=[0.0, 0.0, 0.0], orientation=[0.0, 0.0, 0.0], sa_shape=[4, 4], ae_shape=[5, 5]
        )
    )
    ue: ArrayConfig = field(
        default_factory=lambda: ArrayConfig(
            position=[10.0, 0.0, 0.0],
            orientation=[5 * math.pi / 6, 0.0, 0.0],
            sa_shape=[2, 2],
            ae_shape=[5, 5],
        )
    )
    ris: RisConfig = field(
        default_factory=lambda: RisConfig(
            position=[5.0, 5.0, 0.0],
            orientation=[-math.pi / 2, 0.0, 0.0],
            sa_shape=[100, 100],
            ae_shape=[1, 1],
            enabled=False,
        )
    )
    scatterers: list = field(default_factory=list)
    wave_model: str = "swm"  # swm | pwm
    mimo: str = "aosa"  # aosa | digital | hybrid
    # Per-element power model for AOSA chains: each RF chain drives its SA's
    # elements at full per-element power, so radiated/collected power grows
    # with the SA size.  False gives the power-conserving split instead.
    per_element_power: bool = True
    beams: BeamConfig = field(default_factory=BeamConfig)
    n_rfc_bs: int = 1  # hybrid mode only
    n_rfc_ue: int = 1
    sync_offset_s: float = 0.0
    sync_known: bool = True
    gain_knowledge: str = "unknown"  # unknown | partial
    position_dims: int = 2
    orientation_dims: int = 1
    bse: bool = False
    absorption_k_abs: float = 0.0
    impairments: ImpairmentSettings = field(default_factory=ImpairmentSettings)
    seed: int = 1

    def __post_init__(self):
        self.validate()

    # -- validation ---------------------------------------------------
    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {self.schema_version}")
        if self.wave_model not in ("swm", "pwm"):
            raise ConfigError(f"wave_model: unknown value {self.wave_model!r}")
        if self.mimo not in ("aosa", "digital", "hybrid"):
            raise ConfigError(f"mimo: unknown value {self.mimo!r}")
        if self.beams.mode not in ("random", "split", "split_bs"):
            raise ConfigError(f"beams.mode: unknown value {self.beams.mode!r}")
        if self.gain_knowledge not in ("unknown", "partial"):
            raise ConfigError(f"gain_knowledge: unknown value {self.gain_knowledge!r}")
        if self.position_dims not in (2, 3):
            raise ConfigError("position_dims must be 2 or 3")
        if self.orientation_dims not in (0, 1, 3):
            raise ConfigError("orientation_dims must be 0, 1 or 3")
        if self.ris.profile_mode not in ("snr_max", "random", "uniform"):
            raise ConfigError(f"ris.profile_mode: unknown value {self.ris.profile_mode!r}")
        if self.absorption_k_abs < 0:
            raise ConfigError("absorption_k_abs must be non-negative")
        if self.sync_offset_s < 0:
            raise ConfigError("sync_offset_s must be non-negative")
        for sc in self.scatterers:
            if not 0 <= sc.coeff <= 1:
                raise ConfigError("scatterers.coeff must lie in [0, 1]")
        self.waveform.build()  # raises on bad waveform numbers

    # -- built objects ------------------------------------------------
    def built_waveform(self) -> Waveform:
        return self.waveform.build()

    @property
    def wavelength(self) -> float:
        return C / self.waveform.f_c_hz

    def built_bs(self) -> ArraySpec:
        return self.bs.build(Role.BS, self.wavelength)

    def built_ue(self) -> ArraySpec:
        return self.ue.build(Role.UE, self.wavelength)

    def built_ris(self) -> ArraySpec | None:
        if not self.ris.enabled:
            return None
        return self.ris.build(Role.RIS, self.wavelength)

    def built_absorption(self) -> AbsorptionModel:
        return AbsorptionModel(self.absorption_k_abs)

    def built_wave_model(self) -> WaveModel:
        return WaveModel.SWM if self.wave_model == "swm" else WaveModel.PWM

    def scatterer_list(self) -> list[tuple[np.ndarray, float]]:
        return [(np.asarray(s.position, float), float(s.coeff)) for s in self.scatterers]

    def noise_var(self) -> float:
        return noise_variance(self.built_waveform())

    def built_ris_profile(self, rng: np.random.Generator) -> RisProfile | None:
        ris = self.built_ris()
        if ris is None:
            return None
        if self.ris.profile_mode == "random":
            profile = RisProfile.random(ris.n_sa, rng)
        elif self.ris.profile_mode == "uniform":
            profile = RisProfile.uniform(ris.n_sa)
        else:  # snr_max toward the true UE position
            from .optimize import ris_snr_max

            profile = ris_snr_max(ris, self.built_bs().pose.position, self.built_ue().pose.position, self.waveform.f_c_hz)
        if self.ris.quant_bits is not None:
            from .optimize import quantize_profile

            profile = quantize_profile(profile, self.ris.quant_bits)
        return profile

    def built_schedule(self, rng: np.random.Generator) -> PilotSchedule:
        wf = self.built_waveform()
        bs = self.built_bs()
        ue = self.built_ue()
        n_tx = self.n_rfc_ue if self.mimo == "hybrid" else ue.n_sa
        schedule = PilotSchedule.random(
            wf.n_transmissions, wf.n_subcarriers, n_tx, rng, total_energy_norm=wf.total_energy_norm
        )
        if self.mimo == "aosa":
            if self.beams.mode == "random":
                schedule.beams_bs = PilotSchedule.random_beams(wf.n_transmissions, bs.n_sa, rng)
                schedule.beams_ue = PilotSchedule.random_beams(wf.n_transmissions, ue.n_sa, rng)
            else:
                schedule.beams_bs = np.tile(self._split_beams(bs, b_r=self.beams.b_r), (wf.n_transmissions, 1, 1))
                if self.beams.mode == "split_bs":
                    schedule.beams_ue = PilotSchedule.random_beams(wf.n_transmissions, ue.n_sa, rng)
                else:
                    b_r_ue = int(round(self.beams.b_r * ue.n_sa / bs.n_sa))
                    schedule.beams_ue = np.tile(self._split_beams(ue, b_r=b_r_ue), (wf.n_transmissions, 1, 1))
        return schedule

    def _split_beams(self, spec: ArraySpec, b_r: int) -> np.ndarray:
        """Fixed prior-informed beams: the first b_r SAs aim at the RIS, the
        rest at the far end of the link (UE seen from BS, BS seen from UE)."""
        from .geometry import angles_from_direction

        target_far = self.ue.position if spec.role is Role.BS else self.bs.position
        beams = np.zeros((spec.n_sa, 2))
        R = spec.pose.rotation

        def local_angles(target):
            t = np.asarray(target, float) - spec.pose.position
            t = t / np.linalg.norm(t)
            ang = angles_from_direction(R.T @ t)
            return [ang.azimuth, ang.elevation]

        far = local_angles(target_far)
        ris = local_angles(self.ris.position) if self.ris.enabled else far
        for i in range(spec.n_sa):
            beams[i] = ris if i < b_r else far
        return beams

    # -- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        return _to_plain(dataclasses.asdict(self))

    def copy(self) -> "Scenario":
        return scenario_from_dict(self.to_dict())

    def with_overrides(self, overrides: dict) -> "Scenario":
        """Apply dotted-key overrides (e.g. {"waveform.power_dbm": 13})."""
        data = self.to_dict()
        for key, value in overrides.items():
            _set_dotted(data, key, value)
        return scenario_from_dict(data)


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _set_dotted(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown override key {key!r} (at {part!r})")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown override key {key!r} (at {leaf!r})")
    node[leaf] = value


_NESTED = {
    "waveform": WaveformConfig,
    "bs": ArrayConfig,
    "ue": ArrayConfig,
    "ris": RisConfig,
    "beams": BeamConfig,
    "impairments": ImpairmentSettings,
}


def _build_dataclass(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or cls.__name__}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {path + '.' if path else ''}{key}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        sub = path + "." + f.name if path else f.name
        if f.name == "gain" and isinstance(value, dict):
            value = _build_dataclass(GainConfig, value, sub)
        elif f.name == "scatterers":
            value = [_build_dataclass(ScattererConfig, v, f"{sub}[{i}]") for i, v in enumerate(value)]
        elif cls is Scenario and f.name in _NESTED and isinstance(value, dict):
            value = _build_dataclass(_NESTED[f.name], value, sub)
        kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}") from exc


def scenario_from_dict(data: dict) -> Scenario:
    return _build_dataclass(Scenario, data, "")


def load_scenario(source) -> Scenario:
    """Load and validate a scenario from YAML text, a path, or a mapping.

    An empty document yields the full default scenario.
    """
    if isinstance(source, dict):
        data = source
    else:
        text = source
        if hasattr(source, "read"):
            text = source.read()
        elif isinstance(source, str) and "\n" not in source and source.endswith((".yaml", ".yml", ".json", ".cfg")):
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
        data = yaml.safe_load(text) if text else None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("scenario config must be a mapping")
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario.to_dict(), fh, sort_keys=False)


def mmwave_preset() -> Scenario:
    """60 GHz fully digital benchmark: 4x4 BS, 2x2 UE, 20x20 RIS."""
    sc = Scenario(name="mmwave")
    sc.waveform.f_c_hz = 60e9
    sc.bs.sa_shape = [4, 4]
    sc.bs.ae_shape = [1, 1]
    sc.ue.sa_shape = [2, 2]
    sc.ue.ae_shape = [1, 1]
    sc.ris.sa_shape = [20, 20]
    sc.mimo = "digital"
    return sc


# ---------------------------------------------------------------------------
# Sweeps and result tables
# ---------------------------------------------------------------------------


@dataclass
class SweepSpec:
    """One swept dotted parameter, the metric list to record per row and the
    number of Monte-Carlo trials (fresh derived seed per trial)."""

    parameter: str
    values: list
    metrics: list = field(default_factory=lambda: ["peb"])
    trials: int = 1

    def __post_init__(self):
        if not self.values:
            raise ConfigError("sweep needs a non-empty value list")
        if self.trials < 1:
            raise ConfigError("sweep trials must be >= 1")


@dataclass
class ResultTable:
    columns: list
    rows: list  # list of lists, aligned with columns

    def column(self, name: str) -> list:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]


def run_sweep(scenario: Scenario, sweep: SweepSpec, master_seed: int | None = None) -> ResultTable:
    """Evaluate the requested metrics for every (sweep value, trial) pair.

    Rows failing with a numerical error are recorded with NaN metrics and the
    error message; remaining rows still run.
    """
    from . import fim

    seed0 = scenario.seed if master_seed is None else master_seed
    columns = [sweep.parameter, "trial"] + list(sweep.metrics) + ["error"]
    rows = []
    for vi, value in enumerate(sweep.values):
        for trial in range(sweep.trials):
            sc = scenario.with_overrides({sweep.parameter: value})
            sc.seed = derive_seed(seed0, sweep.parameter, vi, trial)
            row = [value, trial]
            try:
                metrics = fim.scenario_metrics(sc, sweep.metrics)
                row += [metrics[m] for m in sweep.metrics]
                row.append("")
            except Exception as exc:  # noqa: BLE001 - per-row failure policy
                row += [float("nan")] * len(sweep.metrics)
                row.append(f"{type(exc).__name__}: {exc}")
            rows.append(row)
    return ResultTable(columns=columns, rows=rows)


def _format_value(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v) if not v.is_integer() or abs(v) > 1e16 else f"{v:.17g}"
    return str(v)


def _csv_quote(text: str) -> str:
    if any(ch in text for ch in ',"\n\r'):
        return '"' + text.replace('"', '""') + '"'
    return text


def emit_results(table: ResultTable, fmt: str, path: str | None = None) -> str:
    """Serialize a result table as CSV (RFC-4180-style quoting) or JSON, with
    floats at 17 significant digits; returns the text, optionally writing it."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}")
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(",".join(_csv_quote(str(c)) for c in table.columns) + "\r\n")
        for row in table.rows:
            buf.write(",".join(_csv_quote(_format_value(v)) for v in row) + "\r\n")
        text = buf.getvalue()
    else:
        records = [dict(zip(table.columns, row)) for row in table.rows]
        text = json.dumps(records, indent=1, default=float)
    if path is not None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigError(f"cannot write results to {path}: {exc}") from exc
    return text
