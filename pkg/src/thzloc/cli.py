"""Command-line entry point.

Subcommands: bound (PEB/OEB for a scenario), estimate (Monte-Carlo
estimator trials against the bound), optimize (named optimizer runs),
reproduce (bundled figure presets to CSV/JSON) and validate (config check).

Data goes to stdout or the output file; progress and log messages go to
stderr.  Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import yaml

from .errors import ConfigError, NumericalError, ThzLocError
from .scenarios import ResultTable, Scenario, derive_seed, emit_results, load_scenario

CONFIG_DIR_ENV = "THZLOC_CONFIG_DIR"


def _log(msg: str):
    print(msg, file=sys.stderr)


def _resolve_scenario(path: str | None, overrides) -> Scenario:
    if path is None:
        scenario = Scenario()
    else:
        candidate = path
        if not os.path.exists(candidate):
            base = os.environ.get(CONFIG_DIR_ENV)
            if base and os.path.exists(os.path.join(base, path)):
                candidate = os.path.join(base, path)
            else:
                raise ConfigError(f"scenario file not found: {path}")
        with open(candidate, "r", encoding="utf-8") as fh:
            scenario = load_scenario(fh.read())
    if overrides:
        parsed = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, raw = item.split("=", 1)
            parsed[key] = yaml.safe_load(raw)
        scenario = scenario.with_overrides(parsed)
    return scenario


def _emit(table: ResultTable, args) -> None:
    text = emit_results(table, args.format, args.output)
    if args.output is None:
        sys.stdout.write(text)
    else:
        _log(f"wrote {args.output}")


def _cmd_bound(args) -> int:
    from .fim import ScenarioModel, crb_from_fim, fim_state

    scenario = _resolve_scenario(args.scenario, args.set)
    if args.seed is not None:
        scenario.seed = args.seed
    model = ScenarioModel(scenario)
    crb = crb_from_fim(fim_state(model, route="direct"))
    rows = [[k, float(v)] for k, v in sorted(crb.derived.items()) if isinstance(v, float)]
    _emit(ResultTable(columns=["metric", "value"], rows=rows), args)
    return 0


def _cmd_estimate(args) -> int:
    from .fim import ScenarioModel, crb_from_fim, fim_state
    from .estimators import SearchConfig, direct_mle, estimate_channel_params, multistage_solve

    scenario = _resolve_scenario(args.scenario, args.set)
    if args.seed is not None:
        scenario.seed = args.seed
    model = ScenarioModel(scenario, family="local" if scenario.wave_model == "pwm" else "auto")
    peb = crb_from_fim(fim_state(model, route="direct")).derived["peb"]
    truth = model.ue.pose.position
    n_paths = len(model.paths)
    errs_ms, errs_dm = [], []
    for trial in range(args.trials):
        rng = np.random.default_rng(derive_seed(scenario.seed, "estimate", trial))
        obs = model.observe(rng)
        est = estimate_channel_params(obs, model, n_paths=n_paths)
        gamma_hat, cov = _map_stage1(model, est)
        res = multistage_solve(gamma_hat, cov, model)
        p = np.array([res.estimate.get("x_U", truth[0]), res.estimate.get("y_U", truth[1])])
        errs_ms.append(float(np.hypot(p[0] - truth[0], p[1] - truth[1])))
        if args.direct:
            dm = direct_mle(obs, model, SearchConfig(grid_points=args.grid))
            errs_dm.append(float(np.hypot(dm.estimate["x_U"] - truth[0], dm.estimate["y_U"] - truth[1])))
        _log(f"trial {trial + 1}/{args.trials} done")
    rows = [["peb_m", peb], ["rmse_multistage_m", float(np.sqrt(np.mean(np.square(errs_ms))))]]
    if errs_dm:
        rows.append(["rmse_direct_m", float(np.sqrt(np.mean(np.square(errs_dm))))])
    rows.append(["trials", args.trials])
    _emit(ResultTable(columns=["metric", "value"], rows=rows), args)
    return 0


def _map_stage1(model, est) -> tuple[dict, np.ndarray]:
    """Associate generic stage-1 paths (ordered by delay) with the model's
    paths and rename entries into the model's measurement labels."""
    order = np.argsort([p.desc.tau for p in model.paths])
    gamma_hat = {}
    picked = []
    for rank, pi in enumerate(order, start=1):
        key = model.paths[pi].key
        if key == "L":
            names = [f"tau_{rank}", f"az_{rank}", f"el_{rank}"]
            gamma_hat["tau_L"] = est["paths"][rank - 1]["delay"]
            gamma_hat["az_BU"] = est["paths"][rank - 1]["azimuth"]
            gamma_hat["el_BU"] = est["paths"][rank - 1]["elevation"]
        elif key.startswith("N"):
            names = [f"tau_{rank}", f"az_{rank}", f"el_{rank}"]
            gamma_hat[f"tau_{key}"] = est["paths"][rank - 1]["delay"]
            gamma_hat[f"az_B{key}"] = est["paths"][rank - 1]["azimuth"]
            gamma_hat[f"el_B{key}"] = est["paths"][rank - 1]["elevation"]
        else:  # RIS path: only the delay constrains the geometry
            names = [f"tau_{rank}"]
            gamma_hat[f"tau_{key}"] = est["paths"][rank - 1]["delay"]
        picked.extend(names)
    idx = [est["covariance_names"].index(n) for n in picked]
    cov = est["covariance"][np.ix_(idx, idx)]
    return gamma_hat, cov


def _cmd_optimize(args) -> int:
    from .optimize import beam_assignment_search, ris_minmax_peb, ris_snr_max

    scenario = _resolve_scenario(args.scenario, args.set)
    if args.seed is not None:
        scenario.seed = args.seed
    if args.name == "beam_assignment":
        assignment, curve = beam_assignment_search(scenario)
        rows = [[b, p] for b, p in curve]
        _log(f"best split: b_r={assignment.b_r} of {assignment.n_sa}")
        _emit(ResultTable(columns=["b_r", "peb_m"], rows=rows), args)
    elif args.name == "snr_max":
        ris = scenario.built_ris()
        if ris is None:
            raise ConfigError("snr_max optimization needs scenario.ris.enabled = true")
        profile = ris_snr_max(ris, scenario.bs.position, scenario.ue.position, scenario.waveform.f_c_hz)
        rows = [[i, float(a), float(p)] for i, (a, p) in enumerate(zip(profile.amplitudes, profile.phases))]
        _emit(ResultTable(columns=["element", "amplitude", "phase_rad"], rows=rows), args)
    elif args.name == "minmax":
        region = [np.asarray(scenario.ue.position, dtype=float) + np.array(d) for d in ([0, 0, 0], [0.05, 0, 0], [-0.05, 0, 0], [0, 0.05, 0], [0, -0.05, 0])]
        report = ris_minmax_peb(scenario, region, max_iterations=args.iterations)
        rows = [[i, p] for i, p in enumerate(report["per_point_peb"])]
        rows.append(["worst_case", report["worst_case_peb"]])
        _emit(ResultTable(columns=["region_point", "peb_m"], rows=rows), args)
    else:
        raise ConfigError(f"unknown optimizer {args.name!r}")
    return 0


def _cmd_reproduce(args) -> int:
    from .presets import run_preset

    _log(f"running preset {args.preset} (seed {args.seed}, full={args.full})")
    table = run_preset(args.preset, seed=args.seed, full=args.full)
    _emit(table, args)
    return 0


def _cmd_validate(args) -> int:
    _resolve_scenario(args.scenario, args.set)
    _log("configuration OK")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thzloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=False):
        p.add_argument("--scenario", required=scenario_required, default=None, help="scenario YAML path")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted-key override")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("-o", "--output", default=None, help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p_bound = sub.add_parser("bound", help="print PEB/OEB and related bounds for a scenario")
    common(p_bound)
    p_bound.set_defaults(func=_cmd_bound)

    p_est = sub.add_parser("estimate", help="Monte-Carlo estimator trials vs. the bound")
    common(p_est)
    p_est.add_argument("--trials", type=int, default=20)
    p_est.add_argument("--direct", action="store_true", help="also run the direct MLE")
    p_est.add_argument("--grid", type=int, default=15, help="coarse grid points per axis for the direct MLE")
    p_est.set_defaults(func=_cmd_estimate)

    p_opt = sub.add_parser("optimize", help="run a named optimizer")
    common(p_opt)
    p_opt.add_argument("--name", required=True, choices=("beam_assignment", "snr_max", "minmax"))
    p_opt.add_argument("--iterations", type=int, default=50)
    p_opt.set_defaults(func=_cmd_optimize)

    p_rep = sub.add_parser("reproduce", help="run a bundled figure preset")
    p_rep.add_argument("preset", help="fig6 .. fig12")
    p_rep.add_argument("--seed", type=int, default=1)
    p_rep.add_argument("--full", action="store_true", help="paper-scale grids and trial counts")
    p_rep.add_argument("-o", "--output", default=None)
    p_rep.add_argument("--format", choices=("csv", "json"), default="csv")
    p_rep.add_argument("--parallel", type=int, default=None, help="worker bound (rows are independent)")
    p_rep.set_defaults(func=_cmd_reproduce)

    p_val = sub.add_parser("validate", help="check a scenario config without running")
    common(p_val)
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"configuration error: {exc}")
        return 2
    except (NumericalError, ThzLocError) as exc:
        _log(f"numerical failure: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
