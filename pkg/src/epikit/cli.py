"""Command-line pipeline: run simulations, forecasts, and source detection.

The CLI is pure orchestration — every number it prints comes from a library
call that can be reproduced directly in Python with the config embedded in
the report. Reports are canonical JSON on stdout (pipeable, byte-stable
across reruns); the human-readable summary goes to stderr.

Config resolution, in increasing precedence: built-in defaults, then the
JSON config file given with ``--config``, then explicit command-line flags.
``EPIKIT_SEED`` supplies the seed when neither flag nor file sets one.

Exit codes: 0 success, 1 runtime failure, 2 bad usage or config.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from ._validation import ValidationError
from .detect import DETECTORS, evaluate_detector, synthetic_tree_cases
from .forecast import FORECASTERS, WindowSpec, evaluate_forecaster
from .io_data import (
    build_report,
    dumps_canonical,
    generate_toy_dataset,
    load_dataset,
    load_snapshot,
    save_dataset,
    write_report,
)
from .mechanistic import (
    CompartmentParams,
    NetworkSirConfig,
    simulate_network_sir,
    simulate_seir,
    simulate_sir,
    simulate_sis,
)
from .simulate import MobilityConfig, random_graph, simulate_scenario
from .transforms import TransformPipeline, pipeline_from_config
from .types import COMPARTMENTS, EpiDataset, FeaturePanel, SeedPolicy, derive_stream


class CliError(Exception):
    """Invalid usage or config; reported on stderr with exit code 2."""


# ---------------------------------------------------------------------------
# config plumbing


def _load_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"config file {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path}: malformed JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise CliError(f"config file {path}: expected a JSON object")
    return {str(k).replace("-", "_"): v for k, v in obj.items()}


def _effective_config(defaults: dict, args: argparse.Namespace) -> dict:
    """Merge defaults <- config file <- CLI flags (flags win)."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise CliError(
                f"unknown config field {unknown[0]!r}; valid fields: {sorted(defaults)}")
        merged.update(file_cfg)
    supplied = vars(args)
    for key in defaults:
        if supplied.get(key) is not None:
            merged[key] = supplied[key]
    merged["seed"] = _resolve_seed(merged.get("seed"))
    return merged


def _resolve_seed(value) -> int:
    if value is None:
        value = os.environ.get("EPIKIT_SEED", 0)
    try:
        return int(value)
    except (TypeError, ValueError) as exc:
        raise CliError(f"seed must be an integer, got {value!r}") from exc


def _require_count(cfg: dict, field: str) -> int:
    value = cfg[field]
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise CliError(f"{field} must be an integer >= 1, got {value!r}")
    return value


def _emit(report: dict, summary: str, out) -> None:
    sys.stdout.write(dumps_canonical(report))
    print(summary, file=sys.stderr)
    if out:
        write_report(report, out)


# ---------------------------------------------------------------------------
# forecast


FORECAST_DEFAULTS = {
    "data": "toy",
    "model": "ar",
    "lookback": 12,
    "horizon": 3,
    "target_feature": None,
    "model_params": {},
    "transforms": None,
    "seed": None,
    "out": None,
}


def _load_any_dataset(spec: str, seed: int) -> EpiDataset:
    if spec == "toy":
        return generate_toy_dataset(SeedPolicy(seed))
    return load_dataset(spec)


def run_forecast(args: argparse.Namespace) -> int:
    cfg = _effective_config(FORECAST_DEFAULTS, args)

    if cfg["model"] not in FORECASTERS:
        raise CliError(
            f"unknown model {cfg['model']!r}; available models: {sorted(FORECASTERS)}")
    _require_count(cfg, "lookback")
    _require_count(cfg, "horizon")
    if not isinstance(cfg["model_params"], dict):
        raise CliError(f"model_params must be an object, got {cfg['model_params']!r}")
    params = dict(cfg["model_params"])
    if cfg["target_feature"] is not None:
        params["target_feature"] = cfg["target_feature"]
    try:
        spec = WindowSpec(lookback=cfg["lookback"], horizon=cfg["horizon"])
        model = FORECASTERS[cfg["model"]](**params)
        pipeline = (pipeline_from_config(cfg["transforms"])
                    if cfg["transforms"] else TransformPipeline())
    except (ValidationError, TypeError) as exc:
        raise CliError(str(exc)) from exc

    ds = _load_any_dataset(cfg["data"], cfg["seed"])
    ds = pipeline.apply(ds)
    result = evaluate_forecaster(model, ds, spec)

    report = build_report("forecast", cfg["model"], result.as_dict(),
                          _json_config(cfg), cfg["seed"])
    _emit(report,
          f"forecast[{cfg['model']}] {result.n_windows} windows: "
          f"mae={result.mae:.6g} rmse={result.rmse:.6g}",
          cfg["out"])
    return 0


# ---------------------------------------------------------------------------
# detect


DETECT_DEFAULTS = {
    "cases": "synthetic-trees",
    "detector": "rumor",
    "n_cases": 200,
    "n_nodes": 15,
    "n_infected": 10,
    "seed": None,
    "out": None,
}


def _detector_names(choice: str) -> list[str]:
    if choice == "all":
        return sorted(DETECTORS)
    if choice not in DETECTORS:
        raise CliError(
            f"unknown detector {choice!r}; available detectors: "
            f"{sorted(DETECTORS) + ['all']}")
    return [choice]


def run_detect(args: argparse.Namespace) -> int:
    cfg = _effective_config(DETECT_DEFAULTS, args)
    names = _detector_names(cfg["detector"])
    _require_count(cfg, "n_cases")
    _require_count(cfg, "n_nodes")
    _require_count(cfg, "n_infected")

    lines = []
    if cfg["cases"] == "synthetic-trees":
        cases = synthetic_tree_cases(cfg["n_cases"], SeedPolicy(cfg["seed"]),
                                     n_nodes=cfg["n_nodes"],
                                     n_infected=cfg["n_infected"])
        sections = {}
        for name in names:
            result = evaluate_detector(DETECTORS[name], cases).as_dict()
            sections[name] = result
            lines.append(f"detect[{name}] {cfg['n_cases']} cases: "
                         f"top1={result['top1']:.4f} top3={result['top3']:.4f} "
                         f"mean_rank={result['mean_rank']:.2f}")
    else:
        snapshot = load_snapshot(cfg["cases"])
        sections = {}
        for name in names:
            score = DETECTORS[name](snapshot)
            ranking = [[v, float(score.probs[v])] for v in score.top(10)]
            sections[name] = {"ranking": ranking}
            lines.append(f"detect[{name}] top node {ranking[0][0]} "
                         f"(p={ranking[0][1]:.4f})")

    metrics = sections[names[0]] if len(names) == 1 else sections
    report = build_report("detect", cfg["detector"], metrics,
                          _json_config(cfg), cfg["seed"])
    _emit(report, "\n".join(lines), cfg["out"])
    return 0


# ---------------------------------------------------------------------------
# simulate


SIMULATE_DEFAULTS = {
    "sir": {"beta": 0.3, "gamma": 0.1, "n": 1000, "i0": 1, "r0": 0,
            "horizon": 160.0, "dt": 0.1, "seed": None, "out": None,
            "emit_curve": None},
    "sis": {"beta": 0.3, "gamma": 0.1, "n": 1000, "i0": 1,
            "horizon": 160.0, "dt": 0.1, "seed": None, "out": None,
            "emit_curve": None},
    "seir": {"beta": 0.3, "gamma": 0.1, "sigma": 0.2, "n": 1000, "i0": 1,
             "e0": 0, "r0": 0, "horizon": 160.0, "dt": 0.1, "seed": None,
             "out": None, "emit_curve": None},
    "network-sir": {"n": 50, "edge_prob": 0.1, "beta": 0.1, "gamma": 0.05,
                    "dt": 1.0, "i0": 1, "steps": 60, "seed": None,
                    "out": None, "emit_curve": None},
    "scenario": {"n": 47, "beta": 0.02, "gamma": 0.05, "dt": 0.5, "i0": 3,
                 "steps": 119, "seed": None, "out": None, "emit_curve": None},
}


def _curve_rows(header, rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _compartmental_dataset(sim: str, cfg: dict):
    try:
        params = CompartmentParams(beta=cfg["beta"], gamma=cfg["gamma"],
                                   population=cfg["n"],
                                   sigma=cfg.get("sigma", 0.0))
        if sim == "sir":
            traj = simulate_sir(params, cfg["n"] - cfg["i0"] - cfg["r0"],
                                cfg["i0"], cfg["r0"], cfg["horizon"], cfg["dt"])
        elif sim == "sis":
            traj = simulate_sis(params, cfg["n"] - cfg["i0"], cfg["i0"],
                                cfg["horizon"], cfg["dt"])
        else:
            traj = simulate_seir(params,
                                 cfg["n"] - cfg["e0"] - cfg["i0"] - cfg["r0"],
                                 cfg["e0"], cfg["i0"], cfg["r0"],
                                 cfg["horizon"], cfg["dt"])
    except ValidationError as exc:
        raise CliError(str(exc)) from exc

    comps = traj.compartments
    panel = np.stack([traj[c] for c in comps], axis=1)[:, None, :]
    ds = EpiDataset(FeaturePanel(panel))
    metadata = {"kind": sim, "compartments": list(comps),
                "times": traj.times.tolist()}
    curve = (["time", *comps],
             [[repr(float(t)), *[repr(float(traj[c][i])) for c in comps]]
              for i, t in enumerate(traj.times)])
    final = {c: traj.final(c) for c in comps}
    return ds, metadata, curve, final


def _states_dataset(states, static_graph=None, dynamic_graph=None, panel=None):
    if panel is None:
        panel = FeaturePanel((states.states == "I").astype(np.float64)[:, :, None])
    return EpiDataset(panel, states=states, static_graph=static_graph,
                      dynamic_graph=dynamic_graph)


def _states_curve(states):
    present = [c for c in COMPARTMENTS
               if any(states.counts(t)[c] for t in range(states.n_steps))]
    rows = [[t, *[states.counts(t)[c] for c in present]]
            for t in range(states.n_steps)]
    return (["step", *present], rows)


def run_simulate(args: argparse.Namespace) -> int:
    sim = args.simulator
    cfg = _effective_config(SIMULATE_DEFAULTS[sim], args)
    if not cfg["out"]:
        raise CliError("out is required: where to write the dataset file")
    seed = SeedPolicy(cfg["seed"])

    if sim in ("sir", "sis", "seir"):
        ds, metadata, curve, final = _compartmental_dataset(sim, cfg)
    elif sim == "network-sir":
        try:
            graph = random_graph(cfg["n"], cfg["edge_prob"], derive_stream(seed, 0))
            epi = NetworkSirConfig(beta=cfg["beta"], gamma=cfg["gamma"],
                                   dt=cfg["dt"],
                                   initial_infected=frozenset(range(cfg["i0"])))
            _require_count(cfg, "steps")
        except ValidationError as exc:
            raise CliError(str(exc)) from exc
        states = simulate_network_sir(graph, epi, cfg["steps"], derive_stream(seed, 1))
        ds = _states_dataset(states, static_graph=graph)
        metadata = {"kind": sim, "features": ["infected"]}
        curve = _states_curve(states)
        final = states.counts(states.n_steps - 1)
    else:
        try:
            mob = MobilityConfig.random(cfg["n"], derive_stream(seed, 0))
            epi = NetworkSirConfig(beta=cfg["beta"], gamma=cfg["gamma"],
                                   dt=cfg["dt"],
                                   initial_infected=frozenset(range(cfg["i0"])))
            _require_count(cfg, "steps")
        except ValidationError as exc:
            raise CliError(str(exc)) from exc
        dynamic, panel, states = simulate_scenario(mob, epi, cfg["steps"],
                                                   derive_stream(seed, 1))
        ds = _states_dataset(states, dynamic_graph=dynamic, panel=panel)
        metadata = {"kind": sim, "features": ["infected", "new_infections"]}
        curve = _states_curve(states)
        final = states.counts(states.n_steps - 1)

    save_dataset(ds, cfg["out"], metadata=metadata)
    if cfg["emit_curve"]:
        _curve_rows(curve[0], curve[1], cfg["emit_curve"])

    metrics = {"steps": ds.n_steps, "nodes": ds.n_nodes,
               "final": {k: float(v) for k, v in final.items()}}
    report = build_report("simulate", sim, metrics, _json_config(cfg), cfg["seed"])
    _emit(report,
          f"simulate[{sim}] wrote {cfg['out']}: {ds.n_steps} steps, "
          f"final I={final.get('I', 0):.6g}",
          None)
    return 0


# ---------------------------------------------------------------------------
# serve


SERVE_DEFAULTS = {"host": "127.0.0.1", "port": 8000, "seed": None}


def run_serve(args: argparse.Namespace, runner=None) -> int:
    cfg = _effective_config(SERVE_DEFAULTS, args)
    port = cfg["port"]
    if not isinstance(port, int) or isinstance(port, bool) or not 1 <= port <= 65535:
        raise CliError(f"port must be an integer in [1, 65535], got {port!r}")
    from .service import create_app
    app = create_app()
    if runner is None:
        import uvicorn
        runner = uvicorn.run
    print(f"serving on http://{cfg['host']}:{port}", file=sys.stderr)
    runner(app, host=cfg["host"], port=port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# entry point


def _json_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items()}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epikit",
        description="Epidemic simulation, forecasting, and source detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, help="random seed (or EPIKIT_SEED)")
        p.add_argument("--out", help="also write the report/dataset here")

    p = sub.add_parser("forecast", help="train a forecaster and report test error")
    common(p)
    p.add_argument("--data", help="dataset path, or 'toy'")
    p.add_argument("--model", help=f"one of {sorted(FORECASTERS)}")
    p.add_argument("--lookback", type=int, help="input window length")
    p.add_argument("--horizon", type=int, help="steps ahead to predict")
    p.add_argument("--target-feature", type=int, dest="target_feature",
                   help="panel feature channel to forecast")
    p.set_defaults(handler=run_forecast)

    p = sub.add_parser("detect", help="rank likely patient zero")
    common(p)
    p.add_argument("--cases", help="'synthetic-trees' or a snapshot JSON file")
    p.add_argument("--detector", help=f"one of {sorted(DETECTORS) + ['all']}")
    p.add_argument("--n-cases", type=int, dest="n_cases")
    p.add_argument("--n-nodes", type=int, dest="n_nodes")
    p.add_argument("--n-infected", type=int, dest="n_infected")
    p.set_defaults(handler=run_detect)

    p = sub.add_parser("simulate", help="run a simulator and write a dataset file")
    sim_sub = p.add_subparsers(dest="simulator", required=True)
    for sim, defaults in SIMULATE_DEFAULTS.items():
        sp = sim_sub.add_parser(sim)
        common(sp)
        sp.add_argument("--emit-curve", dest="emit_curve",
                        help="also write the aggregate trajectory as CSV")
        for field, value in defaults.items():
            if field in ("seed", "out", "emit_curve"):
                continue
            flag = "--" + field.replace("_", "-")
            kind = float if isinstance(value, float) else int
            sp.add_argument(flag, type=kind, dest=field)
        sp.set_defaults(handler=run_simulate)

    p = sub.add_parser("serve", help="start the live-session HTTP service")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--seed", type=int, help="random seed (or EPIKIT_SEED)")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(handler=run_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
