"""Command-line experiment runner.

``lmpc-lab run`` drives a campaign and writes per-iteration trajectory CSVs,
a JSON summary and a JSON safe-set snapshot; ``lmpc-lab oracle`` compares the
latest campaign against the long-horizon constrained LQR reference;
``lmpc-lab export-plots`` turns a campaign directory into one plot-ready CSV
per figure. Rendering is left to the user's plotting tool of choice.

Exit codes: 0 converged, 1 bad configuration, 2 iteration cap reached,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import ConfigurationError, IterationRecord, Trajectory, iteration_cost
from .lmpc import MODES, CampaignResult, NoFeasibleCandidateError, run_until_convergence
from .oracle import clqr_oracle, deviation_profile
from .safe_set import NonConvergentTrajectoryError, cost_to_go_tails
from .systems import AdaptiveDubinsInstance, ClqrInstance, DubinsInstance, estimation_error_norm

EXIT_CONVERGED = 0
EXIT_BAD_CONFIG = 1
EXIT_ITERATION_CAP = 2
EXIT_NUMERICAL = 3

INSTANCES = {
    "clqr": ClqrInstance,
    "dubins": DubinsInstance,
    "adaptive-dubins": AdaptiveDubinsInstance,
}

STATE_NAMES = {
    "clqr": ("position", "velocity"),
    "dubins": ("z", "y", "v"),
    "adaptive-dubins": ("z", "y", "v", "s_hat", "e"),
}
INPUT_NAMES = {
    "clqr": ("u",),
    "dubins": ("theta", "a"),
    "adaptive-dubins": ("a", "theta", "delta"),
}

CONFIG_FILE = "config.json"
SUMMARY_FILE = "summary.json"
SAFE_SET_FILE = "safe_set.json"
ORACLE_FILE = "oracle.json"
ORACLE_CSV = "oracle_trajectory.csv"
PLOTS_DIR = "plots"


def fmt(value: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(value), ".17g")


# ---------------------------------------------------------------- configuration


def _coerce(name: str, default, value):
    if isinstance(default, bool) or isinstance(value, bool):
        raise ConfigurationError(f"override {name!r}: booleans are not accepted")
    if isinstance(default, int):
        if not isinstance(value, int):
            raise ConfigurationError(f"override {name!r} must be an integer")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ConfigurationError(f"override {name!r} must be a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"override {name!r} must be a list")
        proto = default[0] if default else 0.0
        return tuple(_coerce(name, proto, v) for v in value)
    raise ConfigurationError(f"override {name!r} has an unsupported type")


def _number(d: dict, key: str, default):
    value = d.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{key!r} must be a number")
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    instance: str
    overrides: Dict[str, object] = field(default_factory=dict)
    mode: str = "enumeration"
    gamma: Optional[float] = None
    epsilon: Optional[float] = None
    max_iterations: int = 50
    output_dir: str = "lmpc-out"
    # all algorithms are deterministic; kept so configs can carry one
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        if "instance" not in d:
            raise ConfigurationError("config needs an 'instance' entry")
        name = d["instance"]
        if name not in INSTANCES:
            raise ConfigurationError(f"unknown instance {name!r}; expected one of {sorted(INSTANCES)}")
        mode = d.get("mode", "enumeration")
        if mode not in MODES:
            raise ConfigurationError(f"unknown mode {mode!r}; expected one of {MODES}")
        overrides = d.get("overrides", {}) or {}
        if not isinstance(overrides, dict):
            raise ConfigurationError("'overrides' must be an object")
        defaults = {f.name: f.default for f in dataclasses.fields(INSTANCES[name])}
        checked = {}
        for key, value in overrides.items():
            if key not in defaults:
                raise ConfigurationError(f"instance {name!r} has no constant {key!r}")
            checked[key] = _coerce(key, defaults[key], value)
        cap = d.get("max_iterations", 50)
        if isinstance(cap, bool) or not isinstance(cap, int) or cap < 1:
            raise ConfigurationError("'max_iterations' must be a positive integer")
        seed = d.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigurationError("'seed' must be an integer")
        out = d.get("output_dir", "lmpc-out")
        if not isinstance(out, str) or not out:
            raise ConfigurationError("'output_dir' must be a non-empty string")
        return cls(name, checked, mode, _number(d, "gamma", None), _number(d, "epsilon", None),
                   cap, out, seed)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config: {exc}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc

    def to_dict(self) -> dict:
        overrides = {k: _jsonable(v) for k, v in self.overrides.items()}
        return {"instance": self.instance, "overrides": overrides, "mode": self.mode,
                "gamma": self.gamma, "epsilon": self.epsilon, "max_iterations": self.max_iterations,
                "output_dir": self.output_dir, "seed": self.seed}

    def build_instance(self):
        try:
            return INSTANCES[self.instance](**self.overrides)
        except ConfigurationError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid instance constants: {exc}") from exc

    def build_problem(self, inst):
        kw = dict(mode=self.mode, max_iterations=self.max_iterations)
        if self.gamma is not None:
            kw["gamma"] = float(self.gamma)
        if self.epsilon is not None:
            kw["epsilon"] = float(self.epsilon)
        return inst.problem(**kw)


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


# ---------------------------------------------------------------- campaign files


def trajectory_filename(j: int) -> str:
    return f"trajectory_{j:03d}.csv"


def trajectory_header(n: int, m: int) -> List[str]:
    return ["iteration", "t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)] + \
        ["stage_cost", "cost_to_go"]


def write_trajectory_csv(path: Path, rec: IterationRecord, iteration: Optional[int] = None) -> None:
    traj = rec.trajectory
    X, U, costs = traj.states, traj.inputs, traj.stage_costs
    n, m = X.shape[1], U.shape[1]
    tails = cost_to_go_tails(costs) + [0.0]
    j = rec.iteration if iteration is None else iteration
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(n, m))
        for t in range(len(X)):
            if t < len(U):
                tail = [fmt(u) for u in U[t]] + [fmt(costs[t])]
            else:
                tail = [""] * m + [""]
            w.writerow([j, t] + [fmt(x) for x in X[t]] + tail + [fmt(tails[t])])


@dataclass
class StoredTrajectory:
    iteration: int
    states: np.ndarray
    inputs: np.ndarray
    stage_costs: np.ndarray
    cost_to_go: np.ndarray

    @property
    def cost(self) -> float:
        return iteration_cost(self.stage_costs)


def read_trajectory_csv(path) -> StoredTrajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("x"))
    m = sum(1 for h in header if h.startswith("u"))
    states = np.array([[float(v) for v in r[2:2 + n]] for r in body])
    steps = [r for r in body if r[2 + n + m] != ""]
    inputs = np.array([[float(v) for v in r[2 + n:2 + n + m]] for r in steps]).reshape(len(steps), m)
    costs = np.array([float(r[2 + n + m]) for r in steps])
    ctg = np.array([float(r[3 + n + m]) for r in body])
    return StoredTrajectory(int(body[0][0]), states, inputs, costs, ctg)


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def campaign_summary(cfg: ExperimentConfig, prob, result: CampaignResult) -> dict:
    iterations, size = [], 0
    for rec in result.records:
        size += rec.steps + 1
        iterations.append({"j": rec.iteration, "cost": rec.cost, "steps": rec.steps, "ss_size": size})
    summary = {
        "instance": cfg.instance,
        "mode": prob.mode,
        "iterations": iterations,
        "converged": result.converged,
        "gamma": prob.gamma,
        "epsilon": prob.epsilon,
        "iteration_costs": [r.cost for r in result.records],
        "deviations": list(result.deviations),
    }
    if "e" in STATE_NAMES[cfg.instance]:
        idx = STATE_NAMES[cfg.instance].index("e")
        summary["error_norms"] = [estimation_error_norm(r.trajectory.states, idx) for r in result.records]
    return summary


def safe_set_snapshot(result: CampaignResult) -> dict:
    points = []
    for rec in result.records:
        tails = cost_to_go_tails(rec.trajectory) + [0.0]
        for t, x in enumerate(rec.trajectory.states):
            points.append({"j": rec.iteration, "t": t, "state": [float(v) for v in x], "cost_to_go": tails[t]})
    return {"size": len(points), "points": points}


def write_campaign(out: Path, cfg: ExperimentConfig, prob, result: CampaignResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / CONFIG_FILE, cfg.to_dict())
    for rec in result.records:
        write_trajectory_csv(out / trajectory_filename(rec.iteration), rec)
    _dump_json(out / SUMMARY_FILE, campaign_summary(cfg, prob, result))
    _dump_json(out / SAFE_SET_FILE, safe_set_snapshot(result))


def load_campaign(campaign) -> tuple:
    """Returns ``(config, summary, trajectories)`` with trajectories ordered by iteration."""
    d = Path(campaign)
    try:
        cfg = ExperimentConfig.from_dict(json.loads((d / CONFIG_FILE).read_text()))
        summary = json.loads((d / SUMMARY_FILE).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{d} is not a campaign directory: {exc}") from exc
    trajs = [read_trajectory_csv(d / trajectory_filename(it["j"])) for it in summary["iterations"]]
    return cfg, summary, trajs


# ---------------------------------------------------------------- commands


def cmd_run(config_path, out: Optional[str] = None) -> int:
    cfg = ExperimentConfig.load(config_path)
    inst = cfg.build_instance()
    prob = cfg.build_problem(inst)
    result = run_until_convergence(prob, inst.initial_safe_set())
    target = Path(out if out is not None else cfg.output_dir)
    write_campaign(target, cfg, prob, result)
    costs = ", ".join(fmt(c) for c in result.costs)
    print(f"{cfg.instance}: {len(result.records) - 1} iterations, costs [{costs}], "
          f"converged={result.converged}, written to {target}")
    return EXIT_CONVERGED if result.converged else EXIT_ITERATION_CAP


def cmd_oracle(config_path, campaign) -> int:
    cfg = ExperimentConfig.load(config_path)
    if cfg.instance != "clqr":
        raise ConfigurationError("the reference solution exists only for the clqr instance")
    inst = cfg.build_instance()
    _, summary, trajs = load_campaign(campaign)
    latest = trajs[-1]
    ref = clqr_oracle(inst)
    sigma = deviation_profile(latest.states, ref.states, np.zeros(ref.states.shape[1]))
    cost = inst.cost()
    stage = [cost(ref.states[k], ref.inputs[k]) for k in range(len(ref.inputs))]
    rec = IterationRecord(Trajectory(ref.states, ref.inputs, np.array(stage)), ref.cost, True)
    d = Path(campaign)
    write_trajectory_csv(d / ORACLE_CSV, rec, iteration=-1)
    report = {"oracle_cost": ref.cost, "horizon": ref.horizon, "saturation_gap": ref.saturation_gap,
              "iteration": latest.iteration, "campaign_cost": latest.cost,
              "cost_gap": latest.cost - ref.cost, "max_deviation": max(sigma)}
    _dump_json(d / ORACLE_FILE, report)
    print(f"oracle cost {fmt(ref.cost)}, cost gap {latest.cost - ref.cost:.3e}, "
          f"max deviation {max(sigma):.3e}")
    return EXIT_CONVERGED


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else fmt(v) for v in row])


def cmd_export_plots(campaign) -> int:
    cfg, summary, trajs = load_campaign(campaign)
    names, inputs = STATE_NAMES[cfg.instance], INPUT_NAMES[cfg.instance]
    out = Path(campaign) / PLOTS_DIR
    out.mkdir(exist_ok=True)
    speed = names.index("velocity") if "velocity" in names else names.index("v")

    _write_rows(out / "trajectories.csv", ["iteration", "t", names[0], names[1]],
                ([tr.iteration, t, x[0], x[1]] for tr in trajs for t, x in enumerate(tr.states)))
    _write_rows(out / "inputs.csv", ["iteration", "t", *inputs],
                ([tr.iteration, t, *u] for tr in trajs for t, u in enumerate(tr.inputs)))
    _write_rows(out / "velocity.csv", ["iteration", "t", names[speed]],
                ([tr.iteration, t, x[speed]] for tr in trajs for t, x in enumerate(tr.states)))
    _write_rows(out / "safe_set.csv", ["iteration", "t", *names, "cost_to_go"],
                ([tr.iteration, t, *x, tr.cost_to_go[t]] for tr in trajs for t, x in enumerate(tr.states)))
    written = ["trajectories.csv", "inputs.csv", "velocity.csv", "safe_set.csv"]
    if "error_norms" in summary:
        _write_rows(out / "error_norm.csv", ["iteration", "error_norm"],
                    ([tr.iteration, norm] for tr, norm in zip(trajs, summary["error_norms"])))
        written.append("error_norm.csv")
    print(f"wrote {', '.join(written)} to {out}")
    return EXIT_CONVERGED


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmpc-lab", description="Learning MPC experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a campaign until convergence or the iteration cap")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="output directory (overrides the config)")
    orc = sub.add_parser("oracle", help="compare a clqr campaign with the long-horizon reference")
    orc.add_argument("--config", required=True)
    orc.add_argument("--campaign", required=True)
    exp = sub.add_parser("export-plots", help="write one plot-ready CSV per figure")
    exp.add_argument("--campaign", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out)
        if args.command == "oracle":
            return cmd_oracle(args.config, args.campaign)
        return cmd_export_plots(args.campaign)
    except ConfigurationError as exc:
        print(f"lmpc-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (NoFeasibleCandidateError, NonConvergentTrajectoryError, ArithmeticError,
            np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"lmpc-lab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
