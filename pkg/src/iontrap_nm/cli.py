"""``iontrap-nm`` command-line front end.

Configs are JSON documents (schema in the README).  A run is assembled from,
in order: the built-in defaults, an optional ``--preset``, an optional
``--config`` file, ``--set key=value`` overrides (dotted paths, list indices
as integers, values parsed as JSON when possible) and the convenience flags.
The fully resolved document is written next to the data as ``config.json``;
feeding it back with ``--config`` reproduces the data files byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from .dynamics import FRAMES, STEP_BOUND, InitialCondition, TimeGrid, evolve_qubit, to_lab_frame
from .errors import IntegrationError
from .hilbert import ModeSpec, ModelParams
from .nmeasure import nm_for_pair, nm_maximized
from .noise import ShotConfig, sample_trajectory
from .sweep import KINDS, Axis, SweepGrid, default_workers, ridge_points, run_sweep, timestamp

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

PRESETS = ("fig2", "fig3a", "fig3b", "fig3c", "fig3d", "fig4", "fig5", "figS1", "figS2", "figS3")

DEFAULT_CONFIG = {
    "model": {
        "rabi_mhz": 2.245,
        "detuning_mhz": 0.0,
        "modes": [
            {"frequency_mhz": 2.32, "lamb_dicke": 0.069, "fock_dim": 15, "nbar": 0.05},
            {"frequency_mhz": 3.16, "lamb_dicke": 0.072, "fock_dim": 15, "nbar": 0.05},
        ],
        "gamma_plus_mhz": 0.0049,
        "gamma_minus_mhz": 0.0008,
        "laser_phase": 0.0,
        "gamma_units": "per_us",
        "coupling": "product",
    },
    "grid": {"t_start": 0.0, "t_end": 100.0, "n_points": 201},
    "initial": {"pair": ["plus_x", "minus_x"], "motional": None, "preparation": "ideal"},
    "frame": "lab",
    "lab_transform": True,
    "step_bound": STEP_BOUND,
    "shots": None,
    "maximize": None,
    "sweep": None,
    "format": "csv",
}

_TOP_KEYS = set(DEFAULT_CONFIG) | {"output_dir"}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


@dataclasses.dataclass
class RunConfig:
    model: ModelParams
    grid: TimeGrid
    pair: tuple
    motional: tuple | None
    preparation: str
    frame: str
    lab_transform: bool
    step_bound: float
    shots: ShotConfig | None
    maximize: dict | None
    sweep: dict | None
    format: str
    raw: dict

    def initial_pair(self) -> tuple[InitialCondition, InitialCondition]:
        q1, q2 = self.pair
        ic1 = InitialCondition(q1, self.motional, self.preparation)
        if q2 is None:
            return ic1, ic1.antipode()
        return ic1, InitialCondition(q2, self.motional, self.preparation)


# ---------------------------------------------------------------------------
# config assembly


def preset_path(name: str):
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("iontrap_nm") / "presets" / f"{name}.json"


def load_json(text: str, source: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("", f"{source}: top level must be a JSON object")
    return doc


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply one ``a.b.0.c=value`` override in place."""
    if "=" not in assignment:
        raise ConfigError("--set", f"expected key=value, got {assignment!r}")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        where = ".".join(parts[: i + 1])
        if isinstance(node, list):
            try:
                idx = int(part)
                node[idx]
            except (ValueError, IndexError):
                raise ConfigError(where, "list index out of range or not an integer") from None
            if last:
                node[idx] = _parse_value(text)
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if last:
                node[part] = _parse_value(text)
            else:
                if node.get(part) is None:
                    node[part] = {}
                node = node[part]
        else:
            raise ConfigError(where, "cannot descend into a scalar")


def _build(cls, d, path: str):
    """Instantiate a config dataclass reporting missing/unknown fields by name."""
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for k in d:
        if k not in fields:
            raise ConfigError(f"{path}.{k}", "unknown field")
    for name, f in fields.items():
        required = f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
        if required and name not in d:
            raise ConfigError(f"{path}.{name}", "required field missing")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _build_model(d) -> ModelParams:
    if not isinstance(d, dict):
        raise ConfigError("model", "expected an object")
    modes = d.get("modes")
    if not isinstance(modes, list) or not modes:
        raise ConfigError("model.modes", "required list of one or two modes")
    built = tuple(_build(ModeSpec, m, f"model.modes[{i}]") for i, m in enumerate(modes))
    return _build(ModelParams, {**d, "modes": built}, "model")


def build_run_config(cfg: dict) -> RunConfig:
    for k in cfg:
        if k not in _TOP_KEYS:
            raise ConfigError(k, "unknown field")
    model = _build_model(cfg.get("model"))
    grid = _build(TimeGrid, cfg.get("grid", {}), "grid")
    init = cfg.get("initial") or {}
    for k in init:
        if k not in ("pair", "motional", "preparation"):
            raise ConfigError(f"initial.{k}", "unknown field")
    pair = init.get("pair", ["plus_x", "minus_x"])
    if not isinstance(pair, list) or len(pair) != 2:
        raise ConfigError("initial.pair", "expected [state, state] (second may be null for the antipode)")
    pair = tuple(tuple(q) if isinstance(q, list) else q for q in pair)
    motional = init.get("motional")
    preparation = init.get("preparation", "ideal")
    try:
        ic = InitialCondition(pair[0], motional, preparation)
        if pair[1] is not None:
            InitialCondition(pair[1], motional, preparation)
    except (TypeError, ValueError) as exc:
        raise ConfigError("initial", str(exc)) from None
    if ic.motional is not None and len(ic.motional) != len(model.modes):
        raise ConfigError("initial.motional", "one motional state per mode is required")
    frame = cfg.get("frame", "lab")
    if frame not in FRAMES:
        raise ConfigError("frame", f"must be one of {FRAMES}")
    step_bound = cfg.get("step_bound", STEP_BOUND)
    if not isinstance(step_bound, (int, float)) or not step_bound > 0:
        raise ConfigError("step_bound", "must be a positive number")
    shots = cfg.get("shots")
    shots = None if shots is None else _build(ShotConfig, shots, "shots")
    maximize = cfg.get("maximize")
    if maximize is not None:
        for k in maximize:
            if k not in ("theta_steps", "phi_steps"):
                raise ConfigError(f"maximize.{k}", "unknown field")
    sweep = cfg.get("sweep")
    if sweep is not None:
        kind = sweep.get("kind")
        if kind not in KINDS:
            raise ConfigError("sweep.kind", f"must be one of {KINDS}")
        axes = sweep.get("axes")
        if not isinstance(axes, list) or not axes:
            raise ConfigError("sweep.axes", "required list of axes")
        for i, a in enumerate(axes):
            try:
                Axis.from_dict(a)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"sweep.axes[{i}]", str(exc)) from None
    fmt = cfg.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("format", "must be 'csv' or 'json'")
    return RunConfig(model, grid, pair, ic.motional, preparation, frame,
                     bool(cfg.get("lab_transform", True)), float(step_bound), shots, maximize,
                     sweep, fmt, cfg)


def assemble_config(preset=None, config=None, overrides=(), seed=None, shots=None,
                    maximize=False, out=None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if preset:
        cfg = deep_merge(cfg, load_json(preset_path(preset).read_text(), f"preset {preset}"))
    if config:
        path = Path(config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
        cfg = deep_merge(cfg, load_json(text, str(path)))
    for o in overrides:
        apply_override(cfg, o)
    if shots is not None:
        cfg["shots"] = {**(cfg.get("shots") or {"seed": 0}), "n_cycles": shots}
    if seed is not None:
        if cfg.get("shots") is not None:
            cfg["shots"]["seed"] = seed
        else:
            cfg["seed"] = seed
    if maximize and cfg.get("maximize") is None:
        cfg["maximize"] = {"theta_steps": 11, "phi_steps": 12}
    if out is not None:
        cfg["output_dir"] = str(out)
    cfg.pop("seed", None)
    return cfg


# ---------------------------------------------------------------------------
# commands


def _write_echo(out: Path, raw: dict) -> None:
    echo = {k: v for k, v in raw.items() if k != "output_dir"}
    with open(out / "config.json", "w") as fh:
        json.dump(echo, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_table_json(path: Path, columns: list[str], rows) -> None:
    with open(path, "w") as fh:
        json.dump({"columns": columns, "rows": [[float(x) for x in r] for r in rows]}, fh)
        fh.write("\n")


def _write_trajectory(traj, path: Path, fmt: str) -> None:
    if fmt == "csv":
        traj.to_csv(path.with_suffix(".csv"), with_errors=traj.bloch_err is not None)
        return
    cols = ["t_us", "sx", "sy", "sz"]
    data = [traj.times, *traj.bloch.T]
    if traj.bloch_err is not None:
        cols += ["sx_err", "sy_err", "sz_err"]
        data += list(traj.bloch_err.T)
    _write_table_json(path.with_suffix(".json"), cols, np.column_stack(data))


def cmd_evolve(rc: RunConfig, out: Path) -> list[Path]:
    ics = rc.initial_pair()
    rates = (rc.model.gamma_plus, rc.model.gamma_minus)
    written = []
    for label, ic, rate, stream in zip(("trajectory_1", "trajectory_2"), ics, rates, (0, 1)):
        traj = evolve_qubit(ic, rc.model, rc.grid, rc.frame, rate, step_bound=rc.step_bound)
        if rc.frame == "interaction" and rc.lab_transform:
            traj = to_lab_frame(traj, rc.model.detuning_mhz)
        if rc.shots is not None:
            traj = sample_trajectory(traj, rc.shots, stream=stream)
        _write_trajectory(traj, out / label, rc.format)
        written.append(out / label)
    return written


def cmd_nm(rc: RunConfig, out: Path, workers: int = 1) -> dict:
    lab = rc.frame == "interaction" and rc.lab_transform
    kw = {"shots": rc.shots, "frame": rc.frame, "lab_transform": lab, "step_bound": rc.step_bound}
    extra = {}
    if rc.maximize is not None:
        res, theta, phi = nm_maximized(rc.model, rc.grid, rc.maximize.get("theta_steps", 11),
                                       rc.maximize.get("phi_steps", 12), rc.motional, workers, **kw)
        extra = {"theta": theta, "phi": phi}
    else:
        ic1, ic2 = rc.initial_pair()
        res = nm_for_pair(ic1, ic2, rc.model, rc.grid, **kw)
    summary = {"nm": res.nm, "nm_err": res.nm_err, **extra,
               "params": rc.model.to_dict(), "grid": dataclasses.asdict(rc.grid)}
    if res.flagged is not None:
        summary["flagged_points"] = int(np.count_nonzero(res.flagged))
    if rc.format == "csv":
        res.to_csv(out / "nm.csv")
    else:
        n = len(res.times)
        zeros = np.zeros(n)
        _write_table_json(out / "nm_series.json", ["t_us", "D", "D_err", "sigma", "sigma_err"],
                          np.column_stack([res.times, res.trace_distance,
                                           res.trace_distance_err if res.trace_distance_err is not None else zeros,
                                           res.sigma,
                                           res.sigma_err if res.sigma_err is not None else zeros]))
    with open(out / "nm.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def sweep_grid_from(rc: RunConfig) -> SweepGrid:
    if rc.sweep is None:
        raise ConfigError("sweep", "the sweep command needs a 'sweep' section")
    mx = rc.maximize or {}
    return SweepGrid(
        [Axis.from_dict(a) for a in rc.sweep["axes"]], rc.model, rc.grid, rc.pair, rc.motional,
        rc.shots, rc.frame, rc.preparation, rc.maximize is not None,
        mx.get("theta_steps", 11), mx.get("phi_steps", 12), rc.step_bound)


def cmd_sweep(rc: RunConfig, out: Path, workers: int, resume: bool, stamp: str | None):
    sg = sweep_grid_from(rc)
    kind = rc.sweep["kind"]
    echo = {k: v for k, v in rc.raw.items() if k != "output_dir"}
    res = run_sweep(sg, kind, workers, out, resume, stamp or timestamp(), echo,
                    progress=lambda d, t: print(f"[{d}/{t}]", file=sys.stderr, flush=True))
    if kind == "circle":
        print(json.dumps({"ridge": ridge_points(res)}))
    return res


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iontrap-nm", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=("evolve", "nm", "sweep"))
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--preset", help=f"built-in parameter set: {', '.join(PRESETS)}")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry, e.g. model.rabi_mhz=2.2 or model.modes.0.fock_dim=8")
    ap.add_argument("--workers", type=int, default=None,
                    help="worker processes (default: $IONTRAP_NM_WORKERS or 1)")
    ap.add_argument("--seed", type=int, default=None, help="shot-noise seed")
    ap.add_argument("--shots", type=int, default=None, help="emulate N-shot tomography")
    ap.add_argument("--maximize", action="store_true", help="maximize NM over antipodal pure pairs")
    ap.add_argument("--out", default=None, help="output directory (default: ./out)")
    ap.add_argument("--resume", action="store_true", help="complete an interrupted sweep")
    ap.add_argument("--stamp", default=None, help="fixed timestamp for sweep file names")
    return ap


def _short_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.showwarning = _short_warning
    try:
        raw = assemble_config(args.preset, args.config, args.overrides, args.seed, args.shots,
                              args.maximize, args.out)
        rc = build_run_config(raw)
        out = Path(raw.get("output_dir") or "out")
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: output_dir: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    workers = default_workers() if args.workers is None else args.workers
    try:
        _write_echo(out, raw)
        if args.command == "evolve":
            cmd_evolve(rc, out)
        elif args.command == "nm":
            print(json.dumps(cmd_nm(rc, out, workers)))
        else:
            cmd_sweep(rc, out, workers, args.resume, args.stamp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        print(f"parameters: {json.dumps(rc.model.to_dict(), sort_keys=True)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
