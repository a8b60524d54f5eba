"""Parameter sweeps of the NM measure.

A sweep is a 1-D or 2-D product grid over a few scalar knobs of the base run
(Rabi frequency, detuning, window length, time resolution, shot count, the
plus-branch dephasing).  Points are independent; they run serially or on a
process pool, each finished point is appended to a progress file so an
interrupted sweep can be resumed, and the final CSV is ordered by grid index.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import STEP_BOUND, InitialCondition, TimeGrid, evolve_qubit, format_float
from .hilbert import ModelParams
from .nmeasure import nm_from_trajectories, nm_maximized
from .noise import ShotConfig

AXIS_NAMES = ("rabi_mhz", "detuning_mhz", "t_end", "n_points_time", "n_cycles", "gamma_plus_mhz")
KINDS = ("omega", "circle", "window", "resolution", "repetitions", "dephasing", "custom")
CONVERGENCE_AXES = {
    "window": "t_end",
    "resolution": "n_points_time",
    "repetitions": "n_cycles",
    "dephasing": "gamma_plus_mhz",
}
_INT_AXES = ("n_points_time", "n_cycles")


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    n_points: int
    scale: str = "linear"
    values_override: tuple | None = None

    def __post_init__(self):
        if self.name not in AXIS_NAMES:
            raise ValueError(f"unknown sweep axis {self.name!r}; expected one of {AXIS_NAMES}")
        if self.scale not in ("linear", "list"):
            raise ValueError(f"unsupported axis scale {self.scale!r}")
        n = len(self.values_override) if self.values_override is not None else self.n_points
        if n < 1 or (self.values_override is None and self.n_points < 2):
            raise ValueError(f"axis {self.name!r} needs n_points >= 2")

    @classmethod
    def from_values(cls, name: str, values) -> "Axis":
        vals = tuple(float(v) for v in values)
        return cls(name, min(vals), max(vals), len(vals), "list", vals)

    def values(self) -> np.ndarray:
        if self.values_override is not None:
            v = np.array(self.values_override, dtype=float)
        else:
            v = np.linspace(self.min, self.max, self.n_points)
        if self.name in _INT_AXES:
            v = np.round(v)
        return v

    @property
    def step(self) -> float:
        v = self.values()
        return float(np.min(np.diff(v))) if len(v) > 1 else 0.0

    def to_dict(self) -> dict:
        if self.values_override is not None:
            return {"name": self.name, "values": [float(x) for x in self.values_override]}
        return {"name": self.name, "min": self.min, "max": self.max, "n_points": self.n_points,
                "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> "Axis":
        if "values" in d:
            return cls.from_values(d["name"], d["values"])
        return cls(d["name"], float(d["min"]), float(d["max"]), int(d["n_points"]),
                   d.get("scale", "linear"))


def _motional_dict(motional):
    if motional is None:
        return None
    return [m.to_dict() for m in motional]


@dataclass
class SweepGrid:
    """Axes plus the base run every point is derived from."""

    axes: list
    params: ModelParams
    grid: TimeGrid
    pair: tuple = ("plus_x", "minus_x")
    motional: object = None
    shots: ShotConfig | None = None
    frame: str = "lab"
    preparation: str = "ideal"
    maximize: bool = False
    theta_steps: int = 11
    phi_steps: int = 12
    step_bound: float = STEP_BOUND

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 2:
            raise ValueError("a sweep has one or two axes")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate sweep axes {names}")
        if "n_cycles" in names and self.shots is None:
            self.shots = ShotConfig()

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a.values()) for a in self.axes)

    def points(self) -> list[tuple[float, ...]]:
        return list(itertools.product(*(a.values() for a in self.axes)))

    def resolve(self, point) -> tuple:
        """(params, grid, shots) for one grid point."""
        params, grid, shots = self.params, self.grid, self.shots
        for ax, v in zip(self.axes, point):
            if ax.name in ("rabi_mhz", "detuning_mhz", "gamma_plus_mhz"):
                params = dataclasses.replace(params, **{ax.name: float(v)})
            elif ax.name == "t_end":
                # window scans keep the output spacing fixed
                n = int(round((v - grid.t_start) / self.grid.dt)) + 1
                grid = TimeGrid(grid.t_start, float(v), n)
            elif ax.name == "n_points_time":
                grid = TimeGrid(grid.t_start, grid.t_end, int(v))
            elif ax.name == "n_cycles":
                shots = ShotConfig(int(v), shots.seed if shots else 0)
        return params, grid, shots

    def initial_pair(self) -> tuple[InitialCondition, InitialCondition]:
        q1, q2 = self.pair
        ic1 = InitialCondition(q1, self.motional, self.preparation)
        if q2 is None:
            return ic1, ic1.antipode()
        return ic1, InitialCondition(q2, self.motional, self.preparation)

    def to_dict(self) -> dict:
        return {
            "axes": [a.to_dict() for a in self.axes],
            "params": self.params.to_dict(),
            "grid": dataclasses.asdict(self.grid),
            "pair": list(self.pair),
            "motional": _motional_dict(self.motional),
            "shots": None if self.shots is None else self.shots.to_dict(),
            "frame": self.frame,
            "preparation": self.preparation,
            "maximize": self.maximize,
            "theta_steps": self.theta_steps,
            "phi_steps": self.phi_steps,
            "step_bound": self.step_bound,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SweepResult:
    kind: str
    axis_names: tuple
    values: np.ndarray          # (n_points, n_axes)
    nm: np.ndarray
    nm_err: np.ndarray
    wall_time_s: np.ndarray
    shape: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.nm < 0):
            raise ValueError("NM must be non-negative")

    def argmax(self) -> tuple[float, ...]:
        return tuple(float(x) for x in self.values[int(np.argmax(self.nm))])

    def column(self, name: str) -> np.ndarray:
        return self.values[:, list(self.axis_names).index(name)]

    def to_csv(self, path) -> None:
        """Data file: axis columns, nm, nm_err.  Timings live in the sidecar."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*self.axis_names, "nm", "nm_err"])
            for row, n, e in zip(self.values, self.nm, self.nm_err):
                w.writerow([format_float(x) for x in (*row, n, e)])

    def to_json(self, path, echo=None) -> None:
        doc = {
            "kind": self.kind,
            "axes": list(self.axis_names),
            "shape": list(self.shape),
            "argmax": list(self.argmax()),
            "nm_max": float(self.nm.max()),
            "wall_time_s": [float(x) for x in self.wall_time_s],
            **self.meta,
            "config": echo,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path, kind: str = "custom") -> "SweepResult":
        with open(path) as fh:
            rows = list(csv.reader(fh))
        head, body = rows[0], np.array(rows[1:], dtype=float)
        n_ax = len(head) - 2
        return cls(kind, tuple(head[:n_ax]), body[:, :n_ax], body[:, n_ax], body[:, n_ax + 1],
                   np.zeros(len(body)))


# ---------------------------------------------------------------------------
# point evaluation

_TRAJ_CACHE: dict = {}
_CACHE_SIZE = 4


def _branch(sg: SweepGrid, ic: InitialCondition, params: ModelParams, rate: float, grid: TimeGrid):
    # a branch depends on its own dephasing rate only, so a γ₊ scan evolves
    # the minus branch once; shot-count scans evolve both branches once
    body = {k: v for k, v in params.to_dict().items() if k not in ("gamma_plus_mhz", "gamma_minus_mhz")}
    key = json.dumps([body, rate, dataclasses.asdict(grid), repr(ic), sg.frame, sg.step_bound],
                     sort_keys=True)
    if key not in _TRAJ_CACHE:
        if len(_TRAJ_CACHE) >= _CACHE_SIZE:
            _TRAJ_CACHE.pop(next(iter(_TRAJ_CACHE)))
        _TRAJ_CACHE[key] = evolve_qubit(ic, params, grid, sg.frame, rate, step_bound=sg.step_bound)
    return _TRAJ_CACHE[key]


def _trajectories(sg: SweepGrid, params: ModelParams, grid: TimeGrid):
    ic1, ic2 = sg.initial_pair()
    return (_branch(sg, ic1, params, params.gamma_plus, grid),
            _branch(sg, ic2, params, params.gamma_minus, grid))


def evaluate_point(sg: SweepGrid, point) -> tuple[float, float]:
    params, grid, shots = sg.resolve(point)
    lab = sg.frame == "interaction" and params.detuning_mhz != 0
    if sg.maximize:
        res, _, _ = nm_maximized(params, grid, sg.theta_steps, sg.phi_steps, sg.motional,
                                 shots=shots, frame=sg.frame, lab_transform=lab,
                                 step_bound=sg.step_bound)
    else:
        t1, t2 = _trajectories(sg, params, grid)
        res = nm_from_trajectories(t1, t2, shots, params.detuning_mhz if lab else 0.0)
    return res.nm, (res.nm_err if res.nm_err is not None else 0.0)


def _task(args):
    sg, index, point = args
    t0 = time.perf_counter()
    nm, err = evaluate_point(sg, point)
    return index, nm, err, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# driver


def timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def default_workers() -> int:
    return max(1, int(os.environ.get("IONTRAP_NM_WORKERS", "1")))


def _progress_path(out_dir: Path, kind: str, sg: SweepGrid) -> Path:
    return out_dir / f"sweep_{kind}_{sg.fingerprint()}.progress.jsonl"


def _load_progress(path: Path) -> dict:
    done = {}
    if path.exists():
        with open(path) as fh:
            for line in fh:
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn last line of an interrupted run
                done[rec["index"]] = (rec["nm"], rec["nm_err"], rec["wall_time_s"])
    return done


def run_sweep(sg: SweepGrid, kind: str = "custom", workers: int | None = None, out_dir=None,
              resume: bool = False, stamp: str | None = None, echo=None, progress=None) -> SweepResult:
    """Evaluate every grid point; with ``out_dir`` stream progress and write the bundle.

    ``resume`` reuses the points already recorded in the progress file of an
    identical sweep.  ``progress`` is an optional callback ``(done, total)``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown sweep kind {kind!r}")
    workers = default_workers() if workers is None else max(1, int(workers))
    points = sg.points()
    total = len(points)
    out = Path(out_dir) if out_dir is not None else None
    done: dict = {}
    sink = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        ppath = _progress_path(out, kind, sg)
        if resume:
            done = _load_progress(ppath)
        elif ppath.exists():
            ppath.unlink()
        sink = open(ppath, "a")

    def record(index, nm, err, wall):
        done[index] = (nm, err, wall)
        if sink is not None:
            sink.write(json.dumps({"index": index, "nm": nm, "nm_err": err, "wall_time_s": wall}) + "\n")
            sink.flush()
        if progress is not None:
            progress(len(done), total)

    todo = [(sg, i, p) for i, p in enumerate(points) if i not in done]
    try:
        if workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(workers) as pool:
                for fut in as_completed([pool.submit(_task, t) for t in todo]):
                    record(*fut.result())
        else:
            for t in todo:
                record(*_task(t))
    finally:
        if sink is not None:
            sink.close()

    order = range(total)
    result = SweepResult(
        kind,
        tuple(a.name for a in sg.axes),
        np.array(points, dtype=float).reshape(total, len(sg.axes)),
        np.array([done[i][0] for i in order]),
        np.array([done[i][1] for i in order]),
        np.array([done[i][2] for i in order]),
        sg.shape,
        {"resumed_points": total - len(todo)},
    )
    if out is not None:
        stem = out / f"sweep_{kind}_{stamp or timestamp()}"
        result.to_csv(stem.with_suffix(".csv"))
        result.to_json(stem.with_suffix(".json"), echo if echo is not None else sg.to_dict())
        _progress_path(out, kind, sg).unlink(missing_ok=True)
    return result


# ---------------------------------------------------------------------------
# standard sweeps


def nm_vs_omega(params: ModelParams, grid: TimeGrid, rabi_values, **kw) -> SweepResult:
    """NM against the Rabi frequency at the detuning of ``params``; records the argmax."""
    run_kw = {k: kw.pop(k) for k in ("workers", "out_dir", "resume", "stamp", "echo", "progress") if k in kw}
    sg = SweepGrid([Axis.from_values("rabi_mhz", rabi_values)], params, grid, **kw)
    res = run_sweep(sg, "omega", **run_kw)
    res.meta["argmax_rabi_mhz"] = res.argmax()[0]
    return res


def circle_scan(params: ModelParams, grid: TimeGrid, detuning_values, rabi_values, **kw) -> SweepResult:
    """NM over the (δ, Ω) plane with the per-column ridge attached to ``meta``."""
    run_kw = {k: kw.pop(k) for k in ("workers", "out_dir", "resume", "stamp", "echo", "progress") if k in kw}
    sg = SweepGrid([Axis.from_values("detuning_mhz", detuning_values),
                    Axis.from_values("rabi_mhz", rabi_values)], params, grid, **kw)
    res = run_sweep(sg, "circle", **run_kw)
    res.meta["ridge"] = [[d, o] for d, o in ridge_points(res)]
    return res


def convergence_study(kind: str, params: ModelParams, grid: TimeGrid, values, **kw) -> SweepResult:
    """One of the window / resolution / repetitions / dephasing scans."""
    if kind not in CONVERGENCE_AXES:
        raise ValueError(f"convergence kind must be one of {tuple(CONVERGENCE_AXES)}")
    run_kw = {k: kw.pop(k) for k in ("workers", "out_dir", "resume", "stamp", "echo", "progress") if k in kw}
    sg = SweepGrid([Axis.from_values(CONVERGENCE_AXES[kind], values)], params, grid, **kw)
    return run_sweep(sg, kind, **run_kw)


# ---------------------------------------------------------------------------
# ridge analysis


def smooth3(y) -> np.ndarray:
    """3-point moving average; the end points average over their one neighbour."""
    y = np.asarray(y, dtype=float)
    if len(y) < 3:
        return y.copy()
    s = np.empty_like(y)
    s[1:-1] = (y[:-2] + y[1:-1] + y[2:]) / 3.0
    s[0] = 0.5 * (y[0] + y[1])
    s[-1] = 0.5 * (y[-2] + y[-1])
    return s


def local_maxima(y) -> np.ndarray:
    """Indices of strict-left local maxima of a positive series, end points included."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 2:
        return np.array([], dtype=int)
    idx = []
    for i in range(n):
        left = y[i - 1] if i > 0 else -np.inf
        right = y[i + 1] if i < n - 1 else -np.inf
        if y[i] > 0 and y[i] > left and y[i] >= right:
            idx.append(i)
    return np.array(idx, dtype=int)


def ridge_points(res: SweepResult, smooth: bool = True) -> list[tuple[float, float]]:
    """(δ, Ω) of the per-δ-column local maxima of NM vs Ω."""
    det = res.column("detuning_mhz")
    rabi = res.column("rabi_mhz")
    out = []
    for d in np.unique(det):
        m = det == d
        order = np.argsort(rabi[m])
        om = rabi[m][order]
        y = res.nm[m][order]
        ys = smooth3(y) if smooth else y
        out.extend((float(d), float(om[i])) for i in local_maxima(ys))
    return out


def circle_rabi(nu_mhz: float, delta_mhz: float) -> float:
    """Ω/2π on the circle δ² + Ω² = ν², NaN when δ > ν."""
    r = nu_mhz**2 - delta_mhz**2
    return math.sqrt(r) if r >= 0 else math.nan


def assign_circles(points, nus, tolerance: float) -> list[int | None]:
    """Index of the circle each ridge point lies on (radial distance ≤ tolerance), else None."""
    labels = []
    for d, o in points:
        dist = [abs(math.hypot(d, o) - nu) for nu in nus]
        k = int(np.argmin(dist))
        labels.append(k if dist[k] <= tolerance else None)
    return labels
