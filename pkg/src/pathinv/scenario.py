"""Scenario files: one JSON document describing a complete closed-loop run.

Units: meters, radians, seconds. Layout (every section optional except
``curve`` and ``initial_state``; unknown keys are rejected)::

    {
      "name": "...",
      "curve": {"type": "circle", "radius": 1.0, "center": [0, 0]},
      "car": {"length": 0.25, "x4_max": 0.785, "vrm": 1.0},
      "neighborhood": {"delta_y": 0.2, "c1": 0.4, "c10": 0.6, "c0": 0.9, "n_c": 0.2},
      "gains": {"k1": 6, "k2": 11, "k3": 6, "beta": 0.9, "epsilon": null, "exponent_rule": "standard"},
      "barrier": {"delta": 0.02, "lambda0": 1, "lambda_k": 1, "clf_gain": 1, "penalty": 100},
      "reference": {"type": "sinusoid", "amplitude": 1, "frequency": 1, "offset": 0},
      "pursuit": {"lookahead": 0.5, "speed_gain": 0, "nominal_speed": 1, "k_steer": 10},
      "planner": {"bounds": [-3, 3, -3, 3], "omega_max": 2, "duration": 0.2, "budget": 5000, ...},
      "obstacles": {"rects": [[xmin, ymin, xmax, ymax]], "circles": [[cx, cy, r]], "inflation": 0.25},
      "goal": {"min_alignment": 0.0, "entry_alignment": 0.0},
      "initial_state": [x1, x2, x3, x4, x5, x6],
      "initial_mode": null,
      "sim": {"t0": 0, "horizon": 20, "dt": 0.01, "seed": 0, "servo_wn": 5, "noise": 0, "event_tol": 1e-10}
    }
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import NamedTuple

import numpy as np

from .curve import Curve, Neighborhood, check_feasibility, make_curve
from .errors import CurvatureInfeasible, PathInvError, ScenarioError
from .global_ctrl import PurePursuitConfig
from .local_ctrl import BarrierConfig, FiniteTimeGains, LocalController, SpeedReference
from .planner import GoalSet, ObstacleSet, PlannerConfig
from .vehicle import CarParams

SECTIONS = {
    "name", "curve", "car", "neighborhood", "gains", "barrier", "reference",
    "pursuit", "planner", "obstacles", "goal", "initial_state", "initial_mode", "sim",
}  # fmt: skip
SIM_KEYS = {"t0", "horizon", "dt", "seed", "servo_wn", "noise", "event_tol"}


@dataclass
class Scenario:
    curve: Curve
    initial: np.ndarray
    name: str = "scenario"
    car: CarParams = field(default_factory=CarParams)
    neighborhood: Neighborhood = field(default_factory=lambda: Neighborhood(0.2))
    gains: FiniteTimeGains = field(default_factory=FiniteTimeGains)
    barrier: BarrierConfig = field(default_factory=BarrierConfig)
    reference: SpeedReference = field(default_factory=SpeedReference)
    pursuit: PurePursuitConfig = field(default_factory=PurePursuitConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    obstacles: ObstacleSet = field(default_factory=ObstacleSet)
    goal_alignment: float = 0.0
    entry_alignment: float = 0.0
    q0: int | None = None
    t0: float = 0.0
    horizon: float = 20.0
    dt: float = 0.01
    seed: int = 0
    servo_wn: float = 5.0
    #: radius of the uniform position noise seen by the set-membership tests
    noise: float = 0.0
    event_tol: float = 1e-10
    source: dict | None = None

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float).reshape(6)
        if not self.dt > 0 or not self.horizon > 0:
            raise ValueError("dt and horizon must be positive")
        if self.q0 not in (None, 0, 1):
            raise ValueError("initial_mode must be null, 0 or 1")
        if self.noise < 0 or not self.servo_wn > 0 or not self.event_tol > 0:
            raise ValueError("noise must be >= 0; servo_wn and event_tol > 0")

    def with_(self, **kw) -> "Scenario":
        """Copy with some fields replaced."""
        return replace(self, **kw)

    def goal_set(self) -> GoalSet:
        nb = self.neighborhood
        # noisy measurements can trigger the switch-in up to ``noise`` early, so plans keep that margin too
        return GoalSet(self.curve, nb.c1 * nb.n_c, self.barrier.delta, self.goal_alignment, nb.c10 * nb.n_c + self.noise, self.entry_alignment)

    def local_controller(self) -> LocalController:
        return LocalController(self.curve, self.car, self.gains, self.barrier, self.reference, self.neighborhood.delta_y)

    def check(self) -> "CheckReport":
        return check_scenario(self)


class CheckItem(NamedTuple):
    name: str
    ok: bool
    detail: str


class CheckReport(NamedTuple):
    items: tuple

    @property
    def ok(self) -> bool:
        return all(i.ok for i in self.items)

    def lines(self) -> list:
        return [f"{'ok  ' if i.ok else 'FAIL'} {i.name}: {i.detail}" for i in self.items]


def check_scenario(sc: Scenario, n_samples: int = 10_000) -> CheckReport:
    items = []
    try:
        rep = check_feasibility(sc.curve, sc.car, n=n_samples, raise_on_violation=False)
        items.append(CheckItem("curvature", rep.ok, f"max K {rep.k_max:.6g} vs bound {rep.bound:.6g} (margin {rep.margin:.3g}, worst lambda {rep.worst_lambda:.6g})"))
    except PathInvError as exc:
        items.append(CheckItem("curvature", False, str(exc)))
    try:
        sc.neighborhood.check_car(sc.car)
        nb = sc.neighborhood
        items.append(CheckItem("neighborhood", True, f"c1 n_c={nb.c1 * nb.n_c:.4g} < c10 n_c={nb.c10 * nb.n_c:.4g} < c0 n_c={nb.c0 * nb.n_c:.4g} < delta_y={nb.delta_y:.4g} < r_min={sc.car.min_turn_radius:.4g}"))
    except ValueError as exc:
        items.append(CheckItem("neighborhood", False, str(exc)))
    # obstacles stay out of the delta_y tube around the path
    if len(sc.obstacles):
        lam = sc.curve.sample_lambdas(min(n_samples, 4000))
        pts = np.asarray(sc.curve.sigma(lam))
        d = float(np.min(sc.obstacles.distance(pts)))
        items.append(CheckItem("obstacles_vs_tube", d > sc.neighborhood.delta_y, f"min obstacle distance to path {d:.4g} vs delta_y {sc.neighborhood.delta_y:.4g}"))
    else:
        items.append(CheckItem("obstacles_vs_tube", True, "no obstacles"))
    x0 = sc.initial
    clear = float(sc.obstacles.clearance(x0[None, :2])[0]) if len(sc.obstacles) else math.inf
    items.append(CheckItem("start_free", clear > 0, f"start clearance {clear:.4g}"))
    st = abs(x0[3]) <= sc.car.x4_max
    items.append(CheckItem("start_steering", st, f"|x4(0)|={abs(x0[3]):.4g} vs x4_max={sc.car.x4_max:.4g}"))
    sp = sc.car.vrm + x0[4]
    items.append(CheckItem("start_speed", sp != 0.0, f"vrm + x5 = {sp:.4g}"))
    return CheckReport(tuple(items))


def _section(d, name, allowed):
    sub = d.get(name, {}) or {}
    if not isinstance(sub, dict):
        raise ScenarioError(f"section {name!r} must be an object")
    extra = set(sub) - set(allowed)
    if extra:
        raise ScenarioError(f"unknown keys in {name!r}: {sorted(extra)}")
    return sub


def _names(cls):
    return {f.name for f in fields(cls)}


def from_dict(d: dict) -> Scenario:
    """Build and validate a scenario from its JSON object (fail-closed on unknown keys)."""
    if not isinstance(d, dict):
        raise ScenarioError("scenario must be a JSON object")
    extra = set(d) - SECTIONS
    if extra:
        raise ScenarioError(f"unknown top-level keys: {sorted(extra)}")
    for req in ("curve", "initial_state"):
        if req not in d:
            raise ScenarioError(f"missing required section {req!r}")
    try:
        curve = make_curve(d["curve"])
        car = CarParams(**_section(d, "car", _names(CarParams)))
        nb_d = _section(d, "neighborhood", _names(Neighborhood))
        if "delta_y" not in nb_d:
            raise ScenarioError("neighborhood.delta_y is required")
        nb = Neighborhood(**nb_d)
        gains = FiniteTimeGains(**_section(d, "gains", _names(FiniteTimeGains)))
        barrier = BarrierConfig(**_section(d, "barrier", _names(BarrierConfig)))
        ref_d = dict(_section(d, "reference", {"type", "value", "amplitude", "frequency", "offset"}))
        reference = SpeedReference(ref_d.pop("type", "constant"), **ref_d)
        pursuit = PurePursuitConfig(**_section(d, "pursuit", _names(PurePursuitConfig)))
        pl = dict(_section(d, "planner", _names(PlannerConfig)))
        if "bounds" in pl:
            pl["bounds"] = tuple(float(v) for v in pl["bounds"])
        pl.setdefault("nominal_speed", pursuit.nominal_speed)
        planner = PlannerConfig(**pl)
        ob = dict(_section(d, "obstacles", {"rects", "circles", "inflation"}))
        ob.setdefault("inflation", car.length)
        obstacles = ObstacleSet(**ob)
        goal = _section(d, "goal", {"min_alignment", "entry_alignment"})
        sim = _section(d, "sim", SIM_KEYS)
        x0 = np.asarray(d["initial_state"], dtype=float)
        if x0.shape != (6,) or not np.all(np.isfinite(x0)):
            raise ScenarioError("initial_state must be 6 finite numbers")
        sc = Scenario(
            curve=curve,
            initial=x0,
            name=str(d.get("name", "scenario")),
            car=car,
            neighborhood=nb,
            gains=gains,
            barrier=barrier,
            reference=reference,
            pursuit=pursuit,
            planner=planner,
            obstacles=obstacles,
            goal_alignment=float(goal.get("min_alignment", 0.0)),
            entry_alignment=float(goal.get("entry_alignment", 0.0)),
            q0=d.get("initial_mode"),
            t0=float(sim.get("t0", 0.0)),
            horizon=float(sim.get("horizon", 20.0)),
            dt=float(sim.get("dt", 0.01)),
            seed=int(sim.get("seed", 0)),
            servo_wn=float(sim.get("servo_wn", 5.0)),
            noise=float(sim.get("noise", 0.0)),
            event_tol=float(sim.get("event_tol", 1e-10)),
            source=copy.deepcopy(d),
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc
    return sc


def load(path) -> Scenario:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed JSON in {path}: {exc}") from exc
    return from_dict(d)


def bundled(name: str) -> Scenario:
    """Load one of the scenarios shipped with the package (name without ``.json``)."""
    res = resources.files("pathinv") / "scenarios" / f"{name}.json"
    if not res.is_file():
        raise ScenarioError(f"no bundled scenario {name!r}; available: {bundled_names()}")
    return from_dict(json.loads(res.read_text()))


def bundled_names() -> list:
    root = resources.files("pathinv") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def validate(sc: Scenario) -> Scenario:
    """Raise :class:`ScenarioError` (or :class:`CurvatureInfeasible`) when a check fails."""
    rep = check_scenario(sc)
    if not rep.ok:
        bad = [i for i in rep.items if not i.ok]
        if bad[0].name == "curvature":
            raise CurvatureInfeasible(bad[0].detail)
        raise ScenarioError("; ".join(f"{i.name}: {i.detail}" for i in bad))
    return sc
