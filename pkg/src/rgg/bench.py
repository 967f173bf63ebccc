"""Scenario files, the move-script runner, reports and the classification-quality metric.

Scenario files are INI text::

    [environment]
    bounds = -10 -10 -10 10 10 10

    [robot]
    kind = free              ; or: chain
    half_extents = 0.5 0.5 0.5

    [roadmap]
    nodes = 1000
    neighbors = 16
    seed = 0

    [obstacle.beam]
    size = 10 2 2            ; full box dimensions
    count = 1

    [moves]
    iterations = 50
    seed = 1

    [run]
    engine = both            ; sequential | batch | both
    mode = lazy              ; lazy | eager
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import re
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .batch import BatchEngine
from .geometry import Aabb, Transform
from .grid import DEFAULT_CELL_CAPACITY
from .roadmap import ExactOracle, GeometrySet, Roadmap, Scene, ValidityState, build_prm
from .sequential import RggEngine, UpdateReport
from .swept import DEFAULT_K, ObstacleModel, RobotModel

ENGINES = ("sequential", "batch", "both")
MODES = ("lazy", "eager")

# components above which eager resolution falls back to per-component checks
ORACLE_LIMIT = 40000


class ScenarioError(ValueError):
    """Scenario file problem, pointing at the offending line and field."""

    def __init__(self, message: str, path=None, line: int | None = None, field: str | None = None):
        self.message, self.path, self.line, self.field = message, path, line, field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")


class EquivalenceError(RuntimeError):
    """The two engines disagreed after a move."""

    def __init__(self, iteration: int, diff: list[str]):
        self.iteration, self.diff = iteration, diff
        super().__init__(f"engines disagree after move {iteration}:\n  " + "\n  ".join(diff))


class SoundnessError(RuntimeError):
    """A green or red label contradicts the exact check."""


# --------------------------------------------------------------- scenario


@dataclass(frozen=True)
class ObstacleSpec:
    name: str
    size: tuple
    count: int = 1
    spheres: int = 0  # 0 picks the default count

    @property
    def half_extents(self) -> np.ndarray:
        return 0.5 * np.asarray(self.size, dtype=float)


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    bounds: tuple = (-10.0, -10.0, -10.0, 10.0, 10.0, 10.0)
    robot: str = "free"
    half_extents: tuple = (0.5, 0.5, 0.5)
    links: int = 6
    link_length: float = 1.0
    link_half_width: float = 0.15
    n_nodes: int = 100
    k_neighbors: int = 16
    eps: float | None = None
    K: int = DEFAULT_K
    roadmap_seed: int = 0
    obstacles: tuple = (ObstacleSpec("box", (2.0, 2.0, 2.0)),)
    iterations: int = 20
    move_seed: int = 1
    max_step: float = 0.0  # 0: targets anywhere in the workspace
    rotate: bool = False
    engine: str = "both"
    mode: str = "lazy"
    under_phase: bool = True
    cell_capacity: int = DEFAULT_CELL_CAPACITY
    sample: int = 100

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        if b.shape != (6,) or not np.all(np.isfinite(b)) or np.any(b[3:] <= b[:3]):
            raise ScenarioError("bounds need 6 finite numbers with max > min", field="environment.bounds")
        if self.robot not in ("free", "chain"):
            raise ScenarioError(f"unknown robot kind {self.robot!r}", field="robot.kind")
        if self.n_nodes < 1:
            raise ScenarioError("nodes must be positive", field="roadmap.nodes")
        if self.k_neighbors < 1:
            raise ScenarioError("neighbors must be positive", field="roadmap.neighbors")
        if self.eps is not None and self.eps <= 0:
            raise ScenarioError("epsilon must be positive", field="roadmap.epsilon")
        if self.iterations < 0:
            raise ScenarioError("iterations must be nonnegative", field="moves.iterations")
        if self.engine not in ENGINES:
            raise ScenarioError(f"engine must be one of {', '.join(ENGINES)}", field="run.engine")
        if self.mode not in MODES:
            raise ScenarioError("mode must be lazy or eager", field="run.mode")
        for spec in self.obstacles:
            if spec.count < 0 or any(s <= 0 for s in spec.size):
                raise ScenarioError("obstacle sizes must be positive", field=f"obstacle.{spec.name}")

    @property
    def env(self) -> Aabb:
        b = np.asarray(self.bounds, dtype=float)
        return Aabb(b[:3], b[3:])

    @property
    def lazy(self) -> bool:
        return self.mode == "lazy"

    def robot_model(self) -> RobotModel:
        if self.robot == "free":
            return RobotModel.free_box(self.half_extents)
        return RobotModel.arm(self.links, self.link_length, self.link_half_width)

    def engines(self) -> tuple[str, ...]:
        return ("sequential", "batch") if self.engine == "both" else (self.engine,)


_SCHEMA = {
    "environment": {"bounds": "floats6"},
    "robot": {"kind": "str", "half_extents": "floats3", "links": "int", "link_length": "float",
              "link_half_width": "float"},
    "roadmap": {"nodes": "int", "neighbors": "int", "epsilon": "float", "k_segments": "int", "seed": "int"},
    "moves": {"iterations": "int", "seed": "int", "max_step": "float", "rotate": "bool"},
    "run": {"engine": "str", "mode": "str", "under_phase": "bool", "cell_capacity": "int", "sample": "int"},
    "obstacle": {"size": "floats3", "count": "int", "spheres": "int"},
}

_FIELDS = {
    ("environment", "bounds"): "bounds",
    ("robot", "kind"): "robot",
    ("robot", "half_extents"): "half_extents",
    ("robot", "links"): "links",
    ("robot", "link_length"): "link_length",
    ("robot", "link_half_width"): "link_half_width",
    ("roadmap", "nodes"): "n_nodes",
    ("roadmap", "neighbors"): "k_neighbors",
    ("roadmap", "epsilon"): "eps",
    ("roadmap", "k_segments"): "K",
    ("roadmap", "seed"): "roadmap_seed",
    ("moves", "iterations"): "iterations",
    ("moves", "seed"): "move_seed",
    ("moves", "max_step"): "max_step",
    ("moves", "rotate"): "rotate",
    ("run", "engine"): "engine",
    ("run", "mode"): "mode",
    ("run", "under_phase"): "under_phase",
    ("run", "cell_capacity"): "cell_capacity",
    ("run", "sample"): "sample",
}


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line number, for diagnostics."""
    out, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            out[(section, None)] = no
            continue
        m = re.match(r"([^=:;#\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = no
    return out


def _convert(kind: str, value: str):
    value = value.strip()
    if kind == "str":
        return value
    if kind == "int":
        return int(value)
    if kind == "float":
        x = float(value)
        if not math.isfinite(x):
            raise ValueError("not finite")
        return x
    if kind == "bool":
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected true or false")
    n = int(kind[len("floats"):])
    parts = value.replace(",", " ").split()
    if len(parts) != n:
        raise ValueError(f"expected {n} numbers, got {len(parts)}")
    xs = tuple(float(p) for p in parts)
    if not all(math.isfinite(x) for x in xs):
        raise ValueError("not finite")
    return xs


def parse_scenario(text: str, name: str = "scenario", path=None) -> Scenario:
    """Parse scenario INI text; errors carry the line number and section.key."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text, source=str(path or name))
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioError("expected a [section] header", path, exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ScenarioError("malformed line", path, line) from None
    except configparser.Error as exc:
        raise ScenarioError(exc.message if hasattr(exc, "message") else str(exc), path,
                            getattr(exc, "lineno", None)) from None
    lines = _key_lines(text)
    kwargs: dict = {"name": name}
    obstacles = []
    for section in cp.sections():
        family = section.split(".", 1)
        schema = _SCHEMA.get(family[0])
        if schema is None:
            raise ScenarioError(f"unknown section [{section}]", path, lines.get((section, None)))
        values = {}
        for key, raw in cp.items(section):
            where = lines.get((section, key))
            kind = schema.get(key)
            if kind is None:
                raise ScenarioError("unknown field", path, where, f"{section}.{key}")
            try:
                values[key] = _convert(kind, raw)
            except ValueError as exc:
                raise ScenarioError(f"bad value {raw.strip()!r} ({exc})", path, where, f"{section}.{key}") from None
        if family[0] == "obstacle":
            label = family[1] if len(family) > 1 else f"obstacle{len(obstacles)}"
            if "size" not in values:
                raise ScenarioError("missing field", path, lines.get((section, None)), f"{section}.size")
            spec = ObstacleSpec(label, values["size"], values.get("count", 1), values.get("spheres", 0))
            if spec.count < 0 or min(spec.size) <= 0:
                raise ScenarioError("sizes must be positive and count nonnegative", path,
                                    lines.get((section, "size")), f"{section}.size")
            obstacles.append(spec)
            continue
        for key, v in values.items():
            kwargs[_FIELDS[(family[0], key)]] = v
    kwargs["obstacles"] = tuple(obstacles)
    try:
        return Scenario(**kwargs)
    except ScenarioError as exc:
        sec, _, key = (exc.field or "").partition(".")
        raise ScenarioError(exc.message, path, lines.get((sec, key or None)), exc.field) from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read ({exc.strerror})", path) from None
    return parse_scenario(text, path.stem, path)


# ---------------------------------------------------------------- setup


@dataclass
class Prepared:
    """Roadmap and approximations of one scenario, reusable across move scripts."""

    scenario: Scenario
    robot: RobotModel
    roadmap: Roadmap
    geoms: GeometrySet
    preprocess_s: float
    oracle: ExactOracle | None = None

    def scene(self, s: Scenario | None = None) -> Scene:
        """Starting scene for scenario `s` (obstacle placement follows its move seed)."""
        s = s or self.scenario
        return Scene(s.env, self.robot, initial_obstacles(s))

    def get_oracle(self) -> ExactOracle:
        if self.oracle is None:
            self.oracle = ExactOracle(self.robot, self.roadmap, self.geoms.eps)
        return self.oracle


def _random_pose(rng: np.random.Generator, env: Aabb, half: np.ndarray, rotate: bool) -> Transform:
    lo, hi = env.min + half, env.max - half
    t = rng.uniform(np.minimum(lo, hi), np.maximum(lo, hi))
    yaw = rng.uniform(-np.pi, np.pi) if rotate else 0.0
    return Transform.from_euler_xyz(0.0, 0.0, yaw, t)


def initial_obstacles(s: Scenario) -> dict:
    rng = np.random.default_rng([s.move_seed, 0])
    out, oid = {}, 0
    for spec in s.obstacles:
        for _ in range(spec.count):
            o = ObstacleModel(spec.half_extents, spec.spheres)
            out[oid] = o.placed(_random_pose(rng, s.env, spec.half_extents, s.rotate))
            oid += 1
    return out


def move_script(s: Scenario, obstacles: dict) -> list[tuple[int, Transform]]:
    """Absolute target poses, one per iteration, drawn from the move seed."""
    rng = np.random.default_rng([s.move_seed, 1])
    ids = list(obstacles)
    if not ids:
        return []
    poses = {oid: o.pose for oid, o in obstacles.items()}
    out = []
    for _ in range(s.iterations):
        oid = ids[int(rng.integers(len(ids)))]
        half = obstacles[oid].half_extents
        if s.max_step > 0:
            env = s.env
            cur = poses[oid].translation
            box = Aabb(np.maximum(env.min, cur - s.max_step), np.minimum(env.max, cur + s.max_step))
            box = Aabb(np.minimum(box.min, box.max), np.maximum(box.min, box.max))
            target = _random_pose(rng, box, np.zeros(3), s.rotate)
            t = np.clip(target.translation, env.min + half, env.max - half)
            target = Transform(target.rotation, t)
        else:
            target = _random_pose(rng, s.env, half, s.rotate)
        poses[oid] = target
        out.append((oid, target))
    return out


def relative_move(current: Transform, target: Transform) -> Transform:
    """The transform that, composed on top of `current`, lands on `target`."""
    return target.compose(current.inverse())


def prepare(s: Scenario, roadmap: Roadmap | None = None, geoms: GeometrySet | None = None) -> Prepared:
    """Build (or adopt) the roadmap and its approximations; the build is timed."""
    robot = geoms.robot if geoms is not None else s.robot_model()
    t0 = time.perf_counter()
    if roadmap is None:
        roadmap = build_prm(Scene(s.env, robot), s.n_nodes, s.k_neighbors, s.eps, s.roadmap_seed)
    if geoms is None:
        geoms = GeometrySet.build(robot, roadmap, s.eps, s.K)
    elapsed = time.perf_counter() - t0
    return Prepared(s, robot, roadmap, geoms, elapsed)


def make_engine(kind: str, p: Prepared, resolver=None, s: Scenario | None = None):
    """Engine of `kind` over the prepared roadmap; run options come from `s` (default: the prepared scenario)."""
    s = s or p.scenario
    scene = p.scene(s)
    if kind == "sequential":
        return RggEngine(p.roadmap, p.geoms, scene, resolver, s.under_phase, s.lazy)
    return BatchEngine(p.roadmap, p.geoms, scene, resolver, s.under_phase, s.lazy, s.cell_capacity)


def _resolver(p: Prepared, s: Scenario):
    if s.lazy or p.roadmap.n_components > ORACLE_LIMIT:
        return None
    return p.get_oracle().resolver()


def engines_agree(seq: RggEngine, bat: BatchEngine) -> bool:
    ids = bat.labels.obstacle_ids
    return (np.array_equal(seq.states(), bat.labels.states)
            and np.array_equal(seq.membership_bits(ids), bat.labels.bits))


def soundness_violations(states: np.ndarray, valid: np.ndarray) -> int:
    """Green components that collide plus red components that are free."""
    return int(np.count_nonzero((states == ValidityState.VALID) & ~valid)
               + np.count_nonzero((states == ValidityState.INVALID) & valid))


# ---------------------------------------------------------------- report

COUNT_COLUMNS = (
    "newly_valid", "newly_invalid", "newly_unknown",
    "pending_unknown", "pending_unknown_edges", "unknown_after", "unknown_edges_after",
    "resolved", "over_candidates", "under_candidates", "green", "red", "gray",
)
TIMING_COLUMNS = (
    "revalidate_us", "transform_us", "over_us", "under_us", "heuristic_us", "resolve_us", "total_us",
    "preprocess_s", "setup_sequential_s", "setup_batch_s",
)
ND = "[nd]"
COLUMNS = ("kind", "iteration", "engine", "obstacle", "nodes", "edges") + COUNT_COLUMNS + tuple(
    c + ND for c in TIMING_COLUMNS)


@dataclass
class Report:
    """One preprocessing record plus one row per (iteration, engine)."""

    scenario: str
    nodes: int
    edges: int
    preprocess_s: float
    setup_s: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    violations: int = 0

    def add(self, iteration: int, engine: str, r: UpdateReport, states: np.ndarray) -> None:
        counts = np.bincount(states, minlength=3)
        row = {k: getattr(r, k) for k in COUNT_COLUMNS[:10]}
        row.update(kind="move", iteration=iteration, engine=engine, obstacle=r.obstacle,
                   green=int(counts[0]), red=int(counts[1]), gray=int(counts[2]),
                   revalidate_us=r.revalidate_us, transform_us=r.transform_us, over_us=r.over_us,
                   under_us=r.under_us, heuristic_us=r.heuristic_us, resolve_us=r.resolve_us,
                   total_us=r.total_us)
        self.rows.append(row)

    def engine_rows(self, engine: str) -> list[dict]:
        return [r for r in self.rows if r["engine"] == engine]

    def means(self, engine: str) -> dict:
        rows = self.engine_rows(engine)
        if not rows:
            return {}
        keys = [k for k in COUNT_COLUMNS + TIMING_COLUMNS if k in rows[0]]
        return {k: float(np.mean([r[k] for r in rows])) for k in keys}

    def table(self) -> list[dict]:
        """Flat rows in `COLUMNS` order, preprocessing record first."""
        head = {"kind": "preprocess", "iteration": "", "engine": "", "obstacle": "",
                "nodes": self.nodes, "edges": self.edges, "preprocess_s": self.preprocess_s}
        head.update({f"setup_{name}_s": secs for name, secs in self.setup_s.items()})
        out = [head]
        for r in self.rows:
            out.append(dict(r, nodes=self.nodes, edges=self.edges))
        return [{c: row.get(c.removesuffix(ND), "") for c in COLUMNS} for row in out]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def emit_report(r: Report | None, fmt: str = "csv", path=None) -> str:
    """Write the report as CSV or as an aligned summary; returns the text.

    CSV columns are `COLUMNS`; names ending in ``[nd]`` are wall-clock
    timings and vary between runs, every other column is reproducible.
    """
    if fmt not in ("csv", "pretty"):
        raise ValueError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        if r is not None:
            for row in r.table():
                w.writerow({k: _fmt(v) for k, v in row.items()})
    else:
        buf.write(_pretty(r))
    text = buf.getvalue()
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc.strerror}") from None
    return text


def _pretty(r: Report | None) -> str:
    if r is None:
        return "(empty report)\n"
    lines = [f"scenario {r.scenario}: {r.nodes} nodes, {r.edges} edges, preprocessing {r.preprocess_s:.2f} s"]
    header = ("engine", "moves", "update us", "over us", "under us", "unknown edges", "validate us")
    body = []
    for eng in ("sequential", "batch"):
        m = r.means(eng)
        if not m:
            continue
        body.append((eng, str(len(r.engine_rows(eng))), f"{m['heuristic_us']:.1f}", f"{m['over_us']:.1f}",
                     f"{m['under_us']:.1f}", f"{m['pending_unknown_edges']:.2f}", f"{m['resolve_us']:.1f}"))
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(header)]
    lines.append("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    lines.extend("  ".join(c.rjust(w) for c, w in zip(b, widths)) for b in body)
    if r.violations:
        lines.append(f"soundness violations: {r.violations}")
    return "\n".join(lines) + "\n"


def read_report_csv(text: str) -> list[dict]:
    """Parse emitted CSV back into rows with numbers converted."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        conv = {}
        for k, v in row.items():
            if v == "" or k in ("kind", "engine"):
                conv[k] = v
                continue
            try:
                conv[k] = int(v)
            except ValueError:
                try:
                    conv[k] = float(v)
                except ValueError:
                    conv[k] = v
        out.append(conv)
    return out


# ------------------------------------------------------------------ run


def run_scenario(s: Scenario, prepared: Prepared | None = None, verify: bool = False,
                 on_move=None) -> Report:
    """Replay the move script through the selected engines.

    With both engines, labels and intersection lists are compared after every
    move and a mismatch raises `EquivalenceError`.  With `verify`, every
    green/red label is checked against the exact oracle and contradictions
    are counted in ``Report.violations``.
    """
    p = prepared or prepare(s)
    report = Report(s.name, p.roadmap.n_nodes, p.roadmap.n_edges, p.preprocess_s)
    resolver = _resolver(p, s)
    engines = {}
    for kind in s.engines():
        t0 = time.perf_counter()
        engines[kind] = make_engine(kind, p, resolver, s)
        report.setup_s[kind] = time.perf_counter() - t0
    if len(engines) == 2 and not engines_agree(engines["sequential"], engines["batch"]):
        raise EquivalenceError(0, engines["batch"].labels.diff(engines["sequential"].states(),
                                                               engines["sequential"].intersections()))
    scene = p.scene(s)
    oracle = p.get_oracle() if verify else None
    for it, (oid, target) in enumerate(move_script(s, scene.obstacles), 1):
        t = relative_move(scene.obstacles[oid].pose, target)
        scene.obstacles[oid] = scene.obstacles[oid].moved(t)
        for kind, eng in engines.items():
            r = eng.update_obstacle(oid, t, s.lazy)
            report.add(it, kind, r, eng.states())
        if len(engines) == 2 and not engines_agree(engines["sequential"], engines["batch"]):
            seq = engines["sequential"]
            raise EquivalenceError(it, engines["batch"].labels.diff(seq.states(), seq.intersections()))
        if oracle is not None:
            valid = oracle.valid_mask(scene)
            for eng in engines.values():
                report.violations += soundness_violations(eng.states(), valid)
        if on_move is not None:
            on_move(it, engines, scene)
    return report


# -------------------------------------------------------------- quality


@dataclass
class QualitySummary:
    """Labels of sampled components compared with the exact check."""

    checked: int = 0
    green: int = 0
    green_correct: int = 0
    red: int = 0
    red_correct: int = 0
    gray: int = 0
    gray_free: int = 0
    gray_colliding: int = 0

    @property
    def green_rate(self) -> float:
        return self.green_correct / self.green if self.green else 1.0

    @property
    def red_rate(self) -> float:
        return self.red_correct / self.red if self.red else 1.0

    @property
    def gray_fraction(self) -> float:
        return self.gray / self.checked if self.checked else 0.0

    @property
    def gray_free_fraction(self) -> float:
        """Share of sampled grays that the exact check would turn green."""
        return self.gray_free / self.gray if self.gray else 0.0

    @property
    def sound(self) -> bool:
        return self.green_correct == self.green and self.red_correct == self.red

    def add(self, states: np.ndarray, valid: np.ndarray) -> None:
        self.checked += len(states)
        g = states == ValidityState.VALID
        r = states == ValidityState.INVALID
        u = states == ValidityState.UNKNOWN
        self.green += int(g.sum())
        self.green_correct += int((g & valid).sum())
        self.red += int(r.sum())
        self.red_correct += int((r & ~valid).sum())
        self.gray += int(u.sum())
        self.gray_free += int((u & valid).sum())
        self.gray_colliding += int((u & ~valid).sum())

    def as_dict(self) -> dict:
        return {
            "checked": self.checked, "green": self.green, "red": self.red, "gray": self.gray,
            "green_rate": self.green_rate, "red_rate": self.red_rate,
            "gray_fraction": self.gray_fraction, "gray_free": self.gray_free,
            "gray_colliding": self.gray_colliding,
        }


def classification_quality(s: Scenario, sample: int | None = None, prepared: Prepared | None = None) -> QualitySummary:
    """Sample components after each move (and at the start) and score their labels."""
    sample = s.sample if sample is None else sample
    p = prepared or prepare(s)
    oracle = p.get_oracle()
    rng = np.random.default_rng([s.move_seed, 2])
    n = p.roadmap.n_components
    summary = QualitySummary()
    kind = "sequential" if s.engine != "batch" else "batch"
    eng = make_engine(kind, p, None if s.lazy else oracle.resolver(), s)
    scene = p.scene(s)

    def score():
        pick = rng.choice(n, size=min(sample, n), replace=False)
        summary.add(eng.states()[pick], oracle.valid_mask(scene)[pick])

    score()
    for oid, target in move_script(s, scene.obstacles):
        t = relative_move(scene.obstacles[oid].pose, target)
        scene.obstacles[oid] = scene.obstacles[oid].moved(t)
        eng.update_obstacle(oid, t, s.lazy)
        score()
    return summary


def with_overrides(s: Scenario, **kw) -> Scenario:
    """Copy of `s` with the non-None keyword fields replaced."""
    return replace(s, **{k: v for k, v in kw.items() if v is not None})
