"""Scenario documents: one reproducible description of a run.

Top-level keys of a document (YAML or JSON):

    name          free text
    metric        {kind: minkowski | riemannian | randers | berwald_moor | expression, ...}
    vertical      {kind: euclidean} or {kind: expression, v: 4x4 or diagonal}
    connection    {kind: trivial | canonical | user, N: 4x4 for user}
    potential     {kind: zero | plane_wave | coulomb | constant_field | unit_direction | expression, ...}
    particle      {m, q, c}
    samples       {seed, count, box: [[lo, hi] x 4], y_scale: [lo, hi], explicit: [{x, y}],
                   lattice: {lo, hi, shape, y}}
    gauge         {lambda: expression in x}   (used by the gauge-invariance check)
    trajectory    {x0, y0, step, n_steps}
    outputs       list of report names
"""
from __future__ import annotations

import copy
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import expressions as ex
from .connection import EhresmannConnection
from .dynamics import ParticleParams
from .geometry import FundamentalFunction, SignatureError, SingularMetricError, VerticalMetric, metric_tensor
from .jets import DomainError, TangentSample
from .maxwell import PotentialField, ScalarOnBase

log = logging.getLogger(__name__)

TOP_KEYS = ("name", "metric", "vertical", "connection", "potential", "particle", "samples",
            "gauge", "trajectory", "outputs")
N_PROBES = 10
PROBE_TOL = 1e-9
EPS_Y = 1e-8
MAX_REJECTIONS = 10_000


class ScenarioError(ValueError):
    """Validation failure; ``field`` names the offending document key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Lattice:
    lo: tuple
    hi: tuple
    shape: tuple
    y: tuple

    def points(self) -> list[TangentSample]:
        if any(n == 0 for n in self.shape):
            return []
        axes = [np.linspace(a, b, n) if n > 1 else np.array([a]) for a, b, n in zip(self.lo, self.hi, self.shape)]
        return [TangentSample(tuple(float(c) for c in xs), self.y) for xs in itertools.product(*axes)]


@dataclass(frozen=True)
class SampleSpec:
    seed: int = 0
    count: int = 0
    box: tuple = ((-0.5, 0.5),) * 4
    y_scale: tuple = (0.5, 2.0)
    explicit: tuple = ()
    lattice: Lattice | None = None


@dataclass(frozen=True)
class TrajectorySpec:
    x0: tuple = (0.0, 0.0, 0.0, 0.0)
    y0: tuple = (1.0, 0.0, 0.0, 0.0)
    step: float = 1e-3
    n_steps: int = 1000


@dataclass(frozen=True)
class Scenario:
    doc: dict
    metric: FundamentalFunction = field(compare=False)
    vertical: VerticalMetric = field(compare=False)
    connection: EhresmannConnection = field(compare=False)
    potential: PotentialField = field(compare=False)
    particle: ParticleParams = field(compare=False)
    samples: SampleSpec = field(compare=False)
    trajectory: TrajectorySpec = field(compare=False)
    gauge_lambda: ScalarOnBase = field(compare=False)
    outputs: tuple = field(compare=False, default=())
    warnings: tuple = field(compare=False, default=())

    @property
    def name(self) -> str:
        return self.doc.get("name", "scenario")

    def with_seed(self, seed: int) -> "Scenario":
        d = copy.deepcopy(self.doc)
        d.setdefault("samples", {})["seed"] = int(seed)
        return build_scenario(d, check=False)

    def sample_points(self, seed: int | None = None) -> list[TangentSample]:
        spec = self.samples
        pts = list(spec.explicit)
        pts += draw_samples(self, spec.count, spec.seed if seed is None else seed)
        return pts

    def lattice_points(self) -> list[TangentSample]:
        return self.samples.lattice.points() if self.samples.lattice else []


# building -----------------------------------------------------------------

def _vec(v, name: str, n: int = 4) -> tuple:
    try:
        out = tuple(float(c) for c in v)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(name, f"expected {n} numbers") from exc
    if len(out) != n:
        raise ScenarioError(name, f"expected {n} numbers, got {len(out)}")
    return out


def _section(doc: dict, key: str, default: dict) -> dict:
    v = doc.get(key, default)
    if not isinstance(v, dict):
        raise ScenarioError(key, "must be a mapping")
    return v


def _build(key: str, fn, *args):
    try:
        return fn(*args)
    except ScenarioError:
        raise
    except (ex.ExpressionError, KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(key, str(exc) or type(exc).__name__) from exc


def _samples(doc: dict) -> SampleSpec:
    s = _section(doc, "samples", {})
    box = s.get("box", [[-0.5, 0.5]] * 4)
    box = tuple(_vec(b, "samples.box", 2) for b in box)
    if len(box) != 4 or any(lo > hi for lo, hi in box):
        raise ScenarioError("samples.box", "need four [lo, hi] pairs with lo <= hi")
    ys = _vec(s.get("y_scale", [0.5, 2.0]), "samples.y_scale", 2)
    if not 0 < ys[0] <= ys[1]:
        raise ScenarioError("samples.y_scale", "need 0 < lo <= hi")
    explicit = tuple(_build("samples.explicit", lambda e: TangentSample(_vec(e["x"], "samples.explicit.x"),
                                                                         _vec(e["y"], "samples.explicit.y")), e)
                     for e in s.get("explicit", []))
    lat = None
    if "lattice" in s:
        L = s["lattice"]
        shape = tuple(int(n) for n in L.get("shape", [0, 0, 0, 0]))
        if len(shape) != 4 or any(n < 0 for n in shape):
            raise ScenarioError("samples.lattice.shape", "need four non-negative integers")
        lat = Lattice(_vec(L.get("lo", [0] * 4), "samples.lattice.lo"), _vec(L.get("hi", [0] * 4), "samples.lattice.hi"),
                      shape, _vec(L.get("y", [1, 0, 0, 0]), "samples.lattice.y"))
    count = int(s.get("count", 0))
    if count < 0:
        raise ScenarioError("samples.count", "must be non-negative")
    return SampleSpec(int(s.get("seed", 0)), count, box, ys, explicit, lat)


def build_scenario(doc: dict, check: bool = True) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("document", "top level must be a mapping")
    unknown = set(doc) - set(TOP_KEYS)
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown top-level key")
    if "metric" not in doc:
        raise ScenarioError("metric", "missing")
    doc = copy.deepcopy(doc)
    F = _build("metric", FundamentalFunction.from_doc, _section(doc, "metric", {}))
    v = _build("vertical", VerticalMetric.from_doc, _section(doc, "vertical", {"kind": "euclidean"}))
    N = _build("connection", EhresmannConnection.from_doc, _section(doc, "connection", {"kind": "trivial"}), v)
    A = _build("potential", PotentialField.from_doc, _section(doc, "potential", {"kind": "zero"}), F)
    pd = _section(doc, "particle", {})
    P = _build("particle", lambda: ParticleParams(float(pd.get("m", 1.0)), float(pd.get("q", 1.0)),
                                                  float(pd.get("c", 1.0))))
    td = _section(doc, "trajectory", {})
    T = _build("trajectory", lambda: TrajectorySpec(_vec(td.get("x0", [0] * 4), "trajectory.x0"),
                                                    _vec(td.get("y0", [1, 0, 0, 0]), "trajectory.y0"),
                                                    float(td.get("step", 1e-3)), int(td.get("n_steps", 1000))))
    lam = _build("gauge", ScalarOnBase.parse, str(_section(doc, "gauge", {}).get("lambda", "sin(x2)")))
    outputs = doc.get("outputs", ["check"])
    if not isinstance(outputs, list):
        raise ScenarioError("outputs", "must be a list")
    sc = Scenario(doc, F, v, N, A, P, _samples(doc), T, lam, tuple(outputs))
    if check:
        sc = _validate(sc)
    return sc


def _validate(sc: Scenario) -> Scenario:
    """Signature at a probe point, then homogeneity probes (warnings only)."""
    probes = draw_samples(sc, N_PROBES, sc.samples.seed, strict=False)
    # an empty probe set usually means the Hessian is bad everywhere; say so
    first = probes[0] if probes else TangentSample(tuple(np.mean(sc.samples.box, axis=1)), (1.0, 0.2, 0.3, 0.1))
    try:
        metric_tensor(sc.metric, first)
    except (SignatureError, SingularMetricError, DomainError) as exc:
        raise ScenarioError("metric", f"signature check failed: {exc}") from exc
    if not probes:
        raise ScenarioError("metric", "no admissible sample found in the declared box")
    warns = []
    for p in probes:
        f1 = sc.metric.F(list(p.x), list(p.y))
        f2 = sc.metric.F(list(p.x), [2 * c for c in p.y])
        if abs(f2 - 2 * f1) > PROBE_TOL * max(1.0, abs(f1)):
            warns.append("metric: F is not 1-homogeneous in y")
            break
    if sc.potential.homogeneous0:
        for p in probes:
            a1 = sc.potential.value(p)
            a2 = sc.potential.value(p.scaled(2.0))
            if np.abs(a2 - a1).max() > PROBE_TOL * max(1.0, np.abs(a1).max()):
                warns.append("potential: A is not 0-homogeneous in y (Lagrange-space mode)")
                break
    for w in warns:
        log.warning("%s", w)
    return Scenario(sc.doc, sc.metric, sc.vertical, sc.connection, sc.potential, sc.particle,
                    sc.samples, sc.trajectory, sc.gauge_lambda, sc.outputs, tuple(warns))


# sampling -------------------------------------------------------------------

def _admissible(sc: Scenario, p: TangentSample) -> bool:
    if sc.metric.kind == "berwald_moor" and min(p.y) <= 0:
        return False  # catalog domain is the positive cone
    try:
        f = sc.metric.F(list(p.x), list(p.y))
        if not (math.isfinite(f) and f > 0):
            return False
        metric_tensor(sc.metric, p)
        vm = sc.vertical.matrix(p.x)
    except (ValueError, ZeroDivisionError, ArithmeticError):
        return False
    return float(np.asarray(p.y) @ vm @ np.asarray(p.y)) >= EPS_Y


def draw_samples(sc: Scenario, count: int, seed: int, strict: bool = True) -> list[TangentSample]:
    """x uniform in the box; y on the v-unit sphere, scaled by a factor in y_scale.

    Points where F is not positive or g has the wrong signature are
    rejected, so the result depends only on (document, seed).
    """
    rng = np.random.default_rng(seed)
    box = np.array(sc.samples.box)
    lo, hi = sc.samples.y_scale
    out, tries = [], 0
    while len(out) < count:
        tries += 1
        if tries > MAX_REJECTIONS * max(1, count):
            if strict:
                raise ScenarioError("samples", "rejection sampling found too few admissible points")
            break
        x = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(4)
        u = rng.standard_normal(4)
        u /= np.linalg.norm(u)
        s = lo + (hi - lo) * rng.random()
        try:
            Lc = np.linalg.cholesky(sc.vertical.matrix(x))
        except (ValueError, np.linalg.LinAlgError):
            continue
        y = s * np.linalg.solve(Lc.T, u)
        p = TangentSample(tuple(x), tuple(y))
        if _admissible(sc, p):
            out.append(p)
    return out


# IO ---------------------------------------------------------------------

def parse_document(text: str, fmt: str | None = None) -> dict:
    try:
        if fmt == "json" or (fmt is None and text.lstrip().startswith("{")):
            return json.loads(text)
        return yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ScenarioError("document", f"not well-formed: {exc}") from exc


def load_scenario(source: str | Path | dict) -> Scenario:
    """Build a validated Scenario from a path, document text, or mapping."""
    if isinstance(source, dict):
        return build_scenario(source)
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError("document", str(exc)) from exc
        return build_scenario(parse_document(text, "json" if path.suffix == ".json" else None))
    return build_scenario(parse_document(source))


def dump_scenario(sc: Scenario, fmt: str = "yaml") -> str:
    if fmt == "json":
        return json.dumps(sc.doc, indent=2, sort_keys=True)
    return yaml.safe_dump(sc.doc, sort_keys=True)
