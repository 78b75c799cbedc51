"""Identity suite run by ``finsler-em check``: one record per check per sample."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import connection as cn
from . import dynamics, maxwell, stress_energy
from .connection import Frame
from .geometry import metric_tensor
from .jets import TangentSample


class Skip(Exception):
    pass


@dataclass(frozen=True)
class ReportRecord:
    check_id: str
    sample_index: int
    sample: TangentSample
    residual: float
    tolerance: float
    status: str  # pass | fail | skipped
    reason: str = ""


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.abs(a - b).max() / max(1.0, np.abs(b).max()))


class _Ctx:
    """Lazily shared intermediate results for one sample."""

    def __init__(self, sc, p: TangentSample):
        self.sc, self.p = sc, p
        self._cache = {}

    def get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def frame(self) -> Frame:
        return self.get("frame", lambda: Frame(self.sc.metric, self.sc.vertical, self.sc.connection, self.p))

    @property
    def F(self) -> maxwell.FaradayField:
        return self.get("F", lambda: maxwell.faraday(self.sc.potential, self.frame))

    @property
    def gauge_ok(self) -> bool:
        def fn():
            r = maxwell.check_gradient_gauge(self.sc.potential, self.p)
            return r.max_abs <= 1e-8
        return self.get("gauge", fn)


def _homogeneity_g(c: _Ctx):
    g1 = metric_tensor(c.sc.metric, c.p).g
    g2 = metric_tensor(c.sc.metric, c.p.scaled(2.0)).g
    return _rel(g2, g1), 1e-9


def _f2_contraction(c: _Ctx):
    y = np.array(c.p.y)
    g = metric_tensor(c.sc.metric, c.p).g
    return _rel(y @ g @ y, c.sc.metric.F2(list(c.p.x), list(c.p.y))), 1e-9


def _metricity(c: _Ctx):
    a, b = cn.metricity(c.frame)
    return float(max(np.abs(a).max(), np.abs(b).max())), 1e-7


def _det_identities(c: _Ctx):
    return cn.det_derivative_identities(c.frame).max_abs, 1e-7


def _p_zero(c: _Ctx):
    if c.sc.connection.kind != "canonical":
        raise Skip("P = 0 holds for the canonical connection only")
    return float(np.abs(c.frame.P.value).max()), 1e-8


def _faraday_routes(c: _Ctx):
    F = c.F
    cov = maxwell.faraday_covariant(c.sc.potential, c.frame)
    d = maxwell.faraday_coordinate_free(c.sc.potential, c.frame)
    ref = F.as_form()
    r1 = max(_rel(cov.F_hh.value, F.F_hh.value), _rel(cov.F_hv.value, F.F_hv.value))
    r2 = (d - ref).max_abs() / max(1.0, ref.max_abs())
    return max(r1, r2), 1e-8


def _dF(c: _Ctx):
    return maxwell.check_homogeneous_maxwell(c.F, c.frame).max_abs, 1e-8


def _gauge_invariance(c: _Ctx):
    A2 = maxwell.gauge_transform(c.sc.potential, c.sc.gauge_lambda)
    F2 = maxwell.faraday(A2, c.frame)
    return float(max(np.abs(F2.F_hh.value - c.F.F_hh.value).max(),
                     np.abs(F2.F_hv.value - c.F.F_hv.value).max())), 1e-10


def _gradient_gauge(c: _Ctx):
    if c.sc.potential.gauge != "gradient":
        raise Skip("potential does not declare the gradient gauge")
    return maxwell.check_gradient_gauge(c.sc.potential, c.p).max_abs, 1e-8


def _homogeneity_A(c: _Ctx):
    if not c.sc.potential.homogeneous0:
        raise Skip("potential not declared 0-homogeneous")
    a = c.sc.potential.value(c.p)
    return max(_rel(c.sc.potential.value(c.p.scaled(lam)), a) for lam in (0.5, 2.0)), 1e-9


def _current_routes(c: _Ctx):
    r = maxwell.current_routes(c.F, c.frame, c.sc.particle.c)
    ref = r.components
    others = [r.definitional, r.local, r.variational] + ([r.simplified] if r.simplified is not None else [])
    return max(_rel(o, ref) for o in others), 1e-6


def _continuity(c: _Ctx):
    J = maxwell.current_from_field(c.F, c.frame, c.sc.particle.c)
    return maxwell.check_continuity(J, c.frame).scaled, 1e-5


def _flat_background(c: _Ctx) -> bool:
    try:
        stress_energy.check_flat(c.frame)
    except stress_energy.FlatnessError:
        return False
    return True


def _vertical_current(c: _Ctx):
    if c.sc.potential.depends_on_y or not _flat_background(c):
        raise Skip("asserted only for A = A(x) on a flat background")
    J = maxwell.current_from_field(c.F, c.frame, c.sc.particle.c)
    return float(np.abs(J.J_v.value).max()), 1e-8


def _T_symmetry(c: _Ctx):
    T = stress_energy.energy_momentum(c.F, c.frame).T_hh.value
    return float(np.abs(T - T.T).max()), 1e-9


def _conservation(c: _Ctx):
    kind = c.sc.connection.kind
    if kind == "user":
        raise Skip("no conservation law is stated for a user connection")
    if kind == "trivial" and not _flat_background(c):
        raise Skip("flat route needs g = g(y)")
    r = stress_energy.conservation_residual(c.F, c.frame, "flat" if kind == "trivial" else "curved",
                                            c.sc.particle.c)
    return r.scaled, 1e-5


def _orthogonality(c: _Ctx):
    if not c.gauge_ok:
        raise Skip("potential violates the gradient gauge")
    sc = c.sc
    y = dynamics.normalize_direction(sc.metric, c.p.x, c.p.y, warn=False)
    r = dynamics.lorentz_rhs(c.p.x, y, sc.potential, sc.metric, sc.connection, sc.particle)
    return float(max(abs(r.force @ r.g @ y), abs(r.correction @ r.g @ y))), 1e-10


def _momentum_forms(c: _Ctx):
    if not c.gauge_ok:
        raise Skip("potential violates the gradient gauge")
    d = dynamics.canonical_momentum(c.sc.potential, c.sc.metric, c.sc.particle, c.p)
    return _rel(d.p_gauge, d.p), 1e-9


def _poincare_routes(c: _Ctx):
    pf = dynamics.poincare_form(c.sc.potential, c.sc.metric, c.sc.particle, c.frame)
    return (pf.exterior - pf.components).max_abs() / max(1.0, pf.components.max_abs()), 1e-7


CHECKS = (
    ("geometry.homogeneity", _homogeneity_g),
    ("geometry.f2_contraction", _f2_contraction),
    ("connection.metricity", _metricity),
    ("connection.det_identities", _det_identities),
    ("connection.p_zero", _p_zero),
    ("maxwell.faraday_routes", _faraday_routes),
    ("maxwell.dF", _dF),
    ("maxwell.gauge_invariance", _gauge_invariance),
    ("maxwell.gradient_gauge", _gradient_gauge),
    ("maxwell.homogeneity", _homogeneity_A),
    ("maxwell.current_routes", _current_routes),
    ("maxwell.continuity", _continuity),
    ("maxwell.vertical_current_flat", _vertical_current),
    ("stress_energy.symmetry", _T_symmetry),
    ("stress_energy.conservation", _conservation),
    ("dynamics.orthogonality", _orthogonality),
    ("dynamics.momentum_forms", _momentum_forms),
    ("dynamics.poincare_routes", _poincare_routes),
)


def check_sample(sc, index: int, p: TangentSample, tolerance_scale: float = 1.0,
                 only: tuple | None = None) -> list[ReportRecord]:
    c = _Ctx(sc, p)
    out = []
    for cid, fn in CHECKS:
        if only is not None and cid not in only:
            continue
        try:
            res, tol = fn(c)
        except Skip as s:
            out.append(ReportRecord(cid, index, p, math.nan, math.nan, "skipped", str(s)))
            continue
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            out.append(ReportRecord(cid, index, p, math.inf, math.nan, "fail", f"{type(exc).__name__}: {exc}"))
            continue
        tol *= tolerance_scale
        out.append(ReportRecord(cid, index, p, float(res), tol, "pass" if res <= tol else "fail"))
    return out


def run_checks(sc, samples: list, threads: int = 1, tolerance_scale: float = 1.0,
               only: tuple | None = None) -> list[ReportRecord]:
    """Sample-parallel; output order follows sample index for any thread count."""
    def job(args):
        i, p = args
        return check_sample(sc, i, p, tolerance_scale, only)

    items = list(enumerate(samples))
    if threads <= 1:
        chunks = [job(a) for a in items]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(job, items))
    return [r for ch in chunks for r in ch]
