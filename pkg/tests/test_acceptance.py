"""Acceptance criteria, one test per criterion.

Each test prints a PASS or FAIL line (also collected into the terminal summary).
Run on its own with ``pytest tests/test_acceptance.py -s``.
"""
import contextlib
import copy
import itertools
import math
from pathlib import Path

import numpy as np
import pytest

from finsler_em import checks, cli, forms
from finsler_em.connection import EhresmannConnection, Frame
from finsler_em.dynamics import ParticleParams, hyperbolic_motion, integrate_trajectory, poincare_form
from finsler_em.geometry import FundamentalFunction, QuadratureError, VerticalMetric, volume_density
from finsler_em.jets import DomainError, TangentSample, eval_jet, fd_derivative
from finsler_em.maxwell import (PotentialField, current_from_field, faraday, faraday_coordinate_free,
                                faraday_covariant)
from finsler_em.scenario import load_scenario, parse_document
from finsler_em.stress_energy import K, conservation_curved, conservation_flat, energy_momentum

from conftest import ACCEPTANCE_LINES, randers, schwarzschild

SC = Path(__file__).parent.parent / "scenarios"
CATALOG = sorted(SC.glob("*.yaml"))


@contextlib.contextmanager
def criterion(label: str):
    try:
        yield
    except BaseException as exc:
        line = f"FAIL  {label}  ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        print(line)
        ACCEPTANCE_LINES.append(line)
        raise
    line = f"PASS  {label}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def scenario(name: str, **samples):
    doc = parse_document((SC / f"{name}.yaml").read_text())
    doc = copy.deepcopy(doc)
    doc.setdefault("samples", {}).update(samples)
    return load_scenario(doc)


def rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.abs(a - b).max() / max(1.0, np.abs(b).max()))


# 1 ------------------------------------------------------------------------

def _schwarzschild_g(x):
    r, th = x[1], x[2]
    f = 1 - 2 / r
    return np.diag([f, -1 / f, -r * r, -(r * math.sin(th)) ** 2])


def _schwarzschild_christoffel(x):
    """Closed-form Levi-Civita symbols Gamma^i_jk of the diagonal test metric."""
    r, th = x[1], x[2]
    f = 1 - 2 / r
    dg = np.zeros((4, 4, 4))  # [k, i, i] = d_k g_ii
    dg[1] = np.diag([2 / r**2, 2 / (r**2 * f**2), -2 * r, -2 * r * math.sin(th) ** 2])
    dg[2, 3, 3] = -2 * r * r * math.sin(th) * math.cos(th)
    ginv = np.linalg.inv(_schwarzschild_g(x))
    low = 0.5 * (np.einsum("jik->ijk", dg) + np.einsum("kij->ijk", dg) - dg)  # Gamma_{i jk}
    return np.einsum("il,ljk->ijk", ginv, low)


RIEM_A = PotentialField.from_expressions(["0.3/x1", "0.1*sin(x0)*x2", "0.2*x1*cos(x3)", "0.1*x0*x2"])


def _classical_codifferential(xi_low, x, h=1e-4):
    def up(xx):
        gi = np.linalg.inv(_schwarzschild_g(xx))
        return gi @ xi_low(xx) @ gi

    div = sum((up(x + h * e) - up(x - h * e))[:, j] / (2 * h) for j, e in enumerate(np.eye(4)))
    return div + up(x) @ np.einsum("jjk->k", _schwarzschild_christoffel(x))


def _xi_low(x):
    m = np.array([[0, x[2], 0.3 * x[0], 0], [0, 0, math.sin(x[3]), x[1]], [0, 0, 0, 0.1], [0, 0, 0, 0]])
    return m - m.T


def _classical_T(x, y):
    def a(xx):
        return RIEM_A.value(TangentSample(tuple(xx), y))

    h = 1e-5
    d = np.array([(a(x + h * e) - a(x - h * e)) / (2 * h) for e in np.eye(4)])  # [i, j] = d_i A_j
    f = d - d.T
    g = _schwarzschild_g(x)
    gi = np.linalg.inv(g)
    ff = np.einsum("ij,ik,jl,kl->", f, gi, gi, f)
    return K * (-f @ gi @ f.T + 0.25 * g * ff)


@pytest.mark.slow
def test_criterion_1_riemannian_reduction():
    sc = scenario("schwarzschild", count=100, seed=101)
    v = VerticalMetric.euclidean()
    N = EhresmannConnection.canonical(v)
    with criterion("1  Riemannian reduction (Christoffel, F_hv = 0, codifferential, T_hh) at 100 samples"):
        for p in sc.sample_points():
            x = np.array(p.x)
            fr = Frame(sc.metric, v, N, p)
            assert np.abs(fr.L_h.value - _schwarzschild_christoffel(x)).max() < 1e-8
            F = faraday(RIEM_A, fr)
            assert not np.any(F.F_hv.value)
            xi = forms.AdaptedForm.two_form(hh=_jet_xi(fr))
            got = forms.codifferential_2form(xi, fr)
            want = _classical_codifferential(_xi_low, x)
            assert rel(got.h.value, want) < 1e-6
            assert rel(energy_momentum(F, fr).T_hh.value, _classical_T(x, p.y)) < 1e-8


def _jet_xi(fr):
    from finsler_em import jets

    xs = fr.xs
    z = 0.0 * xs[0]
    rows = [[z, xs[2], xs[0] * 0.3, z], [z, z, jets.sin(xs[3]), xs[1]], [z, z, z, z + 0.1], [z, z, z, z]]
    m = jets.stack([jets.stack(r) for r in rows])
    return m - m.T


# 2 ------------------------------------------------------------------------

IDENTITY_CHECKS = ("maxwell.dF", "maxwell.gauge_invariance", "connection.metricity", "connection.det_identities",
                   "connection.p_zero", "maxwell.continuity")


@pytest.mark.slow
@pytest.mark.parametrize("name", ["randers_full", "berwald_moor_flat"])
def test_criterion_2_identity_suite(name):
    sc = scenario(name, count=100, seed=202)
    assert sc.potential.depends_on_y and sc.potential.homogeneous0
    with criterion(f"2  identity suite on {name} at 100 samples"):
        recs = checks.run_checks(sc, sc.sample_points(), only=IDENTITY_CHECKS)
        bad = [r for r in recs if r.status == "fail"]
        assert not bad, bad[:3]
        ran = {r.check_id for r in recs if r.status == "pass"}
        expected = set(IDENTITY_CHECKS) - ({"connection.p_zero"} if sc.connection.kind != "canonical" else set())
        assert ran == expected


# 3 ------------------------------------------------------------------------

def _two_route_residuals(sc, p):
    fr = Frame(sc.metric, sc.vertical, sc.connection, p)
    F = faraday(sc.potential, fr)
    ref = F.as_form()
    cov = faraday_covariant(sc.potential, fr)
    out = {
        "faraday_cov": max(rel(cov.F_hh.value, F.F_hh.value), rel(cov.F_hv.value, F.F_hv.value)),
        "faraday_d": (faraday_coordinate_free(sc.potential, fr) - ref).max_abs() / max(1.0, ref.max_abs()),
    }
    disp = forms.codifferential_2form(ref, fr).values()
    out["codiff_def"] = rel(forms.raise_1form(forms.codifferential(ref, fr), fr).values(), disp)
    out["codiff_adapted"] = rel(forms.raise_1form(forms.codifferential(ref, fr, "adapted"), fr).values(), disp)
    J = current_from_field(F, fr, sc.particle.c).as_vector()
    dv = forms.divergence(J, fr).value
    scale = max(1.0, float(np.abs(J.h.value).max() + np.abs(J.v.value).max()))
    out["div_free"] = abs(forms.divergence_coordinate_free(J, fr).value - dv) / scale
    if sc.connection.kind == "canonical":
        out["div_canonical"] = abs(forms.divergence_canonical(J, fr).value - dv) / scale
    if sc.potential.gauge == "gradient" and not sc.name.startswith("broken"):
        pf = poincare_form(sc.potential, sc.metric, sc.particle, fr)
        out["poincare"] = (pf.exterior - pf.components).max_abs() / max(1.0, pf.components.max_abs())
    return out


@pytest.mark.parametrize("path", CATALOG, ids=lambda p: p.stem)
def test_criterion_3_two_routes(path):
    sc = scenario(path.stem, count=5, seed=303)
    with criterion(f"3  two-route equalities on {path.stem}"):
        for p in sc.sample_points() + sc.lattice_points()[:2]:
            res = _two_route_residuals(sc, p)
            worst = max(res, key=res.get)
            assert res[worst] < 1e-6, (worst, res[worst])


# 4 ------------------------------------------------------------------------

def test_criterion_4_conservation():
    with criterion("4  conservation: flat Berwald-Moor, vacuum wave, curved Randers"):
        bm = scenario("berwald_moor_flat", count=25, seed=404)
        for p in bm.sample_points():
            fr = Frame(bm.metric, bm.vertical, bm.connection, p)
            assert conservation_flat(faraday(bm.potential, fr), fr).scaled < 1e-5
        wave = scenario("plane_wave", count=25, seed=404)
        for p in wave.sample_points() + wave.lattice_points():
            fr = Frame(wave.metric, wave.vertical, wave.connection, p)
            r = conservation_flat(faraday(wave.potential, fr), fr)
            assert not np.any(r.rhs)
            assert np.abs(r.lhs).max() < 1e-6
        rs = scenario("randers_full", count=25, seed=404)
        assert rs.connection.kind == "canonical"
        for p in rs.sample_points():
            fr = Frame(rs.metric, rs.vertical, rs.connection, p)
            assert conservation_curved(faraday(rs.potential, fr), fr).scaled < 1e-5


# 5 ------------------------------------------------------------------------

MINK = FundamentalFunction.minkowski()
TRIVIAL = EhresmannConnection.trivial()


@pytest.mark.slow
def test_criterion_5a_hyperbolic_motion():
    params = ParticleParams(m=1.0, q=1.0, c=1.0)
    x0 = (0.0, 0.5, 0.0, 0.0)
    with criterion("5a hyperbolic motion, 10^4 RK4 steps of 1e-3, abs 1e-6; orthogonality < 1e-10"):
        tr = integrate_trajectory(x0, (1.0, 0, 0, 0), PotentialField.constant_field(0.5), MINK, TRIVIAL,
                                  params, 1e-3, 10_000)
        err = 0.0
        for st in tr.states:
            x, y = hyperbolic_motion(st.s, x0, 0.5, params)
            err = max(err, np.abs(st.x - x).max(), np.abs(st.y - y).max())
        assert err < 1e-6, err
        assert max(max(abs(d.ortho_lorentz), abs(d.ortho_correction)) for d in tr.diagnostics) < 1e-10


@pytest.mark.slow
def test_criterion_5b_free_drift_randers():
    with criterion("5b free particle on Randers, |F - 1| < 1e-6 over 10^4 steps"):
        tr = integrate_trajectory((0.0, 0.0, 0.0, 0.0), (1.0, 0.1, 0.0, 0.0), PotentialField.zero(), randers(),
                                  TRIVIAL, ParticleParams(q=0.0), 1e-3, 10_000)
        assert max(abs(d.F_drift) for d in tr.diagnostics) < 1e-6


@pytest.mark.slow
def test_criterion_5c_connection_independence_and_orthogonality():
    F = randers()
    A = PotentialField.unit_direction(F, 0.2, "1 + 0.3*sin(x1)")
    v = VerticalMetric.from_matrix(["exp(0.2*x0)", 1, 1, 1])  # flat, but gives N != 0
    args = ((0.0, 0.0, 0.0, 0.0), (1.0, 0.1, 0.0, 0.0), A, F)
    with criterion("5c trajectories with N = 0 and canonical N agree to 1e-8; orthogonality < 1e-10 per step"):
        a = integrate_trajectory(*args, TRIVIAL, ParticleParams(q=0.5), 1e-3, 2000)
        b = integrate_trajectory(*args, EhresmannConnection.canonical(v), ParticleParams(q=0.5), 1e-3, 2000)
        A_, B_ = a.array(), b.array()
        assert np.abs(A_[:, :9] - B_[:, :9]).max() < 1e-8
        assert np.abs(np.concatenate([A_[:, 10:12], B_[:, 10:12]])).max() < 1e-10


# 6 ------------------------------------------------------------------------

FD_STEP = {1: 1e-4, 2: 1e-3, 3: 1e-2}


def _fd(f, p, idx):
    """Extrapolated central difference, halving the step until two estimates agree.

    Near a singular locus (cone edge, coordinate hyperplane for Berwald-Moor)
    the default step is far too coarse, and may leave the domain.
    """
    h = FD_STEP[len(idx)]
    prev, best = None, (math.inf, None)
    for _ in range(10):
        try:
            cur = fd_derivative(f, p, idx, h, extrapolate=True)
        except DomainError:
            h /= 2
            continue
        if prev is not None:
            gap = abs(cur - prev) / max(1.0, abs(cur))
            if gap >= best[0]:
                break  # roundoff now dominates
            best = (gap, cur)
            if gap < 1e-9:
                break
        prev, h = cur, h / 2
    return best[1]


def _well_conditioned(sc, f):
    """Samples at least a fixed relative distance from the null cone and coordinate planes.

    Within ~1e-3 of the cone, third partials reach 1e8 and no double-precision
    difference quotient converges, so the oracle itself is meaningless there.
    """
    keep = []
    for p in sc.sample_points():
        y = np.array(p.y)
        if abs(f(list(p.x), list(p.y))) / (y @ y) < 0.05:
            continue
        if sc.metric.kind == "berwald_moor" and y.min() < 0.05:
            continue
        keep.append(p)
    assert len(keep) >= 100
    return keep


@pytest.mark.slow
def test_criterion_6_jets_vs_finite_differences():
    cat = ("minkowski_vacuum", "schwarzschild", "randers_full", "berwald_moor_flat")
    idxs = [i for k in (1, 2, 3) for i in itertools.combinations_with_replacement(range(8), k)]
    with criterion("6  jets vs central differences, all partials to order 3, catalog functions, 100 samples"):
        worst = 0.0
        for name in cat:
            sc = scenario(name, count=300, seed=606)
            f = sc.metric.F2
            for p in _well_conditioned(sc, f)[:100]:
                j = eval_jet(f, p, 3)
                for idx in idxs:
                    want = _fd(f, p, idx)
                    worst = max(worst, abs(j.partial(idx) - want) / max(1.0, abs(want)))
        assert worst < 1e-5, worst


# 7 ------------------------------------------------------------------------

def test_criterion_7a_riemannian_volume_density():
    with criterion("7a sigma(x) = sqrt|g(x)| for Riemannian catalog metrics, rel 1e-4"):
        e = VerticalMetric.euclidean()
        for x in [(0.0, 0.0, 0.0, 0.0), (1.0, -2.0, 0.5, 3.0)]:
            assert volume_density(MINK, e, x, nodes=8).sigma == pytest.approx(1.0, rel=1e-4)
        for x in [(0.0, 3.5, 1.0, 0.0), (0.2, 5.0, 2.0, 0.3)]:
            want = math.sqrt(abs(np.linalg.det(_schwarzschild_g(x))))
            assert volume_density(schwarzschild(), e, x, nodes=8).sigma == pytest.approx(want, rel=1e-4)


@pytest.mark.xfail(raises=QuadratureError, strict=True,
                   reason="the Randers F is real only inside its cone, so sqrt|G| has no value on "
                          "most of the v-ball and there is nothing to converge")
def test_criterion_7b_randers_self_convergence():
    with criterion("7b Randers sigma self-convergence under node doubling, rel 1e-3 (expected failure)"):
        e = VerticalMetric.euclidean()
        x = (0.3, 0.2, -0.1, 0.4)
        a = volume_density(randers(), e, x, nodes=8).sigma
        b = volume_density(randers(), e, x, nodes=16).sigma
        assert abs(a - b) <= 1e-3 * abs(b)


# 8 ------------------------------------------------------------------------

def test_criterion_8_determinism(capsys, tmp_path):
    path = str(SC / "randers_full.yaml")
    runs = {
        "check": ["check", "--scenario", path, "--seed", "8"],
        "field": ["field", "--scenario", path],
        "energy": ["energy", "--scenario", path],
        "trajectory": ["trajectory", "--scenario", path, "--n", "40"],
    }
    with criterion("8  every command byte-reproducible across reruns and --threads 1/2/4, csv and jsonl"):
        for cmd, argv in runs.items():
            for fmt in ("csv", "jsonl"):
                outs = []
                for t in ("1", "2", "4", "1"):
                    assert cli.main(argv + ["--threads", t, "--format", fmt]) == 0
                    outs.append(capsys.readouterr().out)
                assert len(set(outs)) == 1, cmd
