import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finsler_em import jets
from finsler_em.connection import EhresmannConnection, Frame, adapted_derivative
from finsler_em.forms import (DIM, AdaptedForm, AdaptedVector, DegreeError, codifferential, codifferential_2form,
                              divergence, divergence_canonical, divergence_coordinate_free, divergence_horizontal,
                              exterior_derivative, hodge_dual, inverse_hodge, perm_sign, raise_1form,
                              raise_indices, wedge)
from finsler_em.geometry import FundamentalFunction, VerticalMetric
from finsler_em.jets import TangentSample

from conftest import P_RANDERS, P_SCHW, curved_v, randers, schwarzschild


def flat_frame(p=P_RANDERS, order=4):
    return Frame(FundamentalFunction.minkowski(), VerticalMetric.euclidean(), EhresmannConnection.trivial(), p, order)


def randers_frame(order=4, p=P_RANDERS):
    v = curved_v()
    return Frame(randers(), v, EhresmannConnection.canonical(v), p, order)


def _coeff(xs, ys, c):
    """A y-dependent smooth coefficient built from a small parameter vector."""
    return (jets.sin(xs[0] * c[0] + xs[1]) * ys[1] / ys[0] + c[1] * xs[2] * ys[2] * ys[3] / (ys[0] * ys[0])
            + c[2] * jets.cos(xs[3]) + c[3] * ys[0] * xs[1])


def random_form(fr, degree, rng, n_terms=6):
    comps = {}
    for I in rng.choice(list(itertools.combinations(range(DIM), degree)), size=n_terms, replace=False):
        comps[tuple(int(a) for a in I)] = _coeff(fr.xs, fr.ys, rng.normal(size=4))
    return AdaptedForm(degree, comps)


# exterior derivative -----------------------------------------------------

@given(st.integers(0, 2), st.integers(0, 10_000))
def test_d_squared_zero(degree, seed):
    fr = randers_frame()
    w = random_form(fr, degree, np.random.default_rng(seed), n_terms=1 if degree == 0 else 4)
    dd = exterior_derivative(exterior_derivative(w, fr), fr)
    assert dd.max_abs() <= 1e-8 * max(1.0, w.max_abs())


def test_d_of_exact_base_form():
    fr = randers_frame()
    lam = jets.sin(fr.xs[0] * fr.xs[2]) + fr.xs[1] ** 2
    dlam = AdaptedForm.one_form(lam.dx())
    assert exterior_derivative(dlam, fr).max_abs() < 1e-9


def test_classical_reduction():
    fr = flat_frame()
    xs = fr.xs
    A = jets.stack([jets.sin(xs[1]), xs[0] * xs[2], jets.cos(xs[3]) * xs[0], xs[1] ** 2])
    dA = exterior_derivative(AdaptedForm.one_form(A), fr)
    grad = A.dx().value  # [j, i] = d_i A_j
    for i, j in itertools.combinations(range(4), 2):
        assert dA.values().get((i, j), 0.0) == pytest.approx(grad[j, i] - grad[i, j], abs=1e-14)
    assert all(abs(v) < 1e-15 for k, v in dA.values().items() if k[1] >= 4)


def test_two_routes_against_adapted_derivative():
    fr = randers_frame()
    p = fr.p
    comps = ["sin(x1)*y1/y0", "x0*y2/y0", "0.3*x2", "y3*y1/(y0*y0)"]
    from finsler_em import expressions as ex

    trees = [ex.parse_expression(c) for c in comps]
    A = jets.stack([ex.evaluate(t, fr.xs, fr.ys) for t in trees])
    w = AdaptedForm.one_form(A)
    d_nat = exterior_derivative(w, fr, "natural")
    d_ad = exterior_derivative(w, fr, "adapted")
    assert (d_nat - d_ad).max_abs() < 1e-12
    N = fr.conn
    fns = [lambda x, y, t=t: ex.evaluate(t, x, y) for t in trees]
    for i, j in itertools.combinations(range(4), 2):
        want = adapted_derivative(fns[j], N, p, i) - adapted_derivative(fns[i], N, p, j)
        assert d_nat.values()[(i, j)] == pytest.approx(want, rel=1e-8, abs=1e-12)
    a = A.dy().value
    for i in range(4):
        for b in range(4):
            assert d_nat.get((i, 4 + b)).value == pytest.approx(-a[i, b], rel=1e-8, abs=1e-14)


def test_degree_overflow():
    fr = flat_frame(order=3)
    top = AdaptedForm(DIM, {tuple(range(DIM)): 1.0})
    with pytest.raises(DegreeError):
        exterior_derivative(top, fr)
    with pytest.raises(DegreeError):
        wedge(top, AdaptedForm(1, {(0,): 1.0}))


# Hodge ----------------------------------------------------------------------

def brute_hodge(w: AdaptedForm, G: np.ndarray):
    """Hodge dual by explicit summation over all index tuples (values only)."""
    Ginv = np.linalg.inv(G)
    p = w.degree
    sG = math.sqrt(abs(np.linalg.det(G)))
    vals = w.values()
    dense = {}
    for I in itertools.permutations(range(DIM), p):
        dense[I] = perm_sign(I) * vals.get(tuple(sorted(I)), 0.0)
    up = {}
    for J in itertools.combinations(range(DIM), p):
        up[J] = sum(math.prod(Ginv[J[k], I[k]] for k in range(p)) * c for I, c in dense.items() if c)
    out = {}
    for J, c in up.items():
        Jc = tuple(a for a in range(DIM) if a not in J)
        out[Jc] = out.get(Jc, 0.0) + c * sG * perm_sign(J + Jc)
    return out


def test_hodge_of_one_is_volume():
    fr = randers_frame(3)
    star = hodge_dual(AdaptedForm(0, {(): 1.0}), fr)
    assert star.degree == DIM
    assert star.values()[tuple(range(DIM))] == pytest.approx(fr.sqrt_G.value)


@pytest.mark.parametrize("frame_fn", [lambda: flat_frame(order=3), lambda: randers_frame(3)])
def test_hodge_matches_brute_force(frame_fn, rng):
    fr = frame_fn()
    G = np.zeros((8, 8))
    G[:4, :4], G[4:, 4:] = fr.g.value, fr.v.value
    for degree in (1, 2, 3):
        w = AdaptedForm(degree, {I: float(rng.normal()) for I in itertools.combinations(range(DIM), degree)
                                 if rng.random() < 0.5})
        got = hodge_dual(w, fr).values()
        want = brute_hodge(w, G)
        keys = set(got) | set(want)
        assert max(abs(got.get(k, 0.0) - want.get(k, 0.0)) for k in keys) < 1e-12


def test_double_dual_sign_minkowski():
    fr = flat_frame(order=3)
    w = AdaptedForm(2, {(0, 1): 1.0})
    ss = hodge_dual(hodge_dual(w, fr), fr)
    # sign det G = -1, p(8-p) even
    assert {k: v for k, v in ss.values().items() if v} == {(0, 1): pytest.approx(-1.0)}
    np.testing.assert_allclose(inverse_hodge(hodge_dual(w, fr), fr).values()[(0, 1)], 1.0)


def test_diagonal_basis_forms_map_to_complements():
    fr = flat_frame(order=3)
    for I in itertools.combinations(range(DIM), 2):
        out = hodge_dual(AdaptedForm(2, {I: 1.0}), fr).values()
        Ic = tuple(a for a in range(DIM) if a not in I)
        assert set(k for k, v in out.items() if v != 0) == {Ic}
        assert abs(out[Ic]) == 1.0


@given(st.integers(0, 8), st.integers(0, 1000))
def test_double_dual_is_plus_minus_identity(degree, seed):
    fr = randers_frame(3)
    rng = np.random.default_rng(seed)
    keys = list(itertools.combinations(range(DIM), degree))
    w = AdaptedForm(degree, {k: float(rng.normal()) for k in keys[:5]})
    back = inverse_hodge(hodge_dual(w, fr), fr)
    d = (back - w).max_abs()
    assert d < 1e-10 * max(1.0, w.max_abs())


# codifferential ----------------------------------------------------------

def test_codifferential_of_zero():
    fr = randers_frame()
    out = codifferential_2form(AdaptedForm.zero(2), fr)
    assert not np.any(out.values())


def test_codifferential_two_routes_randers():
    fr = randers_frame()
    xi = random_form(fr, 2, np.random.default_rng(3), n_terms=10)
    disp = codifferential_2form(xi, fr).values()
    defn = raise_1form(codifferential(xi, fr), fr).values()
    adapted = raise_1form(codifferential(xi, fr, "adapted"), fr).values()
    scale = max(1.0, np.abs(disp).max())
    assert np.abs(disp - defn).max() / scale < 1e-6
    assert np.abs(disp - adapted).max() / scale < 1e-6


def test_codifferential_user_connection_routes():
    from test_connection import USER_N

    v = curved_v()
    fr = Frame(randers(), v, EhresmannConnection.user(USER_N), P_RANDERS)
    xi = random_form(fr, 2, np.random.default_rng(5), n_terms=10)
    disp = codifferential_2form(xi, fr).values()
    defn = raise_1form(codifferential(xi, fr), fr).values()
    assert np.abs(disp - defn).max() / max(1.0, np.abs(disp).max()) < 1e-6


def test_codifferential_riemannian_classical():
    """(delta xi)^i = xi^{ij}_{;j} with Levi-Civita, oracle from finite differences."""
    from test_connection import fd_christoffel

    F = schwarzschild()
    v = curved_v()
    fr = Frame(F, v, EhresmannConnection.canonical(v), P_SCHW)
    low = lambda x: np.array([[0, x[2], 0.3 * x[0], 0], [-x[2], 0, np.sin(x[3]), x[1]],
                              [-0.3 * x[0], -np.sin(x[3]), 0, 0.1], [0, -x[1], -0.1, 0]])
    g_of_x = lambda x: np.diag([1 - 2 / x[1], -1 / (1 - 2 / x[1]), -x[1] ** 2, -(x[1] * np.sin(x[2])) ** 2])
    up = lambda x: np.linalg.inv(g_of_x(x)) @ low(x) @ np.linalg.inv(g_of_x(x))
    x = np.array(P_SCHW.x)
    h = 1e-4
    div = np.zeros(4)
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        div += (up(x + e) - up(x - e))[:, j] / (2 * h)
    gam = fd_christoffel(g_of_x, x)
    classical = div + up(x) @ np.einsum("jjk->k", gam)
    xs = fr.xs
    xi_hh = jets.stack([jets.stack([0.0 * xs[0], xs[2], xs[0] * 0.3, 0.0 * xs[0]]),
                        jets.stack([xs[2] * -1.0, 0.0 * xs[0], jets.sin(xs[3]), xs[1]]),
                        jets.stack([xs[0] * -0.3, jets.sin(xs[3]) * -1.0, 0.0 * xs[0], 0.1 + 0.0 * xs[0]]),
                        jets.stack([0.0 * xs[0], xs[1] * -1.0, -0.1 + 0.0 * xs[0], 0.0 * xs[0]])])
    got = codifferential_2form(AdaptedForm.two_form(hh=xi_hh), fr)
    np.testing.assert_allclose(got.h.value, classical, rtol=1e-6, atol=1e-9)
    # delta y^a is not closed, so a horizontal xi feeds the vertical part through R
    R_xi = np.einsum("ajk,jk->a", fr.R.value, up(x))
    np.testing.assert_allclose(got.v.value, -0.5 * R_xi, rtol=1e-6, atol=1e-12)


# divergence ------------------------------------------------------------

def test_divergence_constant_field_flat():
    fr = flat_frame()
    V = AdaptedVector(jets.Jet.constant(np.array([1.0, 2.0, 3.0, 4.0]), 4),
                      jets.Jet.constant(np.array([0.5, 0.0, 1.0, 2.0]), 4))
    assert divergence(V, fr).value == pytest.approx(0.0, abs=1e-15)


def test_divergence_position_field_flat():
    fr = flat_frame()
    V = AdaptedVector(jets.stack(fr.xs), jets.Jet.constant(np.zeros(4), 4))
    assert divergence(V, fr).value == pytest.approx(4.0)


def test_divergence_routes_randers():
    fr = randers_frame()
    xs, ys = fr.xs, fr.ys
    Vh = jets.stack([xs[1] * ys[0], ys[2] * ys[1] / ys[0], xs[2] * xs[3], ys[1]])
    Vv = jets.stack([xs[0] * ys[1], ys[2] * ys[1] / ys[0], xs[3], ys[3] * ys[1]])
    V = AdaptedVector(Vh, Vv)
    a = divergence(V, fr).value
    assert divergence_coordinate_free(V, fr).value == pytest.approx(a, rel=1e-7)
    assert divergence_canonical(V, fr).value == pytest.approx(a, rel=1e-7)
    H = AdaptedVector(Vh, Vv * 0.0)
    assert divergence_horizontal(Vh, fr).value == pytest.approx(divergence(H, fr).value, rel=1e-7)


# adjointness on a reduced lattice -----------------------------------------

ADJ_F = FundamentalFunction.from_expression("sqrt(exp(0.2*x1)*(sqrt(y0^2-y1^2)+0.1*y0)^2 - y2^2 - y3^2)")
ADJ_V = VerticalMetric.from_matrix([1, "exp(0.3*x1)", 1, 1])
ADJ_BOX = ((-1.0, 1.0), (0.8, 1.6), (-0.4, 0.4))  # x1, y0, y1


def _window(xs, ys):
    w = 1.0
    for c, (lo, hi) in zip((xs[1], ys[0], ys[1]), ADJ_BOX):
        t = (c - lo) / (hi - lo)
        w = w * jets.exp(4.0 - (t * (1.0 - t)) ** -1.0)
    return w


def _adjoint_integrands(x1, y0, y1):
    p = TangentSample((0.1, x1, 0.2, -0.1), (y0, y1, 0.3, 0.2))
    fr = Frame(ADJ_F, ADJ_V, EhresmannConnection.canonical(ADJ_V), p, order=3)
    xs, ys = fr.xs, fr.ys
    W = _window(xs, ys)
    z = 0.0 * xs[0]
    eta = AdaptedForm.one_form(jets.stack([W * jets.sin(xs[1]), W * ys[1] / ys[0], W * 0.5, W * xs[1] * ys[1]]),
                               jets.stack([W * ys[0], W * 0.2, W * jets.cos(xs[1]), W * z]))
    hh = jets.stack([jets.stack([z, ys[1], z + 0.3, xs[1]]), jets.stack([ys[1] * -1.0, z, ys[0] * 0.2, z + 0.1]),
                     jets.stack([z - 0.3, ys[0] * -0.2, z, jets.cos(xs[1])]),
                     jets.stack([xs[1] * -1.0, z - 0.1, jets.cos(xs[1]) * -1.0, z])])
    hv = jets.stack([jets.stack([ys[1] / ys[0] * (i + 1.0 + j) for j in range(4)]) for i in range(4)])
    xi = AdaptedForm.two_form(hh=hh * W, hv=hv * W)
    deta = exterior_derivative(eta, fr).values()
    lhs = sum(deta.get(k, 0.0) * float(jets.asjet(u, 0).value) for k, u in raise_indices(xi, fr).items())
    rhs = float(eta.vector().value @ codifferential_2form(xi, fr).values())
    return lhs * fr.sqrt_G.value, rhs * fr.sqrt_G.value


def test_adjointness_on_lattice():
    """<d eta, xi> = <eta, delta xi> integrated over TM.

    Every ingredient depends on (x1, y0, y1) only, so the 8-dimensional
    integral reduces to this 3-dimensional lattice times a constant volume.
    """
    n = 8
    grids = [np.linspace(lo, hi, n + 2)[1:-1] for lo, hi in ADJ_BOX]
    I1 = I2 = 0.0
    for x1, y0, y1 in itertools.product(*grids):
        a, b = _adjoint_integrands(x1, y0, y1)
        I1 += a
        I2 += b
    assert abs(I1) > 0
    assert abs(I1 - I2) <= 0.05 * abs(I1)
