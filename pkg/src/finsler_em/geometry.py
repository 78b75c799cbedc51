"""Metric-level quantities derived from a Finsler fundamental function."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expressions as ex
from . import jets
from .jets import DomainError, Jet, TangentSample

# radius of the v-ball whose Euclidean 4-volume is 1: pi^2 r^4 / 2 = 1
BALL_RADIUS = (2.0 / math.pi**2) ** 0.25
SIGNATURE = (1, -1, -1, -1)
SINGULAR_TOL = 1e-12


class SignatureError(ValueError):
    pass


class SingularMetricError(ValueError):
    pass


class FrameError(ValueError):
    pass


class QuadratureError(ValueError):
    pass


def _tree(v) -> ex.Node:
    if isinstance(v, (int, float)):
        return ex.Num(float(v))
    if isinstance(v, str):
        return ex.parse_expression(v)
    return v


def _matrix_trees(m) -> tuple:
    """Accept a 4x4 nested list, or a length-4 diagonal."""
    if len(m) == 4 and not isinstance(m[0], (list, tuple)):
        return tuple(tuple(_tree(m[i]) if i == j else ex.Num(0.0) for j in range(4)) for i in range(4))
    rows = tuple(tuple(_tree(c) for c in row) for row in m)
    if len(rows) != 4 or any(len(r) != 4 for r in rows):
        raise ValueError("matrix must be 4x4 or a diagonal of length 4")
    return rows


def eval_matrix(trees, x, y, order: int | None = None):
    """Evaluate a 4x4 tree matrix to an ndarray (floats) or a Jet (jets)."""
    vals = [[ex.evaluate(t, x, y) for t in row] for row in trees]
    if order is None:
        return np.array(vals, dtype=float)
    rows = [jets.stack([jets.asjet(v, order) for v in row]) for row in vals]
    return jets.stack(rows)


def _sym_sum(trees) -> ex.Node:
    """sum_ij m_ij y^i y^j as an expression tree."""
    node = None
    for i in range(4):
        for j in range(4):
            c = trees[i][j]
            if isinstance(c, ex.Num) and c.value == 0.0:
                continue
            term = ex.BinOp("*", ex.BinOp("*", c, ex.Var(f"y{i}")), ex.Var(f"y{j}"))
            node = term if node is None else ex.BinOp("+", node, term)
    return node if node is not None else ex.Num(0.0)


@dataclass(frozen=True)
class FundamentalFunction:
    """Finsler function F(x, y), with F^2 carried separately where it is smoother.

    ``kind`` is one of ``minkowski``, ``riemannian``, ``randers``,
    ``berwald_moor`` or ``expression``; ``params`` keeps the document form.
    """

    kind: str
    F_tree: ex.Node
    F2_tree: ex.Node
    params: dict = field(default_factory=dict, compare=False)

    def F(self, x, y):
        return ex.evaluate(self.F_tree, x, y)

    def F2(self, x, y):
        return ex.evaluate(self.F2_tree, x, y)

    @property
    def depends_on_x(self) -> bool:
        return any(v.startswith("x") for v in ex.free_variables(self.F2_tree))

    # catalog ----------------------------------------------------------
    @classmethod
    def minkowski(cls) -> "FundamentalFunction":
        f2 = ex.parse_expression("y0^2 - y1^2 - y2^2 - y3^2")
        return cls("minkowski", ex.Call("sqrt", f2), f2, {"kind": "minkowski"})

    @classmethod
    def riemannian(cls, g) -> "FundamentalFunction":
        trees = _matrix_trees(g)
        for i in range(4):
            for j in range(4):
                if ex.free_variables(trees[i][j]) - {"x0", "x1", "x2", "x3"}:
                    raise ValueError("Riemannian metric components may depend on x only")
        f2 = _sym_sum(trees)
        return cls("riemannian", ex.Call("sqrt", f2), f2, {"kind": "riemannian", "g": _doc_matrix(g)})

    @classmethod
    def randers(cls, a, b) -> "FundamentalFunction":
        a_t = _matrix_trees(a)
        b_t = [_tree(c) for c in b]
        beta = None
        for i, c in enumerate(b_t):
            term = ex.BinOp("*", c, ex.Var(f"y{i}"))
            beta = term if beta is None else ex.BinOp("+", beta, term)
        f = ex.BinOp("+", ex.Call("sqrt", _sym_sum(a_t)), beta)
        return cls("randers", f, ex.BinOp("*", f, f),
                   {"kind": "randers", "a": _doc_matrix(a), "b": [_doc_scalar(c) for c in b]})

    @classmethod
    def berwald_moor(cls) -> "FundamentalFunction":
        """|y0 y1 y2 y3|^(1/4); smooth away from the coordinate hyperplanes."""
        prod = "abs(y0*y1*y2*y3)"
        return cls("berwald_moor", ex.parse_expression(f"{prod}^(1/4)"),
                   ex.parse_expression(f"{prod}^(1/2)"), {"kind": "berwald_moor"})

    @classmethod
    def from_expression(cls, text: str) -> "FundamentalFunction":
        f = ex.parse_expression(text)
        return cls("expression", f, ex.BinOp("*", f, f), {"kind": "expression", "F": text})

    @classmethod
    def from_doc(cls, doc: dict) -> "FundamentalFunction":
        kind = doc.get("kind")
        if kind == "minkowski":
            return cls.minkowski()
        if kind == "riemannian":
            return cls.riemannian(doc["g"])
        if kind == "randers":
            return cls.randers(doc["a"], doc["b"])
        if kind == "berwald_moor":
            return cls.berwald_moor()
        if kind == "expression":
            return cls.from_expression(doc["F"])
        raise ValueError(f"unknown fundamental function kind {kind!r}")


def _doc_scalar(v):
    return v if isinstance(v, (int, float, str)) else ex.to_text(v)


def _doc_matrix(m):
    if len(m) == 4 and not isinstance(m[0], (list, tuple)):
        return [_doc_scalar(c) for c in m]
    return [[_doc_scalar(c) for c in row] for row in m]


@dataclass(frozen=True)
class VerticalMetric:
    """Positive-definite fiber metric v_ab; ``euclidean`` or a tree matrix."""

    trees: tuple
    kind: str = "euclidean"
    params: dict = field(default_factory=dict, compare=False)

    @classmethod
    def euclidean(cls) -> "VerticalMetric":
        return cls(_matrix_trees([1.0, 1.0, 1.0, 1.0]), "euclidean", {"kind": "euclidean"})

    @classmethod
    def from_matrix(cls, m) -> "VerticalMetric":
        trees = _matrix_trees(m)
        if any(v.startswith("y") for row in trees for t in row for v in ex.free_variables(t)):
            raise ValueError("the vertical metric may depend on x only")
        return cls(_matrix_trees(m), "expression", {"kind": "expression", "v": _doc_matrix(m)})

    @classmethod
    def from_doc(cls, doc: dict) -> "VerticalMetric":
        if doc.get("kind", "euclidean") == "euclidean":
            return cls.euclidean()
        return cls.from_matrix(doc["v"])

    @property
    def is_constant(self) -> bool:
        return not any(ex.free_variables(t) for row in self.trees for t in row)

    def matrix(self, x) -> np.ndarray:
        m = eval_matrix(self.trees, list(x), [0.0] * 4)
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise SingularMetricError("vertical metric is not positive definite") from exc
        return m

    def jet(self, xs, order: int) -> Jet:
        return eval_matrix(self.trees, xs, [0.0] * 4, order)


# metric blocks ----------------------------------------------------------

@dataclass(frozen=True)
class MetricBlock:
    g: np.ndarray
    det_g: float
    signature: tuple


@dataclass(frozen=True)
class SpatialMetric:
    gamma: np.ndarray
    det_gamma: float
    # det(gamma) g00 - |det g|: the decomposition g = -g00 det(gamma)
    residual_product: float
    # det(gamma) - sqrt|g|/sqrt(g00), the form quoted alongside the Finsler spatial metric
    residual_sqrt_form: float


@dataclass(frozen=True)
class CartanTensor:
    C: np.ndarray  # C[i, j, k] = C^i_{j kbar}


@dataclass(frozen=True)
class HvMetric:
    G: np.ndarray
    det_G: float


@dataclass(frozen=True)
class VolumeDensity:
    sigma: float
    excluded_bound: float
    nodes: int


@dataclass(frozen=True)
class GeometrySample:
    sample: TangentSample
    metric: MetricBlock
    spatial: SpatialMetric | None
    cartan: CartanTensor
    hv: HvMetric
    sigma: float | None = None


def signature_of(g: np.ndarray) -> tuple:
    ev = np.linalg.eigvalsh(0.5 * (g + g.T))
    return tuple(sorted((int(np.sign(e)) for e in ev), reverse=True))


def check_metric(g: np.ndarray) -> MetricBlock:
    d = float(np.linalg.det(g))
    if not np.all(np.isfinite(g)):
        raise DomainError("metric not finite")
    if abs(d) < SINGULAR_TOL:
        raise SingularMetricError(f"|det g| = {abs(d):.3e} below {SINGULAR_TOL}")
    sig = signature_of(g)
    if sig != SIGNATURE:
        raise SignatureError(f"metric signature {sig} is not (+,-,-,-)")
    return MetricBlock(g, d, sig)


def f2_jet(F: FundamentalFunction, p: TangentSample, order: int) -> Jet:
    return jets.eval_jet(F.F2, p, order)


def hessian_y(j: Jet) -> Jet:
    """0.5 d^2/dy dy of a scalar jet, as a 4x4 jet (order drops by two)."""
    return j.dy().dy() * 0.5


def metric_tensor(F: FundamentalFunction, p: TangentSample) -> MetricBlock:
    g = hessian_y(f2_jet(F, p, 2)).value
    return check_metric(0.5 * (g + g.T))


def cartan_tensor(F: FundamentalFunction, p: TangentSample) -> CartanTensor:
    g = hessian_y(f2_jet(F, p, 3))
    check_metric(g.value)
    ginv = np.linalg.inv(g.value)
    dg = g.dy().value  # dg[h, j, k] = d g_hj / d y^k
    return CartanTensor(0.5 * np.einsum("ih,hjk->ijk", ginv, dg))


def spatial_metric(m: MetricBlock) -> SpatialMetric:
    g = m.g
    g00 = g[0, 0]
    if g00 <= 0:
        raise FrameError("g00 must be positive for a spatial metric")
    gamma = -g[1:, 1:] + np.outer(g[0, 1:], g[0, 1:]) / g00
    dg = float(np.linalg.det(gamma))
    absg = abs(m.det_g)
    return SpatialMetric(gamma, dg, float(dg * g00 - absg), float(dg - math.sqrt(absg / g00)))


def hv_metric(g: np.ndarray, v: np.ndarray) -> HvMetric:
    G = np.zeros((8, 8))
    G[:4, :4] = g
    G[4:, 4:] = v
    return HvMetric(G, float(np.linalg.det(g) * np.linalg.det(v)))


def _batched_metric(F: FundamentalFunction, x, ys: np.ndarray) -> np.ndarray:
    """g_ij at many fiber points (ys has shape (B, 4)); returns (B, 4, 4)."""
    xs = [Jet.variable(k, np.full(len(ys), x[k]), 2) for k in range(4)]
    yv = [Jet.variable(4 + k, ys[:, k], 2) for k in range(4)]
    f2 = jets.asjet(F.F2(xs, yv), 2)
    if f2.shape != (len(ys),):
        f2 = Jet(np.broadcast_to(f2.coeffs, (len(ys), f2.coeffs.shape[-1])), 2)
    out = np.empty((len(ys), 4, 4))
    for i in range(4):
        for j in range(i, 4):
            out[:, i, j] = out[:, j, i] = 0.5 * f2.partial((4 + i, 4 + j))
    return out


def volume_density(F: FundamentalFunction, v: VerticalMetric, x, nodes: int = 16,
                   eps_y: float = 1e-8) -> VolumeDensity:
    """sigma(x): integral of sqrt|G| over the v-ball of radius BALL_RADIUS.

    Product Gauss-Legendre in hyperspherical coordinates.  Because g is
    0-homogeneous in y the integrand is constant along rays, so the metric is
    evaluated on the ``nodes**3`` angular nodes only and the radial factor
    (from eps_y to the radius) is integrated with the same rule.
    """
    x = tuple(float(c) for c in x)
    vm = v.matrix(x)
    Lc = np.linalg.cholesky(vm)
    t, w = np.polynomial.legendre.leggauss(nodes)
    psi = 0.5 * math.pi * (t + 1)
    wpsi = 0.5 * math.pi * w
    phi = math.pi * (t + 1)
    wphi = math.pi * w
    P, T, Ph = np.meshgrid(psi, psi, phi, indexing="ij")
    W = np.einsum("i,j,k->ijk", wpsi, wpsi, wphi) * np.sin(P) ** 2 * np.sin(T)
    u = np.stack([np.cos(P), np.sin(P) * np.cos(T), np.sin(P) * np.sin(T) * np.cos(Ph),
                  np.sin(P) * np.sin(T) * np.sin(Ph)], axis=-1).reshape(-1, 4)
    ys = np.linalg.solve(Lc.T, u.T).T  # v(y, y) = |u|^2
    try:
        g = _batched_metric(F, x, ys)
    except (DomainError, ValueError) as exc:
        raise QuadratureError(f"integrand not evaluable on the v-ball: {exc}") from exc
    dets = np.linalg.det(g)
    integrand = np.sqrt(np.abs(dets))
    if not np.all(np.isfinite(integrand)):
        raise QuadratureError("integrand non-finite at a quadrature node")
    tr, wr = np.polynomial.legendre.leggauss(max(2, nodes // 4))
    r0, r1 = eps_y, BALL_RADIUS
    rho = 0.5 * (r1 - r0) * (tr + 1) + r0
    radial = float(np.sum(0.5 * (r1 - r0) * wr * rho**3))
    # y = L^{-T} u  =>  d^4y = d^4u / sqrt(det v), cancelled by sqrt(det v) in sqrt|G|
    angular = float(np.sum(W.reshape(-1) * integrand))
    sigma = radial * angular
    excluded = angular * eps_y**4 / 4.0
    return VolumeDensity(sigma, excluded, nodes)


def geometry_sample(F: FundamentalFunction, v: VerticalMetric, p: TangentSample,
                    with_sigma: bool = False, nodes: int = 16) -> GeometrySample:
    m = metric_tensor(F, p)
    vm = v.matrix(p.x)
    try:
        spatial = spatial_metric(m)
    except FrameError:
        spatial = None  # e.g. Berwald-Moor, where g00 < 0 off the diagonal direction
    return GeometrySample(
        sample=p,
        metric=m,
        spatial=spatial,
        cartan=cartan_tensor(F, p),
        hv=hv_metric(m.g, vm),
        sigma=volume_density(F, v, p.x, nodes).sigma if with_sigma else None,
    )
