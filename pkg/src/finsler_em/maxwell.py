"""Potentials, the Faraday form, currents and the Maxwell identities on TM."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expressions as ex
from . import forms, jets
from .connection import Frame
from .geometry import FundamentalFunction
from .jets import Jet, TangentSample

C_LIGHT = 1.0
X_VARS = ("x0", "x1", "x2", "x3")


def _tree(v) -> ex.Node:
    if isinstance(v, (int, float)):
        return ex.Num(float(v))
    return ex.parse_expression(v) if isinstance(v, str) else v


@dataclass(frozen=True)
class PotentialField:
    """Horizontal 1-form A = A_i(x, y) dx^i given by four expression trees.

    ``homogeneous0`` and ``gauge`` are declarations; the check suite tests them.
    """

    name: str
    trees: tuple
    homogeneous0: bool = True
    gauge: str = "none"
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, x, y):
        return [ex.evaluate(t, x, y) for t in self.trees]

    def jet(self, xs, ys, order: int) -> Jet:
        return jets.stack([jets.asjet(c, order) for c in self(xs, ys)])

    def value(self, p: TangentSample) -> np.ndarray:
        return np.array([float(c) for c in self(list(p.x), list(p.y))])

    @property
    def depends_on_y(self) -> bool:
        return any(v.startswith("y") for t in self.trees for v in ex.free_variables(t))

    # catalog ----------------------------------------------------------
    @classmethod
    def zero(cls) -> "PotentialField":
        return cls("zero", (ex.Num(0.0),) * 4, True, "gradient", {"kind": "zero"})

    @classmethod
    def plane_wave(cls, amplitude: float = 0.1, omega: float = 1.0) -> "PotentialField":
        """A_2 = a cos(omega (x0 - x1)); a vacuum wave on the Minkowski background."""
        a2 = ex.parse_expression(f"{amplitude!r} * cos({omega!r} * (x0 - x1))")
        return cls("plane_wave", (ex.Num(0.0), ex.Num(0.0), a2, ex.Num(0.0)), True, "gradient",
                   {"kind": "plane_wave", "amplitude": amplitude, "omega": omega})

    @classmethod
    def coulomb(cls, charge: float = 1.0) -> "PotentialField":
        a0 = ex.parse_expression(f"{charge!r} / sqrt(x1^2 + x2^2 + x3^2)")
        return cls("coulomb", (a0, ex.Num(0.0), ex.Num(0.0), ex.Num(0.0)), True, "gradient",
                   {"kind": "coulomb", "charge": charge})

    @classmethod
    def constant_field(cls, E: float = 0.1) -> "PotentialField":
        """A_1 = E x0, so that F_01 = E."""
        a1 = ex.parse_expression(f"{E!r} * x0")
        return cls("constant_field", (ex.Num(0.0), a1, ex.Num(0.0), ex.Num(0.0)), True, "gradient",
                   {"kind": "constant_field", "E": E})

    @classmethod
    def unit_direction(cls, F: FundamentalFunction, k: float = 0.1, phi: str = "1") -> "PotentialField":
        """A_i = k phi(x) dF/dy^i = k phi(x) y_i / F: 0-homogeneous and in gradient gauge."""
        ph = ex.parse_expression(phi)
        if ex.free_variables(ph) - set(X_VARS):
            raise ValueError("phi may depend on x only")
        trees = tuple(ex.BinOp("*", ex.BinOp("*", ex.Num(k), ph), ex.diff(F.F_tree, f"y{i}"))
                      for i in range(4))
        return cls("unit_direction", trees, True, "gradient",
                   {"kind": "unit_direction", "k": k, "phi": phi})

    @classmethod
    def from_expressions(cls, comps, homogeneous0: bool = False, gauge: str = "none") -> "PotentialField":
        if len(comps) != 4:
            raise ValueError("a potential needs four components")
        return cls("expression", tuple(_tree(c) for c in comps), homogeneous0, gauge,
                   {"kind": "expression", "A": [c if isinstance(c, (str, int, float)) else ex.to_text(c)
                                                for c in comps],
                    "homogeneous0": homogeneous0, "gauge": gauge})

    @classmethod
    def from_doc(cls, doc: dict, F: FundamentalFunction) -> "PotentialField":
        kind = doc.get("kind", "zero")
        if kind == "zero":
            return cls.zero()
        if kind == "plane_wave":
            return cls.plane_wave(doc.get("amplitude", 0.1), doc.get("omega", 1.0))
        if kind == "coulomb":
            return cls.coulomb(doc.get("charge", 1.0))
        if kind == "constant_field":
            return cls.constant_field(doc.get("E", 0.1))
        if kind == "unit_direction":
            return cls.unit_direction(F, doc.get("k", 0.1), doc.get("phi", "1"))
        if kind == "expression":
            return cls.from_expressions(doc["A"], doc.get("homogeneous0", False), doc.get("gauge", "none"))
        raise ValueError(f"unknown potential kind {kind!r}")


@dataclass(frozen=True)
class ScalarOnBase:
    tree: ex.Node

    def __post_init__(self):
        if ex.free_variables(self.tree) - set(X_VARS):
            raise ValueError("a gauge function may depend on x only")

    @classmethod
    def parse(cls, text: str) -> "ScalarOnBase":
        return cls(ex.parse_expression(text))


def gauge_transform(A: PotentialField, lam: ScalarOnBase) -> PotentialField:
    trees = tuple(ex.BinOp("+", t, ex.diff(lam.tree, f"x{i}")) for i, t in enumerate(A.trees))
    return PotentialField(A.name + "+dlambda", trees, A.homogeneous0, A.gauge,
                          {**A.params, "gauge_shift": ex.to_text(lam.tree)})


# Faraday form ---------------------------------------------------------

@dataclass(frozen=True)
class FaradayField:
    F_hh: Jet  # F_ij
    F_hv: Jet  # F_{i jbar}

    def as_form(self) -> forms.AdaptedForm:
        return forms.AdaptedForm.two_form(hh=self.F_hh, hv=self.F_hv)

    def values(self) -> tuple[np.ndarray, np.ndarray]:
        return self.F_hh.value, self.F_hv.value


def potential_jet(A: PotentialField, frame: Frame) -> Jet:
    return A.jet(frame.xs, frame.ys, frame.order)


def faraday(A: PotentialField, frame: Frame) -> FaradayField:
    """F_ij = delta_i A_j - delta_j A_i, F_{i jbar} = -dA_i/dy^j."""
    a = potential_jet(A, frame)
    dA = frame.delta(a)  # [j, i] = delta_i A_j
    return FaradayField(dA.T - dA, -a.dy())


def faraday_covariant(A: PotentialField, frame: Frame) -> FaradayField:
    a = potential_jet(A, frame)
    cov = frame.cov_h(a, "h")  # [j, i] = A_{j|i}
    return FaradayField(cov.T - cov, -frame.cov_v(a))


def faraday_coordinate_free(A: PotentialField, frame: Frame) -> forms.AdaptedForm:
    return forms.exterior_derivative(forms.AdaptedForm.one_form(potential_jet(A, frame)), frame)


@dataclass(frozen=True)
class HomogeneousReport:
    dF: float  # max |dF| over all 3-form components
    set1: np.ndarray  # cyclic hh identity with R terms, [i, j, k]
    set2: np.ndarray  # mixed identity with P terms, [a, j, k]
    set3: np.ndarray  # F_{k a.b} + F_{b k.a}, [k, a, b]
    set2_reduced: np.ndarray | None  # canonical-connection form without P terms

    @property
    def max_abs(self) -> float:
        vals = [self.dF, np.abs(self.set1).max(), np.abs(self.set2).max(), np.abs(self.set3).max()]
        if self.set2_reduced is not None:
            vals.append(np.abs(self.set2_reduced).max())
        return float(max(vals))


def check_homogeneous_maxwell(F: FaradayField, frame: Frame) -> HomogeneousReport:
    fr = frame
    dF = forms.exterior_derivative(F.as_form(), fr).max_abs()
    hh, hv = F.F_hh, F.F_hv
    cov_hh = fr.cov_h(hh, "hh").value  # [i, j, k] = F_{ij|k}
    R, P = fr.R.value, fr.P.value
    Fhv = hv.value
    cyc = cov_hh + np.transpose(cov_hh, (1, 2, 0)) + np.transpose(cov_hh, (2, 0, 1))
    # sum over cyclic (i, j, k) of R^h_{jk} F_{ih}
    rf = np.einsum("hjk,ih->ijk", R, Fhv)
    rhs1 = -(rf + np.transpose(rf, (1, 2, 0)) + np.transpose(rf, (2, 0, 1)))
    set1 = cyc - rhs1

    vh = hv.T * -1.0  # F_{a j}
    cov_vh = fr.cov_h(vh, "vh").value  # [a, j, k] = F_{aj|k}
    cov_hv = fr.cov_h(hv, "hv").value  # [k, a, j] = F_{ka|j}
    dy_hh = hh.dy().value  # [j, k, a] = F_{jk.a}
    lhs2 = cov_vh + np.einsum("kaj->ajk", cov_hv) + np.einsum("jka->ajk", dy_hh)
    rhs2 = np.einsum("hja,kh->ajk", P, Fhv) - np.einsum("hka,jh->ajk", P, Fhv)
    set2 = lhs2 - rhs2
    dy_hv = hv.dy().value  # [k, a, b] = F_{ka.b}
    set3 = dy_hv - dy_hv.swapaxes(1, 2)
    reduced = lhs2 if fr.conn.kind == "canonical" else None
    return HomogeneousReport(float(dF), set1, set2, set3, reduced)


# currents -------------------------------------------------------------

@dataclass(frozen=True)
class CurrentField:
    J_h: Jet
    J_v: Jet
    c: float = C_LIGHT
    rho: float | None = None

    def as_vector(self) -> forms.AdaptedVector:
        return forms.AdaptedVector(self.J_h, self.J_v)

    def values(self) -> np.ndarray:
        return np.concatenate([self.J_h.value, self.J_v.value])


@dataclass(frozen=True)
class QTerms:
    Q_h: np.ndarray
    Q_v: np.ndarray


@dataclass(frozen=True)
class CurrentRoutes:
    """The current from each route, as plain arrays of 8 contravariant components."""

    components: np.ndarray
    definitional: np.ndarray
    local: np.ndarray
    variational: np.ndarray
    simplified: np.ndarray | None
    Q: QTerms
    Q_simplified: QTerms | None


def _raised(F: FaradayField, frame: Frame):
    g, v = frame.ginv, frame.vinv
    up_hh = jets.einsum("ik,kj->ij", g, jets.einsum("kl,jl->kj", F.F_hh, g))
    up_hv = jets.einsum("ik,kb->ib", g, jets.einsum("kd,bd->kb", F.F_hv, v))
    return up_hh, up_hv


def current_from_field(F: FaradayField, frame: Frame, c: float = C_LIGHT) -> CurrentField:
    """J = -(c / 4 pi) (delta F)^sharp, using the component formula for the codifferential."""
    w = forms.codifferential_2form(F.as_form(), frame)
    s = -c / (4 * math.pi)
    return CurrentField(w.h * s, w.v * s, c)


def q_terms(F: FaradayField, frame: Frame) -> QTerms:
    fr = frame
    up_hh, up_hv = (t.value for t in _raised(F, fr))
    P, R = fr.P.value, fr.R.value
    Ptr = np.einsum("kjk->j", P)  # P^k_{jk}
    dlnG = fr.log_sqrt_G.dy().value
    Qh = -up_hh @ Ptr + up_hv @ dlnG
    up_vh = -up_hv.T
    Qv = (-0.5 * np.einsum("jk,ajk->a", up_hh, R) - np.einsum("jk,ajk->a", up_hv, P)
          - up_vh @ Ptr)
    return QTerms(Qh, Qv)


def current_routes(F: FaradayField, frame: Frame, c: float = C_LIGHT) -> CurrentRoutes:
    fr = frame
    s = -c / (4 * math.pi)
    disp = current_from_field(F, fr, c).values()
    defn = forms.raise_1form(forms.codifferential(F.as_form(), fr), fr).values() * s

    up_hh, up_hv = _raised(F, fr)
    up_vh = up_hv.T * -1.0
    Q = q_terms(F, fr)
    div_hh = np.einsum("ijj->i", fr.cov_h(up_hh, "HH").value)  # F^{ij}_{|j}
    div_hv = np.einsum("ijj->i", up_hv.dy().value)  # F^{ij}_{.j}
    div_vh = np.einsum("ajj->a", fr.cov_h(up_vh, "VH").value)  # F^{aj}_{|j}
    local = np.concatenate([div_hh + div_hv + Q.Q_h, div_vh + Q.Q_v]) * s

    # variational form; the ";j" derivative is taken as delta_j
    sG = fr.sqrt_G
    t1 = np.einsum("ijj->i", fr.delta(up_hh * sG).value)
    t2 = np.einsum("ijj->i", (up_hv * sG).dy().value)
    var_h = (t1 + t2) / sG.value - up_hh.value @ fr.trN.value
    variational = np.concatenate([var_h * s, disp[4:]])

    simplified = Q_simple = None
    if fr.conn.kind == "canonical":
        Ctr = np.einsum("lla->a", fr.C.value)
        Q_simple = QTerms(up_hv.value @ Ctr, -0.5 * np.einsum("jk,ajk->a", up_hh.value, fr.R.value))
        simplified = np.concatenate([div_hh + div_hv + Q_simple.Q_h, div_vh + Q_simple.Q_v]) * s
    return CurrentRoutes(disp, defn, local, variational, simplified, Q, Q_simple)


def matter_current(rho: float, g00: float, y, c: float = C_LIGHT) -> np.ndarray:
    """J^i = rho c / sqrt(g00) dx^i/dx^0 for matter moving with direction y."""
    y = np.asarray(y, dtype=float)
    if g00 <= 0 or y[0] == 0:
        raise ValueError("need g00 > 0 and y^0 != 0")
    return rho * c / math.sqrt(g00) * y / y[0]


@dataclass(frozen=True)
class ContinuityResidual:
    div_J: float
    scale: float

    @property
    def scaled(self) -> float:
        return abs(self.div_J) / self.scale


def check_continuity(J: CurrentField, frame: Frame) -> ContinuityResidual:
    d = forms.divergence(J.as_vector(), frame)
    # size of the individual terms that cancel in div J
    sG = frame.sqrt_G
    terms = np.concatenate([
        frame.delta(J.J_h * sG).value.ravel() / sG.value,
        (J.J_v * sG).dy().value.ravel() / sG.value,
        J.values(),
    ])
    return ContinuityResidual(float(d.value), max(1.0, float(np.abs(terms).max())))


@dataclass(frozen=True)
class GaugeResidual:
    contracted: np.ndarray  # A_{k.i} y^k
    potential_form: np.ndarray  # A_i - d(A_k y^k)/dy^i
    homogeneity: np.ndarray  # A_{i.k} y^k

    @property
    def max_abs(self) -> float:
        return float(max(np.abs(self.contracted).max(), np.abs(self.potential_form).max()))


def check_gradient_gauge(A: PotentialField, p: TangentSample) -> GaugeResidual:
    xs, ys = p.variables(2)
    a = A.jet(xs, ys, 2)
    y = np.array(p.y)
    dA = a.dy().value  # [k, i] = A_{k.i}
    ay = jets.einsum("k,k->", a, jets.stack(ys))
    return GaugeResidual(y @ dA, a.value - ay.dy().value, dA @ y)
