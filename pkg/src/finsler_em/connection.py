"""Ehresmann connections, the adapted frame and the distinguished connection.

Index layout of the arrays returned here (a, b, ... are fiber indices):

    N[a, j]       N^a_j
    dyN[a, j, b]  N^a_{j.b} = dN^a_j / dy^b
    L_h[i, j, k]  L^i_{jk}
    L_v[a, b, k]  L^a_{b k}
    R[a, j, k]    R^a_{jk} = delta_k N^a_j - delta_j N^a_k
    P[a, j, k]    P^a_{j k} = N^a_{j.k} - L^a_{k j}
    C[i, j, k]    C^i_{j k} = 1/2 g^{ih} dg_{hj}/dy^k
"""
from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

from . import expressions as ex
from . import jets
from .geometry import (FundamentalFunction, SingularMetricError, VerticalMetric, _matrix_trees,
                       check_metric, eval_matrix, hessian_y)
from .jets import Jet, TangentSample

DEFAULT_ORDER = 4


@dataclass(frozen=True)
class EhresmannConnection:
    """Nonlinear connection coefficients N^a_j(x, y).

    ``trivial`` is N = 0, ``canonical`` is built from the Christoffel symbols
    of the vertical metric, and ``user`` evaluates expression trees.  User
    connections are not checked for any integrability property.
    """

    kind: str
    vertical: VerticalMetric | None = None
    trees: tuple | None = None
    params: dict = field(default_factory=dict, compare=False)

    @classmethod
    def trivial(cls) -> "EhresmannConnection":
        return cls("trivial", params={"kind": "trivial"})

    @classmethod
    def canonical(cls, v: VerticalMetric) -> "EhresmannConnection":
        return cls("canonical", vertical=v, params={"kind": "canonical"})

    @classmethod
    def user(cls, m) -> "EhresmannConnection":
        return cls("user", trees=_matrix_trees(m), params={"kind": "user", "N": m})

    @classmethod
    def from_doc(cls, doc: dict, v: VerticalMetric) -> "EhresmannConnection":
        kind = doc.get("kind", "canonical")
        if kind == "trivial":
            return cls.trivial()
        if kind == "canonical":
            return cls.canonical(v)
        if kind == "user":
            return cls.user(doc["N"])
        raise ValueError(f"unknown connection kind {kind!r}")

    @property
    def checked(self) -> bool:
        return self.kind != "user"

    def jet(self, xs, ys, order: int) -> Jet:
        """N[a, j] as a jet of the given order."""
        if self.kind == "trivial":
            return Jet.constant(np.zeros((4, 4)), order)
        if self.kind == "user":
            return eval_matrix(self.trees, xs, ys, order)
        vj = self.vertical.jet([x.truncate(order + 1) if isinstance(x, Jet) else x for x in xs], order + 1)
        gam = christoffel(vj)
        y = jets.stack([yy.truncate(order) for yy in ys])
        return jets.einsum("ajk,k->aj", gam, y)

    def value(self, p: TangentSample) -> np.ndarray:
        xs, ys = p.variables(2)
        return self.jet(xs, ys, 1).value


def christoffel(m: Jet) -> Jet:
    """Christoffel symbols gam[a, j, k] of an x-dependent matrix jet (order drops by one)."""
    dm = m.dx()  # dm[h, j, l] = d_l m_hj
    minv = jets.inv(m.truncate(dm.order))
    low = (dm + dm.swapaxes(1, 2) - Jet(np.moveaxis(dm.coeffs, 2, 0), dm.order)) * 0.5
    return jets.einsum("ah,hjk->ajk", minv, low)


class Frame:
    """All geometric jets at one tangent sample.

    Built once per (F, v, N, p); instances are immutable after construction
    so they can be shared between threads.
    """

    def __init__(self, F: FundamentalFunction, v: VerticalMetric, N: EhresmannConnection,
                 p: TangentSample, order: int = DEFAULT_ORDER):
        if order < 3:
            raise jets.OrderError("a frame needs base order >= 3")
        self.F, self.vm, self.conn, self.p, self.order = F, v, N, p, order
        self.xs, self.ys = p.variables(order)
        self.F2 = jets.asjet(F.F2(self.xs, self.ys), order)
        g = hessian_y(self.F2)
        self.g = (g + g.T) * 0.5
        self.metric = check_metric(self.g.value)
        self.ginv = jets.inv(self.g)
        self.sign_g, self.log_sqrt_g = jets.logabsdet(self.g)
        self.log_sqrt_g = self.log_sqrt_g * 0.5
        self.v = self.vm.jet(self.xs, order)
        try:
            np.linalg.cholesky(self.v.value)
        except np.linalg.LinAlgError as exc:
            raise SingularMetricError("vertical metric is not positive definite") from exc
        self.vinv = jets.inv(self.v)
        self.log_sqrt_v = jets.logabsdet(self.v)[1] * 0.5
        self.log_sqrt_G = self.log_sqrt_g + self.log_sqrt_v
        self.sqrt_G = jets.exp(self.log_sqrt_G)

        self.N = N.jet(self.xs, self.ys, order - 1)
        self.dyN = self.N.dy()
        self.trN = jets.Jet(np.einsum("kjk...->j...", self.dyN.coeffs), self.dyN.order)  # N^k_{j.k}

        dg = self.delta(self.g)  # dg[h, j, k] = delta_k g_hj
        low = (dg + dg.swapaxes(1, 2) - Jet(np.moveaxis(dg.coeffs, 2, 0), dg.order)) * 0.5
        self.L_h = jets.einsum("ih,hjk->ijk", self.ginv, low)

        dv = self.delta(self.v)  # dv[h, b, k] = delta_k v_hb
        dyN_kb = self.dyN.swapaxes(1, 2)  # [l, b, k] = N^l_{k.b}
        t = dv - jets.einsum("lbk,lh->hbk", dyN_kb, self.v) - jets.einsum("lhk,lb->hbk", dyN_kb, self.v)
        self.L_v = dyN_kb + jets.einsum("ah,hbk->abk", self.vinv, t) * 0.5

        dN = self.delta(self.N)  # dN[a, j, k] = delta_k N^a_j
        self.R = dN - dN.swapaxes(1, 2)
        self.P = self.dyN - self.L_v.swapaxes(1, 2)
        self.C = jets.einsum("ih,hjk->ijk", self.ginv, self.g.dy()) * 0.5

    # operators --------------------------------------------------------
    def delta(self, f: Jet) -> Jet:
        """Adapted horizontal derivative, appended as a trailing index."""
        f = jets.asjet(f, self.order)
        return f.dx() - jets.einsum("...a,ai->...i", f.dy(), self.N)

    def cov_h(self, t: Jet, kinds: str) -> Jet:
        """Horizontal covariant derivative T_{...|k} (new trailing index k).

        ``kinds`` gives each tensor slot: ``H``/``h`` horizontal upper/lower,
        ``V``/``v`` vertical upper/lower.
        """
        if len(kinds) != len(t.shape):
            raise ValueError("one kind letter per tensor index")
        out = self.delta(t)
        letters = string.ascii_lowercase[: len(kinds)]
        k, s = "z", "y"
        for pos, kind in enumerate(kinds):
            src = letters[:pos] + s + letters[pos + 1:]
            res = letters + k
            if kind == "H":
                out = out + jets.einsum(f"{letters[pos]}{s}{k},{src}->{res}", self.L_h, t)
            elif kind == "h":
                out = out - jets.einsum(f"{s}{letters[pos]}{k},{src}->{res}", self.L_h, t)
            elif kind == "V":
                out = out + jets.einsum(f"{letters[pos]}{s}{k},{src}->{res}", self.L_v, t)
            elif kind == "v":
                out = out - jets.einsum(f"{s}{letters[pos]}{k},{src}->{res}", self.L_v, t)
            else:
                raise ValueError(f"unknown index kind {kind!r}")
        return out

    @staticmethod
    def cov_v(t: Jet) -> Jet:
        """Vertical covariant derivative: plain y-derivative for this connection."""
        return t.dy()


# value-level records ----------------------------------------------------

@dataclass(frozen=True)
class LinearConnectionCoeffs:
    L_h: np.ndarray
    L_v: np.ndarray


@dataclass(frozen=True)
class TorsionComponents:
    R: np.ndarray
    P: np.ndarray


@dataclass(frozen=True)
class DetIdentityResiduals:
    horizontal: np.ndarray  # delta_j ln sqrt|g| - L^i_{ji}
    vertical: np.ndarray  # delta_j ln sqrt|v| - N^k_{j.k} + P^k_{jk}
    cartan_trace: np.ndarray  # d ln sqrt|g| / dy^j - C^i_{ij}

    @property
    def max_abs(self) -> float:
        return float(max(np.abs(self.horizontal).max(), np.abs(self.vertical).max(),
                         np.abs(self.cartan_trace).max()))


def canonical_connection(v: VerticalMetric, p: TangentSample) -> np.ndarray:
    return EhresmannConnection.canonical(v).value(p)


def adapted_derivative(f, N: EhresmannConnection, p: TangentSample, i: int) -> float:
    """delta_i f = df/dx^i - N^a_i df/dy^a for a scalar function f(x, y)."""
    jf = jets.eval_jet(f, p, 1)
    xs, ys = p.variables(2)
    n = N.jet(xs, ys, 1).value
    return float(jf.partial((i,)) - sum(n[a, i] * jf.partial((4 + a,)) for a in range(4)))


def linear_connection(F, v, N, p, order: int = 3) -> LinearConnectionCoeffs:
    fr = Frame(F, v, N, p, order)
    return LinearConnectionCoeffs(fr.L_h.value, fr.L_v.value)


def torsion(F, v, N, p, order: int = 3) -> TorsionComponents:
    fr = Frame(F, v, N, p, order)
    return TorsionComponents(fr.R.value, fr.P.value)


def det_derivative_identities(frame: Frame) -> DetIdentityResiduals:
    fr = frame
    d_lg = fr.delta(fr.log_sqrt_g).value
    d_lv = fr.delta(fr.log_sqrt_v).value
    L_tr = np.einsum("iji->j", fr.L_h.value)
    P_tr = np.einsum("iji->j", fr.P.value)  # P^k_{jk}
    C_tr = np.einsum("iij->j", fr.C.value)
    dy_lg = fr.log_sqrt_g.dy().value
    return DetIdentityResiduals(d_lg - L_tr, d_lv - fr.trN.value + P_tr, dy_lg - C_tr)


def metricity(frame: Frame) -> tuple[np.ndarray, np.ndarray]:
    """(g_{ij|k}, v_{ab|k}) at the sample; both vanish for this connection."""
    return frame.cov_h(frame.g, "hh").value, frame.cov_h(frame.v, "vv").value
