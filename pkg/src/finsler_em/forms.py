"""Differential forms on TM in the adapted cobasis (dx^i, dy^a + N^a_j dx^j).

Slots 0-3 are horizontal and 4-7 vertical.  A p-form is a dict from sorted
index tuples to scalar jets; ``{(0, 5): f}`` means ``f dx^0 ^ dy^1``, where the
vertical differential is the adapted one.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import jets
from .connection import Frame
from .jets import Jet

DIM = 8


class DegreeError(ValueError):
    pass


def perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq`` (0 if an index repeats)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _is_zero(c) -> bool:
    if isinstance(c, Jet):
        return not np.any(c.coeffs)
    return c == 0


@dataclass(frozen=True)
class AdaptedForm:
    degree: int
    comps: dict

    def __post_init__(self):
        if not 0 <= self.degree <= DIM:
            raise DegreeError(f"degree {self.degree} outside [0, 8]")
        for key in self.comps:
            if len(key) != self.degree or list(key) != sorted(set(key)):
                raise ValueError(f"component key {key} is not a sorted {self.degree}-index")

    @classmethod
    def zero(cls, degree: int) -> "AdaptedForm":
        return cls(degree, {})

    @classmethod
    def one_form(cls, h, v=None) -> "AdaptedForm":
        """From h-components (4-vector jet) and optional v-components."""
        comps = {(i,): h[i] for i in range(4)}
        if v is not None:
            comps.update({(4 + a,): v[a] for a in range(4)})
        return cls(1, comps)

    @classmethod
    def two_form(cls, hh=None, hv=None, vv=None) -> "AdaptedForm":
        """1/2 hh_ij dx^i^dx^j + hv_ia dx^i^dy^a + 1/2 vv_ab dy^a^dy^b."""
        comps = {}
        for i in range(4):
            for j in range(4):
                if hh is not None and i < j:
                    comps[(i, j)] = hh[i, j]
                if hv is not None:
                    comps[(i, 4 + j)] = hv[i, j]
                if vv is not None and i < j:
                    comps[(4 + i, 4 + j)] = vv[i, j]
        return cls(2, comps)

    def get(self, idx) -> object:
        """Component for an arbitrary index order, with the permutation sign."""
        s = perm_sign(idx)
        if s == 0:
            return 0.0
        c = self.comps.get(tuple(sorted(idx)), 0.0)
        return c if s > 0 else -c

    def block(self, kind: str) -> Jet:
        """Dense antisymmetric block of a 2-form: ``hh``, ``hv`` or ``vv``."""
        if self.degree != 2:
            raise DegreeError("blocks are defined for 2-forms")
        off = {"hh": (0, 0), "hv": (0, 4), "vv": (4, 4)}[kind]
        rows = [[self.get((off[0] + i, off[1] + j)) for j in range(4)] for i in range(4)]
        order = min((c.order for r in rows for c in r if isinstance(c, Jet)), default=jets.MAX_ORDER)
        return jets.stack([jets.stack([jets.asjet(c, order) for c in r]) for r in rows])

    def vector(self) -> Jet:
        if self.degree != 1:
            raise DegreeError("vector view needs a 1-form")
        cs = [self.comps.get((A,), 0.0) for A in range(DIM)]
        order = min((c.order for c in cs if isinstance(c, Jet)), default=jets.MAX_ORDER)
        return jets.stack([jets.asjet(c, order) for c in cs])

    def values(self) -> dict:
        return {k: (c.value if isinstance(c, Jet) else float(c)) for k, c in self.comps.items()}

    def max_abs(self) -> float:
        return max((abs(v) for v in self.values().values()), default=0.0)

    def __add__(self, other: "AdaptedForm") -> "AdaptedForm":
        if other.degree != self.degree:
            raise DegreeError("cannot add forms of different degree")
        return AdaptedForm(self.degree, _accumulate(list(self.comps.items()) + list(other.comps.items())))

    def __sub__(self, other: "AdaptedForm") -> "AdaptedForm":
        return self + other * -1.0

    def __mul__(self, s) -> "AdaptedForm":
        return AdaptedForm(self.degree, {k: c * s for k, c in self.comps.items()})

    __rmul__ = __mul__


@dataclass(frozen=True)
class AdaptedVector:
    h: Jet  # V^i
    v: Jet  # V^a

    def values(self) -> np.ndarray:
        return np.concatenate([np.atleast_1d(self.h.value), np.atleast_1d(self.v.value)])


def _accumulate(items) -> dict:
    out = {}
    for k, c in items:
        out[k] = out[k] + c if k in out else c
    return out


def wedge(a: AdaptedForm, b: AdaptedForm) -> AdaptedForm:
    if a.degree + b.degree > DIM:
        raise DegreeError("wedge product exceeds the top degree")
    items = []
    for I, ca in a.comps.items():
        for J, cb in b.comps.items():
            s = perm_sign(I + J)
            if s:
                items.append((tuple(sorted(I + J)), ca * cb if s > 0 else -(ca * cb)))
    return AdaptedForm(a.degree + b.degree, _accumulate(items))


# exterior derivative ------------------------------------------------------

def _dy_adapted(frame: Frame, a: int) -> AdaptedForm:
    """d(dy^a + N^a_j dx^j) in the adapted cobasis."""
    dN = frame.delta(frame.N)  # [a, j, k] = delta_k N^a_j
    items = []
    for j in range(4):
        for k in range(4):
            if k != j:
                items.append(((k, j), dN[a, j, k]))
        for b in range(4):
            items.append(((4 + b, j), frame.dyN[a, j, b]))
    comps = {}
    for idx, c in items:
        s = perm_sign(idx)
        key = tuple(sorted(idx))
        c = c if s > 0 else -c
        comps[key] = comps[key] + c if key in comps else c
    return AdaptedForm(2, comps)


def _d_scalar_adapted(frame: Frame, f) -> AdaptedForm:
    f = jets.asjet(f, frame.order)
    dh = frame.delta(f)
    dv = f.dy()
    comps = {(i,): dh[i] for i in range(4)}
    comps.update({(4 + a,): dv[a] for a in range(4)})
    return AdaptedForm(1, comps)


def exterior_derivative_adapted(w: AdaptedForm, frame: Frame) -> AdaptedForm:
    """d via the structure equations of the adapted cobasis."""
    if w.degree >= DIM:
        raise DegreeError("exterior derivative of a top-degree form")
    out = AdaptedForm.zero(w.degree + 1)
    dvert = {}
    for I, c in w.comps.items():
        out = out + wedge(_d_scalar_adapted(frame, c), AdaptedForm(w.degree, {I: 1.0}))
        # Leibniz over the basis factors: only vertical ones have nonzero d
        for pos, A in enumerate(I):
            if A < 4:
                continue
            if A not in dvert:
                dvert[A] = _dy_adapted(frame, A - 4)
            left = AdaptedForm(pos, {I[:pos]: 1.0})
            right = AdaptedForm(w.degree - pos - 1, {I[pos + 1:]: 1.0})
            term = wedge(wedge(left, dvert[A]), right) * ((-1) ** pos)
            out = out + term * c
    return out


def _basis_change(w: AdaptedForm, frame: Frame, to_natural: bool) -> AdaptedForm:
    """Rewrite a form between the adapted cobasis and (dx, dy).

    adapted -> natural substitutes dy_adapted^a = dy^a + N^a_j dx^j;
    natural -> adapted substitutes dy^a = dy_adapted^a - N^a_j dx^j.
    """
    s = 1.0 if to_natural else -1.0
    ones = {}
    for a in range(4):
        comps = {(4 + a,): 1.0}
        for j in range(4):
            n = frame.N[a, j]
            if not _is_zero(n):
                comps[(j,)] = n * s
        ones[4 + a] = AdaptedForm(1, comps)
    out = AdaptedForm.zero(w.degree)
    for I, c in w.comps.items():
        term = AdaptedForm(0, {(): c})
        for A in I:
            term = wedge(term, ones[A] if A >= 4 else AdaptedForm(1, {(A,): 1.0}))
        out = out + term
    return out


def exterior_derivative_natural(w: AdaptedForm, frame: Frame) -> AdaptedForm:
    """d by converting to (dx, dy), differentiating with plain partials, converting back."""
    if w.degree >= DIM:
        raise DegreeError("exterior derivative of a top-degree form")
    nat = _basis_change(w, frame, to_natural=True)
    items = []
    for I, c in nat.comps.items():
        c = jets.asjet(c, frame.order)
        for m in range(DIM):
            if m in I:
                continue
            s = perm_sign((m,) + I)
            dc = c.deriv(m)
            items.append((tuple(sorted((m,) + I)), dc if s > 0 else -dc))
    return _basis_change(AdaptedForm(w.degree + 1, _accumulate(items)), frame, to_natural=False)


def exterior_derivative(w: AdaptedForm, frame: Frame, route: str = "natural") -> AdaptedForm:
    if route == "natural":
        return exterior_derivative_natural(w, frame)
    if route == "adapted":
        return exterior_derivative_adapted(w, frame)
    raise ValueError(f"unknown route {route!r}")


# Hodge dual ---------------------------------------------------------------

def _det_small(m) -> object:
    n = len(m)
    if n == 0:
        return 1.0
    total = None
    for perm in itertools.permutations(range(n)):
        t = perm_sign(perm)
        prod = m[0][perm[0]]
        for r in range(1, n):
            prod = prod * m[r][perm[r]]
        prod = prod * t
        total = prod if total is None else total + prod
    return total


def _compound(frame: Frame, which: str, k: int) -> dict:
    """Minors of g^{-1} or v^{-1}: {(I, J): det M[I, J]} over sorted k-subsets of 0..3."""
    key = (which, k)
    memo = frame.__dict__.setdefault("_compound", {})
    if key not in memo:
        m = frame.ginv if which == "g" else frame.vinv
        subs = list(itertools.combinations(range(4), k))
        memo[key] = {(I, J): _det_small([[m[i, j] for j in J] for i in I]) for I in subs for J in subs}
    return memo[key]


def raise_indices(w: AdaptedForm, frame: Frame) -> dict:
    """Contravariant components w^I for sorted I, using the block inverse metric."""
    out = {}
    for I, c in w.comps.items():
        Ih = tuple(A for A in I if A < 4)
        Iv = tuple(A - 4 for A in I if A >= 4)
        ch, cv = _compound(frame, "g", len(Ih)), _compound(frame, "v", len(Iv))
        for K in itertools.combinations(range(4), len(Ih)):
            for Lv in itertools.combinations(range(4), len(Iv)):
                key = K + tuple(4 + b for b in Lv)
                t = c * ch[(K, Ih)] * cv[(Lv, Iv)]
                out[key] = out[key] + t if key in out else t
    return out


def hodge_dual(w: AdaptedForm, frame: Frame) -> AdaptedForm:
    """Hodge dual for G = g + v with orientation dx^0..dx^3 ^ dy^0..dy^3 = +1."""
    comps = {}
    for I, c in raise_indices(w, frame).items():
        Ic = tuple(A for A in range(DIM) if A not in I)
        t = c * frame.sqrt_G * perm_sign(I + Ic)
        comps[Ic] = comps[Ic] + t if Ic in comps else t
    return AdaptedForm(DIM - w.degree, comps)


def hodge_sign(frame: Frame) -> int:
    return frame.sign_g  # v is positive definite, so sign det G = sign det g


def inverse_hodge(w: AdaptedForm, frame: Frame) -> AdaptedForm:
    q = w.degree
    return hodge_dual(w, frame) * (hodge_sign(frame) * (-1) ** (q * (DIM - q)))


def codifferential(w: AdaptedForm, frame: Frame, route: str = "natural") -> AdaptedForm:
    """(-1)^p *^{-1} d * w."""
    if w.degree == 0:
        raise DegreeError("codifferential of a 0-form")
    inner = exterior_derivative(hodge_dual(w, frame), frame, route)
    return inverse_hodge(inner, frame) * ((-1) ** w.degree)


def _raise_2form(xi: AdaptedForm, frame: Frame):
    hh, hv, vv = xi.block("hh"), xi.block("hv"), xi.block("vv")
    g, v = frame.ginv, frame.vinv
    up_hh = jets.einsum("ik,kj->ij", g, jets.einsum("kl,jl->kj", hh, g))
    up_hv = jets.einsum("ik,kb->ib", g, jets.einsum("kd,bd->kb", hv, v))
    up_vv = jets.einsum("ac,cb->ab", v, jets.einsum("cd,bd->cb", vv, v))
    return up_hh, up_hv, up_vv


def codifferential_2form(xi: AdaptedForm, frame: Frame) -> AdaptedVector:
    """Contravariant components of the codifferential from the local component formulas."""
    fr = frame
    up_hh, up_hv, up_vv = _raise_2form(xi, fr)
    up_vh = up_hv.T * -1.0  # xi^{a j}
    sG = fr.sqrt_G
    div_h = _trace_last(fr.delta(up_hh * sG)) + _trace_last((up_hv * sG).dy())
    div_v = _trace_last(fr.delta(up_vh * sG)) + _trace_last((up_vv * sG).dy())
    inv_sG = 1.0 / sG
    w_h = div_h * inv_sG - jets.einsum("ij,j->i", up_hh, fr.trN)
    w_v = (div_v * inv_sG
           - jets.einsum("jk,ajk->a", up_hh, fr.R) * 0.5
           - jets.einsum("aj,j->a", up_vh, fr.trN)
           + jets.einsum("kj,ajk->a", up_vh, fr.dyN))
    return AdaptedVector(w_h, w_v)


def _trace_last(t: Jet) -> Jet:
    """t[..., j, j] summed: contracts the last two tensor axes."""
    return Jet(np.trace(t.coeffs, axis1=t.coeffs.ndim - 3, axis2=t.coeffs.ndim - 2), t.order)


def lower(V: AdaptedVector, frame: Frame) -> AdaptedForm:
    return AdaptedForm.one_form(jets.einsum("ij,j->i", frame.g, V.h), jets.einsum("ab,b->a", frame.v, V.v))


def raise_1form(w: AdaptedForm, frame: Frame) -> AdaptedVector:
    vec = w.vector()
    return AdaptedVector(jets.einsum("ij,j->i", frame.ginv, vec[:4]),
                         jets.einsum("ab,b->a", frame.vinv, vec[4:]))


# divergence ---------------------------------------------------------------

def divergence(V: AdaptedVector, frame: Frame) -> Jet:
    """Adapted-frame component formula."""
    fr = frame
    sG = fr.sqrt_G
    d = _trace_last(fr.delta(V.h * sG)) + _trace_last((V.v * sG).dy())
    return d / sG - jets.einsum("i,i->", fr.trN, V.h)


def divergence_coordinate_free(V: AdaptedVector, frame: Frame, route: str = "natural") -> Jet:
    """d(i_V vol) / sqrt|G| with vol = sqrt|G| e^0 ^ ... ^ e^7."""
    comps = {}
    full = tuple(range(DIM))
    for A in range(DIM):
        c = V.h[A] if A < 4 else V.v[A - 4]
        comps[full[:A] + full[A + 1:]] = c * frame.sqrt_G * ((-1) ** A)
    top = exterior_derivative(AdaptedForm(DIM - 1, comps), frame, route)
    return jets.asjet(top.comps.get(full, 0.0), 0) / frame.sqrt_G


def divergence_canonical(V: AdaptedVector, frame: Frame) -> Jet:
    """V^i_{|i} + V^a_{.a} + V^a C^j_{ja}; valid for the canonical connection with v = v(x)."""
    fr = frame
    return (_trace_last(fr.cov_h(V.h, "H")) + _trace_last(V.v.dy())
            + jets.einsum("a,a->", V.v, jets.Jet(np.einsum("jja...->a...", fr.C.coeffs), fr.C.order)))


def divergence_horizontal(Vh: Jet, frame: Frame) -> Jet:
    """V^i_{|i} - P^j_{ij} V^i for a purely horizontal field."""
    Ptr = Jet(np.einsum("jij...->i...", frame.P.coeffs), frame.P.order)
    return _trace_last(frame.cov_h(Vh, "H")) - jets.einsum("i,i->", Ptr, Vh)
