"""Truncated multivariate Taylor arithmetic on the tangent bundle.

A :class:`Jet` carries the Taylor coefficients (up to total degree 4) of a
tensor-valued function of the eight coordinates ``(x0..x3, y0..y3)`` around a
fixed point.  Arithmetic and elementary functions act on the coefficient
arrays, so every derivative needed downstream is exact up to rounding.
Differentiating a jet lowers its order by one; combining jets of different
orders truncates to the smaller one.

A central finite-difference estimator, :func:`fd_derivative`, is kept as an
independent oracle for the tests.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

MAX_ORDER = 4
NVARS = 8
VAR_NAMES = ("x0", "x1", "x2", "x3", "y0", "y1", "y2", "y3")


class DomainError(ValueError):
    """Function not evaluable (or not differentiable) at the requested point."""


class OrderError(ValueError):
    """Requested derivative order outside what the jet carries."""


def _build_monomials():
    mons = []
    for deg in range(MAX_ORDER + 1):
        for combo in itertools.combinations_with_replacement(range(NVARS), deg):
            e = [0] * NVARS
            for v in combo:
                e[v] += 1
            mons.append(tuple(e))
    return mons


MONOMIALS = _build_monomials()
MONO_INDEX = {m: i for i, m in enumerate(MONOMIALS)}
NCOEF = [math.comb(NVARS + k, k) for k in range(MAX_ORDER + 1)]
_FACT = np.array([math.prod(math.factorial(a) for a in m) for m in MONOMIALS], dtype=float)


@lru_cache(maxsize=None)
def _mult_table(order: int):
    """Pairs (ia, ib) whose product lands on monomial io, sorted by io."""
    n = NCOEF[order]
    ia, ib, io = [], [], []
    for a in range(n):
        ma = MONOMIALS[a]
        da = sum(ma)
        for b in range(n):
            mb = MONOMIALS[b]
            if da + sum(mb) > order:
                continue
            ia.append(a)
            ib.append(b)
            io.append(MONO_INDEX[tuple(p + q for p, q in zip(ma, mb))])
    ia, ib, io = map(np.asarray, (ia, ib, io))
    perm = np.argsort(io, kind="stable")
    ia, ib, io = ia[perm], ib[perm], io[perm]
    starts = np.searchsorted(io, np.arange(n))
    return ia, ib, starts


@lru_cache(maxsize=None)
def _deriv_table(order: int, var: int):
    """Gather map for d/d(var): target monomials of degree <= order-1."""
    n = NCOEF[order - 1]
    src = np.empty(n, dtype=int)
    coef = np.empty(n)
    for t in range(n):
        m = list(MONOMIALS[t])
        m[var] += 1
        src[t] = MONO_INDEX[tuple(m)]
        coef[t] = m[var]
    return src, coef


def _reduce(prod: np.ndarray, starts: np.ndarray) -> np.ndarray:
    return np.add.reduceat(prod, starts, axis=-1)


class Jet:
    """Tensor of truncated Taylor polynomials.

    ``coeffs`` has shape ``(*shape, NCOEF[order])``; coefficient ``alpha`` is
    ``d^alpha f / alpha!``.
    """

    __slots__ = ("coeffs", "order")
    __array_priority__ = 1000

    def __init__(self, coeffs, order: int):
        if not 0 <= order <= MAX_ORDER:
            raise OrderError(f"jet order {order} outside [0, {MAX_ORDER}]")
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != NCOEF[order]:
            raise ValueError("coefficient axis does not match order")
        self.coeffs = coeffs
        self.order = order

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (NCOEF[order],))
        c[..., 0] = value
        return cls(c, order)

    @classmethod
    def variable(cls, var: int, value, order: int) -> "Jet":
        """Coordinate ``var`` expanded at ``value`` (scalar or batch array)."""
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (NCOEF[order],))
        c[..., 0] = value
        if order >= 1:
            c[..., 1 + var] = 1.0
        return cls(c, order)

    # inspection -------------------------------------------------------
    @property
    def shape(self):
        return self.coeffs.shape[:-1]

    @property
    def value(self):
        v = self.coeffs[..., 0]
        return float(v) if v.ndim == 0 else v.copy()

    def partial(self, idx: Sequence[int | str]):
        """Partial derivative for a multi-index given as variables, e.g. ``("y0", "y1")``."""
        e = [0] * NVARS
        for v in idx:
            e[_var_index(v)] += 1
        deg = sum(e)
        if deg > self.order:
            raise OrderError(f"partial of order {deg} requested from an order-{self.order} jet")
        k = MONO_INDEX[tuple(e)]
        out = self.coeffs[..., k] * _FACT[k]
        return float(out) if out.ndim == 0 else out

    def partials(self) -> dict:
        """Map from multi-index (tuple of variable indices) to the partial."""
        out = {}
        for k in range(NCOEF[self.order]):
            m = MONOMIALS[k]
            key = tuple(v for v in range(NVARS) for _ in range(m[v]))
            val = self.coeffs[..., k] * _FACT[k]
            out[key] = float(val) if val.ndim == 0 else val
        return out

    def truncate(self, order: int) -> "Jet":
        if order == self.order:
            return self
        if order > self.order:
            raise OrderError("cannot raise jet order")
        return Jet(self.coeffs[..., : NCOEF[order]], order)

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            raise IndexError("ellipsis indexing is not supported on jets")
        return Jet(self.coeffs[key + (Ellipsis,)], self.order)

    def __len__(self):
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __repr__(self):
        return f"Jet(order={self.order}, shape={self.shape}, value={self.value!r})"

    def reshape(self, *shape) -> "Jet":
        return Jet(self.coeffs.reshape(tuple(shape) + (self.coeffs.shape[-1],)), self.order)

    def swapaxes(self, a: int, b: int) -> "Jet":
        nd = len(self.shape)
        return Jet(np.swapaxes(self.coeffs, a % nd, b % nd), self.order)

    @property
    def T(self) -> "Jet":
        return self.swapaxes(-1, -2)

    def sum(self, axis=None) -> "Jet":
        nd = len(self.shape)
        if axis is None:
            axis = tuple(range(nd))
        elif isinstance(axis, int):
            axis = axis % nd
        else:
            axis = tuple(a % nd for a in axis)
        return Jet(self.coeffs.sum(axis=axis), self.order)

    # differentiation --------------------------------------------------
    def deriv(self, var: int | str) -> "Jet":
        if self.order == 0:
            raise OrderError("cannot differentiate an order-0 jet")
        src, coef = _deriv_table(self.order, _var_index(var))
        return Jet(self.coeffs[..., src] * coef, self.order - 1)

    def grad(self, block: str = "all") -> "Jet":
        """Stack first derivatives along a new trailing tensor axis."""
        vars_ = {"x": range(4), "y": range(4, 8), "all": range(8)}[block]
        if self.order == 0:
            raise OrderError("cannot differentiate an order-0 jet")
        cs = [self.deriv(v).coeffs for v in vars_]
        return Jet(np.stack(cs, axis=-2), self.order - 1)

    def dx(self) -> "Jet":
        return self.grad("x")

    def dy(self) -> "Jet":
        return self.grad("y")

    # arithmetic -------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.order)

    def __add__(self, other):
        if not isinstance(other, Jet):
            c = self.coeffs.copy() if np.ndim(other) == 0 else np.broadcast_to(
                self.coeffs, np.broadcast_shapes(self.shape, np.shape(other)) + (self.coeffs.shape[-1],)).copy()
            c[..., 0] = c[..., 0] + other
            return Jet(c, self.order)
        k = min(self.order, other.order)
        return Jet(self.truncate(k).coeffs + other.truncate(k).coeffs, k)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.order)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coeffs * np.asarray(other, dtype=float)[..., None], self.order)
        k = min(self.order, other.order)
        a, b = self.truncate(k).coeffs, other.truncate(k).coeffs
        if k == 0:
            return Jet(a * b, 0)
        ia, ib, starts = _mult_table(k)
        return Jet(_reduce(a[..., ia] * b[..., ib], starts), k)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coeffs / np.asarray(other, dtype=float)[..., None], self.order)
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(log(self) * p)
        return power(self, float(p))

    def __rpow__(self, base):
        return exp(self * math.log(base))


def _var_index(v) -> int:
    if isinstance(v, str):
        return VAR_NAMES.index(v)
    v = int(v)
    if not 0 <= v < NVARS:
        raise IndexError(f"variable index {v} out of range")
    return v


def stack(jets: Sequence, axis: int = 0) -> Jet:
    """Stack jets (or constants) into a tensor jet along a new axis."""
    orders = [j.order for j in jets if isinstance(j, Jet)]
    if not orders:
        raise ValueError("stack needs at least one Jet")
    k = min(orders)
    cs = [(j.truncate(k) if isinstance(j, Jet) else Jet.constant(j, k)).coeffs for j in jets]
    nd = cs[0].ndim - 1
    return Jet(np.stack(cs, axis=axis % (nd + 1)), k)


def asjet(v, order: int) -> Jet:
    return v if isinstance(v, Jet) else Jet.constant(v, order)


def einsum(subscripts: str, a, b) -> Jet:
    """Tensor contraction of two jets (either may be a plain array)."""
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        raise TypeError("einsum needs at least one Jet")
    if not isinstance(a, Jet):
        return Jet(np.einsum(f"{sa},{sb}Z->{out}Z", np.asarray(a, float), b.coeffs), b.order)
    if not isinstance(b, Jet):
        return Jet(np.einsum(f"{sa}Z,{sb}->{out}Z", a.coeffs, np.asarray(b, float)), a.order)
    k = min(a.order, b.order)
    ac, bc = a.truncate(k).coeffs, b.truncate(k).coeffs
    if k == 0:
        return Jet(np.einsum(f"{sa}Z,{sb}Z->{out}Z", ac, bc), 0)
    ia, ib, starts = _mult_table(k)
    prod = np.einsum(f"{sa}Z,{sb}Z->{out}Z", ac[..., ia], bc[..., ib])
    return Jet(_reduce(prod, starts), k)


# elementary functions ---------------------------------------------------

def _compose(x: Jet, derivs: list) -> Jet:
    """Evaluate sum_k f^(k)(x0)/k! (x - x0)^k by Horner's scheme."""
    k = x.order
    h = Jet(x.coeffs.copy(), k)
    h.coeffs[..., 0] = 0.0
    r = Jet.constant(derivs[k] / math.factorial(k), k)
    for j in range(k - 1, -1, -1):
        r = r * h + derivs[j] / math.factorial(j)
    return r


def _check_finite(vals, what):
    if not np.all(np.isfinite(vals)):
        raise DomainError(f"{what} not finite at the evaluation point")


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x) if np.ndim(x) else math.exp(x)
    e = np.exp(x.coeffs[..., 0])
    return _compose(x, [e] * (x.order + 1))


def log(x):
    if not isinstance(x, Jet):
        if np.any(np.asarray(x) <= 0):
            raise DomainError("log of non-positive value")
        return np.log(x) if np.ndim(x) else math.log(x)
    a = x.coeffs[..., 0]
    if np.any(a <= 0):
        raise DomainError("log of non-positive value")
    ds = [np.log(a)] + [(-1) ** (k - 1) * math.factorial(k - 1) * a ** (-k) for k in range(1, x.order + 1)]
    return _compose(x, ds)


def power(x, p: float):
    """x**p for a constant exponent."""
    is_int = float(p).is_integer()
    if not isinstance(x, Jet):
        a = np.asarray(x, dtype=float)
        if not is_int and np.any(a < 0):
            raise DomainError("non-integer power of a negative value")
        if p < 0 and np.any(a == 0):
            raise DomainError("negative power of zero")
        return a ** p if a.ndim else float(a) ** p
    a = x.coeffs[..., 0]
    if is_int and p >= 0:
        n = int(p)
        if n == 0:
            return Jet.constant(np.ones_like(a), x.order)
        r = x
        for _ in range(n - 1):
            r = r * x
        return r
    if np.any(a < 0) and not is_int:
        raise DomainError("non-integer power of a negative value")
    if np.any(a == 0):
        raise DomainError("power not differentiable at zero")
    ds = []
    coef = 1.0
    for k in range(x.order + 1):
        ds.append(coef * a ** (p - k))
        coef *= p - k
    return _compose(x, ds)


def sqrt(x):
    if not isinstance(x, Jet):
        if np.any(np.asarray(x) < 0):
            raise DomainError("sqrt of negative value")
        return np.sqrt(x) if np.ndim(x) else math.sqrt(x)
    if np.any(x.coeffs[..., 0] <= 0):
        raise DomainError("sqrt argument must be positive for differentiation")
    return power(x, 0.5)


def reciprocal(x):
    if not isinstance(x, Jet):
        if np.any(np.asarray(x) == 0):
            raise DomainError("division by zero")
        return 1.0 / x
    return power(x, -1.0)


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x) if np.ndim(x) else math.sin(x)
    a = x.coeffs[..., 0]
    s, c = np.sin(a), np.cos(a)
    return _compose(x, [[s, c, -s, -c][k % 4] for k in range(x.order + 1)])


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x) if np.ndim(x) else math.cos(x)
    a = x.coeffs[..., 0]
    s, c = np.sin(a), np.cos(a)
    return _compose(x, [[c, -s, -c, s][k % 4] for k in range(x.order + 1)])


def fabs(x):
    if not isinstance(x, Jet):
        return np.abs(x) if np.ndim(x) else abs(x)
    a = x.coeffs[..., 0]
    if x.order > 0 and np.any(a == 0):
        raise DomainError("abs is not differentiable at zero")
    return x * np.sign(a)


# matrices ---------------------------------------------------------------

def matmul(a, b) -> Jet:
    return einsum("...ij,...jk->...ik", a, b)


def inv(m: Jet) -> Jet:
    """Inverse of a square matrix jet via the Neumann series around its value."""
    a0 = m.coeffs[..., 0]
    if abs(np.linalg.det(a0)) < 1e-300:
        raise DomainError("singular matrix")
    a0inv = np.linalg.inv(a0)
    h = Jet(m.coeffs.copy(), m.order)
    h.coeffs[..., 0] = 0.0
    x = -einsum("ij,jk->ik", a0inv, h)
    term = Jet.constant(a0inv, m.order)
    total = term
    for _ in range(m.order):
        term = matmul(x, term)
        total = total + term
    return total


def logabsdet(m: Jet) -> tuple[float, Jet]:
    """(sign, log|det m|) with the log carried as a jet."""
    a0 = m.coeffs[..., 0]
    sign, ld = np.linalg.slogdet(a0)
    if sign == 0:
        raise DomainError("singular matrix")
    a0inv = np.linalg.inv(a0)
    h = Jet(m.coeffs.copy(), m.order)
    h.coeffs[..., 0] = 0.0
    y = einsum("ij,jk->ik", a0inv, h)
    acc = Jet.constant(ld, m.order)
    term = y
    for k in range(1, m.order + 1):
        tr = Jet(np.trace(term.coeffs, axis1=0, axis2=1), term.order)
        acc = acc + tr * ((-1) ** (k + 1) / k)
        if k < m.order:
            term = matmul(term, y)
    return float(sign), acc


def det(m: Jet) -> Jet:
    sign, ld = logabsdet(m)
    return exp(ld) * sign


# evaluation entry points ------------------------------------------------

@dataclass(frozen=True)
class TangentSample:
    """Point (x, y) of the tangent bundle."""

    x: tuple
    y: tuple

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if len(self.x) != 4 or len(self.y) != 4:
            raise ValueError("tangent samples need 4 base and 4 fiber coordinates")
        if not any(self.y):
            raise ValueError("fiber coordinate y must be nonzero")

    @property
    def coords(self) -> np.ndarray:
        return np.array(self.x + self.y)

    def variables(self, order: int) -> tuple[list, list]:
        c = self.coords
        vs = [Jet.variable(k, c[k], order) for k in range(NVARS)]
        return vs[:4], vs[4:]

    def scaled(self, lam: float) -> "TangentSample":
        return TangentSample(self.x, tuple(lam * v for v in self.y))


ScalarFn = Callable[[Sequence, Sequence], object]


def eval_jet(f: ScalarFn, p: TangentSample, order: int) -> Jet:
    """Value and all partials of ``f(x, y)`` at ``p`` up to ``order``."""
    if not 0 <= order <= MAX_ORDER:
        raise OrderError(f"order must lie in [0, {MAX_ORDER}], got {order}")
    xs, ys = p.variables(order)
    try:
        out = f(xs, ys)
    except (ZeroDivisionError, FloatingPointError) as exc:
        raise DomainError(str(exc)) from exc
    out = asjet(out, order)
    _check_finite(out.coeffs, "jet")
    return out


def _call_float(f: ScalarFn, c: np.ndarray) -> float:
    try:
        v = f(list(c[:4]), list(c[4:]))
    except (ZeroDivisionError, ValueError) as exc:
        raise DomainError(f"stencil point outside domain: {exc}") from exc
    v = float(v.value if isinstance(v, Jet) else v)
    if not math.isfinite(v):
        raise DomainError("stencil point outside domain")
    return v


def fd_derivative(f: ScalarFn, p: TangentSample, idx: Sequence[int | str],
                  step: float | None = None, extrapolate: bool = False) -> float:
    """Central-difference estimate of a mixed partial.

    Nested symmetric differences; truncation error O(step**2).  With
    ``extrapolate`` one Richardson step (steps h and h/2) raises it to
    O(step**4).
    """
    vars_ = [_var_index(v) for v in idx]
    if not 1 <= len(vars_) <= MAX_ORDER:
        raise OrderError("finite differences support 1 to 4 derivative orders")
    c0 = p.coords
    if step is None:
        step = 1e-4
    if step <= 0:
        raise ValueError("step must be positive")
    hs = {v: step * max(1.0, abs(c0[v])) for v in vars_}

    def nested(scale):
        total = 0.0
        for signs in itertools.product((1, -1), repeat=len(vars_)):
            c = c0.copy()
            for v, s in zip(vars_, signs):
                c[v] += s * hs[v] * scale
            total += math.prod(signs) * _call_float(f, c)
        return total / math.prod(2 * hs[v] * scale for v in vars_)

    if not extrapolate:
        return nested(1.0)
    return (4.0 * nested(0.5) - nested(1.0)) / 3.0
