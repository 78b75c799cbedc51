"""Charged particle motion on a pseudo-Finsler background."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import forms, jets
from .connection import EhresmannConnection, Frame
from .geometry import FundamentalFunction, hessian_y
from .jets import TangentSample
from .maxwell import PotentialField, potential_jet

log = logging.getLogger(__name__)

SINGULAR_SYSTEM_TOL = 1e-12
GAUGE_TOL = 1e-8
MAX_STEPS = 10_000_000


class SingularSystemError(ValueError):
    pass


class GaugeError(ValueError):
    pass


class StepLimitError(ValueError):
    pass


@dataclass(frozen=True)
class ParticleParams:
    m: float = 1.0
    q: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.m <= 0 or self.c <= 0:
            raise ValueError("mass and c must be positive")


@dataclass(frozen=True)
class TrajectoryState:
    s: float
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class Diagnostics:
    F_drift: float
    ortho_lorentz: float  # g_ij F^i y^j
    ortho_correction: float  # g_ij Ftilde^i y^j


@dataclass(frozen=True)
class RHS:
    dx: np.ndarray
    dy: np.ndarray
    force: np.ndarray  # (q/c) F^i_h y^h
    correction: np.ndarray  # (q/c) F^i_jbar delta y^j / ds
    g: np.ndarray


def lorentz_rhs(x, y, A: PotentialField, F: FundamentalFunction, N: EhresmannConnection,
                params: ParticleParams, check_gauge: bool = True) -> RHS:
    """Right side of  mc Dy/ds = (q/c) F^i_j y^j + (q/c) F^i_jbar delta y^j/ds.

    The implicit delta y/ds = dy/ds + N y on the right is moved to the left,
    giving (mc I - (q/c) F^i_jbar) dy/ds = -mc L y y + (q/c)(F^i_j y^j + F^i_jbar N^j_k y^k).
    """
    p = TangentSample(x, y)
    xs, ys = p.variables(3)
    g = hessian_y(jets.asjet(F.F2(xs, ys), 3))
    g0 = 0.5 * (g.value + g.value.T)
    ginv = np.linalg.inv(g0)
    gx, gy = g.dx().value, g.dy().value  # [h, j, k] = d_k g_hj
    n = N.jet(xs, ys, 1).value if N.kind != "trivial" else np.zeros((4, 4))
    dg = gx - np.einsum("hja,ak->hjk", gy, n)
    L = 0.5 * np.einsum("ih,hjk->ijk", ginv, dg + dg.transpose(0, 2, 1) - dg.transpose(2, 0, 1))

    a = A.jet([c.truncate(1) for c in xs], [c.truncate(1) for c in ys], 1)
    ax, ay = a.dx().value, a.dy().value  # [j, i] = d_i A_j ; [i, b] = dA_i/dy^b
    yv = np.asarray(y, dtype=float)
    if check_gauge:
        res = np.abs(yv @ ay).max()
        if res > GAUGE_TOL * max(1.0, np.abs(ay).max() * np.abs(yv).max()):
            raise GaugeError(f"potential violates the gradient gauge: |A_k.i y^k| = {res:.3e}")
    dA = ax - np.einsum("jb,bi->ji", ay, n)  # delta_i A_j
    F_hh = dA.T - dA
    F_hv = -ay
    Fmix = ginv @ F_hh  # F^i_j
    Fv = ginv @ F_hv  # F^i_jbar
    mc, qc = params.m * params.c, params.q / params.c
    M = mc * np.eye(4) - qc * Fv
    det = np.linalg.det(M)
    if abs(det) < SINGULAR_SYSTEM_TOL:
        raise SingularSystemError(f"velocity system is singular (det = {det:.3e})")
    force = qc * Fmix @ yv
    rhs = -mc * np.einsum("ijk,j,k->i", L, yv, yv) + force + qc * Fv @ (n @ yv)
    dy = np.linalg.solve(M, rhs)
    corr = qc * Fv @ (dy + n @ yv)
    return RHS(yv.copy(), dy, force, corr, g0)


@dataclass
class Trajectory:
    states: list
    diagnostics: list

    def array(self) -> np.ndarray:
        """Rows (s, x0..x3, y0..y3, F_drift, ortho_1, ortho_2)."""
        return np.array([[st.s, *st.x, *st.y, d.F_drift, d.ortho_lorentz, d.ortho_correction]
                         for st, d in zip(self.states, self.diagnostics)])


def normalize_direction(F: FundamentalFunction, x, y, warn: bool = True) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    f = float(F.F(list(x), list(y)))
    if not math.isfinite(f) or f <= 0:
        raise ValueError("F(x0, y0) must be positive to normalize")
    if abs(f - 1.0) > 1e-12:
        if warn:
            log.warning("initial direction rescaled so that F(x0, y0) = 1 (was %r)", f)
        y = y / f
    return y


def integrate_trajectory(x0, y0, A: PotentialField, F: FundamentalFunction, N: EhresmannConnection,
                         params: ParticleParams, step: float, n_steps: int,
                         normalize: bool = True) -> Trajectory:
    """Fixed-step classical RK4 on the state (x, y), with per-step diagnostics."""
    if n_steps < 0 or n_steps > MAX_STEPS:
        raise StepLimitError(f"n_steps must lie in [0, {MAX_STEPS}]")
    x = np.asarray(x0, dtype=float)
    y = normalize_direction(F, x, y0) if normalize else np.asarray(y0, dtype=float)

    def f(xx, yy):
        return lorentz_rhs(xx, yy, A, F, N, params)

    states, diags = [], []
    s = 0.0
    for n in range(n_steps + 1):
        k1 = f(x, y)
        Fv = float(F.F(list(x), list(y)))
        diags.append(Diagnostics(Fv - 1.0, float(k1.force @ k1.g @ y), float(k1.correction @ k1.g @ y)))
        states.append(TrajectoryState(s, x.copy(), y.copy()))
        if n == n_steps:
            break
        h = step
        k2 = f(x + 0.5 * h * k1.dx, y + 0.5 * h * k1.dy)
        k3 = f(x + 0.5 * h * k2.dx, y + 0.5 * h * k2.dy)
        k4 = f(x + h * k3.dx, y + h * k3.dy)
        x = x + h / 6.0 * (k1.dx + 2 * k2.dx + 2 * k3.dx + k4.dx)
        y = y + h / 6.0 * (k1.dy + 2 * k2.dy + 2 * k3.dy + k4.dy)
        s = (n + 1) * step
    return Trajectory(states, diags)


def hyperbolic_motion(s, x0, E: float, params: ParticleParams) -> tuple[np.ndarray, np.ndarray]:
    """Closed form for A_1 = E x^0 on Minkowski, starting at rest with y = (1, 0, 0, 0)."""
    k = params.q * E / (params.m * params.c**2)
    x = np.array(x0, dtype=float)
    x[0] += math.sinh(k * s) / k
    x[1] += (math.cosh(k * s) - 1.0) / k
    return x, np.array([math.cosh(k * s), math.sinh(k * s), 0.0, 0.0])


# Lagrangian objects ----------------------------------------------------

@dataclass(frozen=True)
class DynamicsSample:
    p: np.ndarray  # general canonical momentum
    p_gauge: np.ndarray  # mc y_i + (q/c) A_i
    theta: forms.AdaptedForm
    omega: forms.AdaptedForm | None
    L_value: float


def lagrangian(A: PotentialField, F: FundamentalFunction, params: ParticleParams):
    mc, qc = params.m * params.c, params.q / params.c

    def L(x, y):
        a = A(x, y)
        return 0.5 * mc * F.F2(x, y) + qc * sum(a[k] * y[k] for k in range(4))

    return L


def canonical_momentum(A: PotentialField, F: FundamentalFunction, params: ParticleParams,
                       p: TangentSample) -> DynamicsSample:
    xs, ys = p.variables(2)
    mc, qc = params.m * params.c, params.q / params.c
    g = hessian_y(jets.asjet(F.F2(xs, ys), 2)).value
    a = A.jet(xs, ys, 2)
    y = np.array(p.y)
    y_low = g @ y
    ay = a.dy().value
    general = mc * y_low + qc * (y @ ay + a.value)
    gauge = mc * y_low + qc * a.value
    theta = forms.AdaptedForm(1, {(i,): float(general[i]) for i in range(4)})
    Lv = float(lagrangian(A, F, params)(list(p.x), list(p.y)))
    return DynamicsSample(general, gauge, theta, None, Lv)


@dataclass(frozen=True)
class PoincareForms:
    exterior: forms.AdaptedForm  # d theta
    components: forms.AdaptedForm  # (theta_{j|i} - theta_{i|j}) hh-block, -(mc g + (q/c) A_.) mixed block
    literal_hh: np.ndarray  # (q/c)(A_{j|i} - A_{i|j}), the hh-block with A in place of theta


def poincare_form(A: PotentialField, F: FundamentalFunction, params: ParticleParams,
                  frame: Frame) -> PoincareForms:
    mc, qc = params.m * params.c, params.q / params.c
    fr = frame
    a = potential_jet(A, fr)
    y = jets.stack(fr.ys)
    theta = jets.einsum("ij,j->i", fr.g, y) * mc + a * qc
    exterior = forms.exterior_derivative(forms.AdaptedForm.one_form(theta), fr)
    cov = fr.cov_h(theta, "h")  # [j, i] = theta_{j|i}
    hv = (fr.g * mc + a.dy() * qc) * -1.0
    components = forms.AdaptedForm.two_form(hh=cov.T - cov, hv=hv)
    ca = fr.cov_h(a, "h").value
    return PoincareForms(exterior, components, qc * (ca.T - ca))


def euler_lagrange_residual(A: PotentialField, F: FundamentalFunction, params: ParticleParams,
                            x, y, dy) -> np.ndarray:
    """d/ds (dL/dy^i) - dL/dx^i along a proposed (y, dy/ds), from a jet of L alone."""
    p = TangentSample(x, y)
    Lj = jets.eval_jet(lagrangian(A, F, params), p, 2)
    yy = np.asarray(y, dtype=float)
    H = np.array([[Lj.partial((4 + i, 4 + j)) for j in range(4)] for i in range(4)])
    Mx = np.array([[Lj.partial((4 + i, j)) for j in range(4)] for i in range(4)])
    Lx = np.array([Lj.partial((i,)) for i in range(4)])
    return Mx @ yy + H @ np.asarray(dy, dtype=float) - Lx
