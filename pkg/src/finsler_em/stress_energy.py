"""Two-block energy-momentum tensor of the field and its conservation laws."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import jets
from .connection import Frame
from .jets import Jet
from .maxwell import C_LIGHT, CurrentField, FaradayField, _raised, current_from_field

FLAT_TOL = 1e-10
K = 1.0 / (4.0 * math.pi)


class FlatnessError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class StressEnergy:
    T_mixed: Jet  # [l, i] = T^l_i
    T_mixed_v: Jet  # [l, i] = T^{lbar}_i
    T_hh: Jet  # T_ij
    T_hv: Jet  # T_{i jbar}
    raw_hh: Jet | None  # Ttilde^l_i
    raw_hv: Jet | None  # Ttilde^{lbar}_i
    invariant_FF: Jet  # F_BC F^BC


def invariant_FF(F: FaradayField, frame: Frame) -> Jet:
    up_hh, up_hv = _raised(F, frame)
    return jets.einsum("ij,ij->", F.F_hh, up_hh) + jets.einsum("ij,ij->", F.F_hv, up_hv) * 2.0


def check_flat(frame: Frame) -> float:
    """max |dG/dx|; raises unless g = g(y), v is constant and N = 0."""
    if frame.conn.kind != "trivial":
        raise FlatnessError("the flat construction needs the trivial connection")
    dgx = float(np.abs(frame.g.dx().value).max())
    if dgx > FLAT_TOL:
        raise FlatnessError(f"metric depends on x: max |dg/dx| = {dgx:.3e}")
    dvx = float(np.abs(frame.v.dx().value).max())
    if dvx > FLAT_TOL:
        raise FlatnessError(f"vertical metric depends on x: max |dv/dx| = {dvx:.3e}")
    return max(dgx, dvx)


def energy_momentum(F: FaradayField, frame: Frame, A: Jet | None = None) -> StressEnergy:
    """Symmetrized blocks T_{iA} = (1/4pi)(-F_A^B F_iB + 1/4 g_iA F_BC F^BC), with g_{i jbar} = 0.

    When the potential jet ``A`` is given and the background is flat the raw
    Noether blocks are filled in as well.
    """
    fr = frame
    up_hh, up_hv = _raised(F, fr)
    up_vh = up_hv.T * -1.0
    ff = invariant_FF(F, fr)
    eye = Jet.constant(np.eye(4), ff.order)
    Tm = (jets.einsum("lk,ik->li", up_hh, F.F_hh) * -1.0
          - jets.einsum("lk,ik->li", up_hv, F.F_hv)
          + jets.einsum("li,->li", eye, ff) * 0.25) * K
    Tv = jets.einsum("lk,ik->li", up_vh, F.F_hh) * -K
    T_hh = jets.einsum("jl,li->ij", fr.g, Tm)
    T_hv = jets.einsum("jl,li->ij", fr.v, Tv)
    raw_hh = raw_hv = None
    if A is not None:
        check_flat(fr)
        Ax = A.dx()  # [k, i] = A_{k,i}
        raw_hh = (jets.einsum("lk,ki->li", up_hh, Ax) * -1.0 + jets.einsum("li,->li", eye, ff) * 0.25) * K
        raw_hv = jets.einsum("lk,ki->li", up_vh, Ax) * -K
    return StressEnergy(Tm, Tv, T_hh, T_hv, raw_hh, raw_hv, ff)


def noether_current(F: FaradayField, A: Jet, frame: Frame) -> StressEnergy:
    return energy_momentum(F, frame, A)


def correction_terms(F: FaradayField, A: Jet, frame: Frame) -> tuple[Jet, Jet]:
    """Terms added to the raw current during symmetrization (flat case)."""
    up_hh, up_hv = _raised(F, frame)
    up_vh = up_hv.T * -1.0
    Ax, Ay = A.dx(), A.dy()  # [i, k] = A_{i,k}, A_{i.k}
    ch = (jets.einsum("lk,ik->li", up_hh, Ax) + jets.einsum("lk,ik->li", up_hv, Ay)) * K
    cv = jets.einsum("lk,ik->li", up_vh, Ax) * K
    return ch, cv


def flat_divergence(Th: Jet, Tv: Jet, frame: Frame) -> tuple[np.ndarray, np.ndarray]:
    """(1/sqrt|G|)[d_j(T^j_i sqrt|G|) + d_jbar(T^jbar_i sqrt|G|)] and the size of its terms."""
    sG = frame.sqrt_G
    a = np.einsum("jij->i", (Th * sG).dx().value)
    b = np.einsum("jij->i", (Tv * sG).dy().value)
    return (a + b) / sG.value, np.maximum(np.abs(a), np.abs(b)) / sG.value


@dataclass(frozen=True)
class ConservationResult:
    lhs: np.ndarray
    rhs: np.ndarray
    lorentz_density: np.ndarray  # -(1/c)(F_ij J^j + F_{i jbar} J^jbar)
    terms: dict
    scale: float

    @property
    def residual(self) -> np.ndarray:
        return self.lhs - self.rhs

    @property
    def scaled(self) -> float:
        return float(np.abs(self.residual).max() / self.scale)


def lorentz_density(F: FaradayField, J: CurrentField) -> np.ndarray:
    return -(F.F_hh.value @ J.J_h.value + F.F_hv.value @ J.J_v.value) / J.c


def _scale(*arrays) -> float:
    return max(1.0, max(float(np.abs(a).max()) for a in arrays))


def conservation_flat(F: FaradayField, frame: Frame, c: float = C_LIGHT) -> ConservationResult:
    check_flat(frame)
    T = energy_momentum(F, frame)
    J = current_from_field(F, frame, c)
    div, size = flat_divergence(T.T_mixed, T.T_mixed_v, frame)
    f = lorentz_density(F, J)
    return ConservationResult(div, f, f, {"div_T": div}, _scale(size, f))


def conservation_curved(F: FaradayField, frame: Frame, c: float = C_LIGHT) -> ConservationResult:
    """T^j_{i|j} + T^jbar_{i.jbar} + T^jbar_i C^h_{h jbar} + T^j_kbar R^kbar_{ij} = -(1/c) i_J F.

    Here T^j_kbar is g^{jl} T_{l kbar}.  Requires v = v(x) and the canonical connection.
    """
    fr = frame
    if fr.conn.kind != "canonical":
        raise ConfigurationError("the curved conservation law is stated for the canonical connection")
    T = energy_momentum(F, fr)
    J = current_from_field(F, fr, c)
    Tm, Tv = T.T_mixed, T.T_mixed_v
    t1 = np.einsum("jij->i", fr.cov_h(Tm, "Hh").value)
    t2 = np.einsum("jij->i", Tv.dy().value)
    t3 = np.einsum("hhj->j", fr.C.value) @ Tv.value
    T_up_v = fr.ginv.value @ T.T_hv.value  # [j, k] = T^j_kbar
    t4 = np.einsum("jk,kij->i", T_up_v, fr.R.value)
    f = lorentz_density(F, J)
    lhs = t1 + t2 + t3 + t4
    return ConservationResult(lhs, f, f, {"cov_div": t1, "vert_div": t2, "cartan": t3, "torsion": t4},
                              _scale(t1, t2, t3, t4, f))


def conservation_residual(F: FaradayField, frame: Frame, route: str = "auto",
                          c: float = C_LIGHT) -> ConservationResult:
    if route == "auto":
        route = "flat" if frame.conn.kind == "trivial" else "curved"
    if route == "flat":
        return conservation_flat(F, frame, c)
    if route == "curved":
        return conservation_curved(F, frame, c)
    raise ValueError(f"unknown route {route!r}")


def raw_noether_residual(F: FaradayField, A: Jet, frame: Frame, c: float = C_LIGHT) -> ConservationResult:
    """d_k(Tt^k_i sqrt|G|) + d_kbar(Tt^kbar_i sqrt|G|) against -(1/c) A_{k,i} J^k sqrt|G|.

    The right side vanishes for J = 0, which is the case stated for the raw current.
    """
    T = noether_current(F, A, frame)
    J = current_from_field(F, frame, c)
    div, size = flat_divergence(T.raw_hh, T.raw_hv, frame)
    rhs = -(A.dx().value.T @ J.J_h.value) / c
    return ConservationResult(div, rhs, lorentz_density(F, J), {"div_raw": div}, _scale(size, rhs))


def correction_divergence(F: FaradayField, A: Jet, frame: Frame, c: float = C_LIGHT) -> ConservationResult:
    """div(correction) against (1/c)(A_{i,k} J^k + A_{i.k} J^kbar), i.e. div T - div Ttilde."""
    ch, cv = correction_terms(F, A, frame)
    J = current_from_field(F, frame, c)
    div, size = flat_divergence(ch, cv, frame)
    rhs = (A.dx().value @ J.J_h.value + A.dy().value @ J.J_v.value) / c
    return ConservationResult(div, rhs, lorentz_density(F, J), {"div_correction": div}, _scale(size, rhs))


def conclusion_form_difference(F: FaradayField, frame: Frame) -> np.ndarray:
    """T_ij from the Kronecker-delta variant minus the g_ij form; zero only where g = identity."""
    T = energy_momentum(F, frame)
    ff = T.invariant_FF.value
    return 0.25 * K * ff * (np.eye(4) - frame.g.value)
