"""Closed-form means, variances and upper bounds for Fourier coefficients of 2-design models."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from qfm.simulator import Observable
from qfm.spectrum import RedundancyTable

NORMS = ("diamond", "spectral", "monomial")


@dataclass(frozen=True)
class TheoryInputs:
    """Observable scalars on a ``d``-dimensional register."""

    d: int
    trace: float
    norm2_sq: float
    norm_inf: float
    norm_1: float
    abs_entry_sum: float

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError("need d >= 2")
        for v in (self.norm2_sq, self.norm_inf, self.norm_1, self.abs_entry_sum):
            if not math.isfinite(v) or v < 0:
                raise ValueError("norms must be finite and nonnegative")

    @classmethod
    def from_observable(cls, obs: Observable) -> "TheoryInputs":
        return cls(obs.dim, obs.trace, obs.norm2_sq, obs.norm_inf, obs.norm_1, obs.abs_entry_sum)

    @property
    def k_offzero(self) -> float:
        """(d ||O||_2^2 - Tr(O)^2) / (d (d^2 - 1)), the prefactor of the off-zero variance."""
        d = self.d
        return (d * self.norm2_sq - self.trace**2) / (d * (d * d - 1))

    @property
    def k_zero(self) -> float:
        """(d Tr(O)^2 - ||O||_2^2) / (d (d^2 - 1))."""
        d = self.d
        return (d * self.trace**2 - self.norm2_sq) / (d * (d * d - 1))

    @property
    def c2_monomial(self) -> float:
        """Sum of |entries| of O (x) O over d^2."""
        return self.abs_entry_sum**2 / self.d**2


class TheoryValue(NamedTuple):
    value: float
    raw: float
    flag: str


def mean_2design(ti: TheoryInputs, omega: int) -> float:
    return ti.trace / ti.d if omega == 0 else 0.0


def var_2design_single_detail(ti: TheoryInputs, omega: int, R: int) -> TheoryValue:
    """Single-layer variance; the zero frequency is clamped at 0 and flagged."""
    d = ti.d
    raw = ti.k_offzero * R / (d * (d + 1))
    if omega != 0:
        return TheoryValue(raw, raw, "")
    raw += (ti.trace**2 - d * ti.norm2_sq) / (d * d * (d * d - 1))
    return TheoryValue(max(raw, 0.0), raw, "approximate")


def var_2design_single(ti: TheoryInputs, omega: int, R: int) -> float:
    return var_2design_single_detail(ti, omega, R).value


def alpha_2design(ti: TheoryInputs) -> float:
    """Prefactor alpha with Var = alpha |R~(w)| / d for w != 0, where R~ = R / d^2."""
    return ti.k_offzero * ti.d**2 / (ti.d + 1)


def var_2design_informal(ti: TheoryInputs, r_normalized: float) -> float:
    """Single-layer off-zero variance written as alpha |R~(w)| / d."""
    return alpha_2design(ti) * r_normalized / ti.d


def var_2design_single_exact(ti: TheoryInputs, omega: int, R: int) -> float:
    """E|c|^2 - |E c|^2 without simplifying the zero-frequency term."""
    d = ti.d
    delta = 1.0 if omega == 0 else 0.0
    second = ti.k_zero * delta + ti.k_offzero * (delta / (d + 1) + R / (d * (d + 1)))
    return second - mean_2design(ti, omega) ** 2


def var_2design_reuploading_detail(ti: TheoryInputs, omega: int, partial: Sequence[int]) -> TheoryValue:
    """Approximate multi-layer variance from partial redundancies.

    ``partial[j-1]`` is R_j^L(omega) for j = 1..L.
    """
    L = len(partial)
    d = ti.d
    if L == 0:
        raise ValueError("need at least one layer")
    if L == 1:
        return var_2design_single_detail(ti, omega, partial[0])
    r2 = partial[1]
    bracket = (partial[0] - r2) / (d * (d + 1) * (d * d - 1) ** (L - 1))
    for j in range(3, L + 1):
        bracket += partial[j - 1] / (d * (d * d - 1) ** (L - j + 2))
    raw = ti.k_offzero * bracket
    if omega != 0:
        return TheoryValue(raw, raw, "approximate")
    raw += (ti.trace**2 - d * ti.norm2_sq) / (d * d * (d * d - 1))
    return TheoryValue(max(raw, 0.0), raw, "approximate")


def var_2design_reuploading(ti: TheoryInputs, omega: int, partial: Sequence[int]) -> float:
    return var_2design_reuploading_detail(ti, omega, partial).value


def _dense(table: RedundancyTable, lo: int, hi: int) -> np.ndarray:
    out = np.zeros(hi - lo + 1)
    for w, c in table.entries.items():
        out[w - lo] = c
    return out


def var_2design_reuploading_exact(ti: TheoryInputs, layers: Sequence[RedundancyTable]) -> dict[int, float]:
    """Variance for every frequency from the unsimplified layer recursion.

    ``layers[l]`` is the single-layer redundancy table of encoding layer l+1.
    Uses alpha_k = (R_l(k) - delta_k0)/(d^2 - 1) without dropping the delta.
    """
    d = ti.d
    span = sum(t.omega_max for t in layers)
    lo, hi = -span, span
    size = hi - lo + 1
    zero = -lo
    delta = np.zeros(size)
    delta[zero] = 1.0
    r1 = _dense(layers[0], lo, hi)
    a2 = delta / (d + 1) + r1 / (d * (d + 1))
    for table in layers[1:]:
        m = table.omega_max
        alpha = _dense(table, -m, m)
        alpha[m] -= 1.0
        alpha /= d * d - 1
        conv = np.convolve(a2, alpha)[m : m + size]
        a2 = conv + d * delta / (d * d - 1) - _dense(table, lo, hi) / (d * (d * d - 1))
    second = ti.k_zero * delta + ti.k_offzero * a2
    second[zero] -= (ti.trace / d) ** 2
    return {w: float(second[w - lo]) for w in range(lo, hi + 1) if abs(second[w - lo]) > 0}


def bound_approx_2design(ti: TheoryInputs, norm: str, eps: float, omega: int, R: int) -> float:
    """Single-layer variance plus the polynomial correction for an eps-approximate 2-design."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    d = ti.d
    c1 = ti.k_offzero
    if norm == "diamond":
        q = c1 * eps + ti.norm_1**2 * eps**2 + ti.norm_inf**2 * R * eps / (d * (d + 1))
    elif norm == "spectral":
        q = (c1 + ti.norm2_sq / (d * (d + 1))) * eps * math.sqrt(R) + ti.norm2_sq * eps**2 * R
    elif norm == "monomial":
        c2 = ti.c2_monomial
        q = (c1 / d**2 + c2 / (d * (d + 1))) * eps * R + (c2 / d**2) * (eps * R) ** 2
    else:
        raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")
    return var_2design_single(ti, omega, R) + q


def bound_model_variance(ti: TheoryInputs, eps: float) -> float:
    """Upper bound on Var_theta[f(x, theta)] for an eps_M-approximate 2-design."""
    return ti.norm2_sq / ti.d**2 + ti.norm2_sq * eps


def bound_local_2design(
    case: str, m: int, L2: int, R: int, *, rank: int | None = None, local_norm2_sq: float | None = None
) -> float:
    """Local 2-design bound: ``case`` is ``"bounded_norm"`` or ``"projector"``."""
    pref = (2 ** (m + 1) / (2 ** (2 * m) - 1)) ** (2 * L2)
    if case == "bounded_norm":
        if local_norm2_sq is None or local_norm2_sq > 2**m + 1e-12:
            raise ValueError(f"bounded_norm case requires ||O||_2^2 <= 2^m = {2 ** m}")
        return pref * R**2
    if case == "projector":
        if rank is None or not 1 <= rank <= 2**m:
            raise ValueError("projector case needs a rank in 1..2^m")
        return pref * (rank / 2**m) ** 2 * R**2
    raise ValueError(f"unknown case {case!r}")


def var_2design_lightcone(m: int, L1: int, L2: int, tr_o: float, tr_o2: float, R: int, omega: int = 1) -> float:
    """Variance when the whole light cone's trainable layers are exact 2-designs (w != 0)."""
    if omega == 0:
        raise ValueError("light-cone closed form is only derived for nonzero frequencies")
    q = 2**m
    denom = q * (2 ** (m * (L1 + L2 - 1)) + 1) * (2 ** (2 * m * L2) - 1)
    return (tr_o2 - tr_o**2 / q) * R / denom


def theory_table(ti: TheoryInputs, table: RedundancyTable) -> list[tuple[int, int, TheoryValue]]:
    return [(w, c, var_2design_single_detail(ti, w, c)) for w, c in sorted(table.entries.items())]


def partial_values(partials: Sequence[RedundancyTable], omega: int) -> list[int]:
    return [t[omega] for t in partials]


def reuploading_table(ti: TheoryInputs, partials: Sequence[RedundancyTable]) -> Mapping[int, TheoryValue]:
    return {w: var_2design_reuploading_detail(ti, w, partial_values(partials, w)) for w in sorted(partials[0].entries)}
