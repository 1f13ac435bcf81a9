"""Fourier coefficients of quantum models: Nyquist sampling + DFT, and Monte-Carlo statistics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from qfm.circuit import Circuit
from qfm.moments import haar_unitaries, rng_for
from qfm.simulator import Observable, evaluate_batch, exact_coefficients
from qfm.spectrum import RedundancyTable, full_redundancy

MAX_POINTS = 3**12
_CHUNK_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class Grid:
    """Uniform sampling grid covering one period of the model."""

    step: int  # gcd of the lattice spectrum
    kmax: int  # largest frequency in units of ``step``
    lattice_scale: Fraction

    @property
    def n_points(self) -> int:
        return 2 * self.kmax + 1

    @property
    def period(self) -> float:
        return 2.0 * math.pi * float(self.lattice_scale) / self.step

    @property
    def xs(self) -> np.ndarray:
        return self.period * np.arange(self.n_points) / self.n_points

    @property
    def freqs(self) -> np.ndarray:
        return self.step * np.arange(-self.kmax, self.kmax + 1, dtype=np.int64)


def sampling_grid(table: RedundancyTable) -> Grid:
    freqs = table.frequencies
    nz = [int(abs(w)) for w in freqs if w]
    step = reduce(math.gcd, nz) if nz else 1
    kmax = int(max(nz) // step) if nz else 0
    grid = Grid(step, kmax, table.lattice_scale)
    if grid.n_points > MAX_POINTS:
        raise ValueError(f"{grid.n_points} sample points exceed the extraction guard of {MAX_POINTS}")
    return grid


@dataclass(frozen=True)
class CoefficientSet:
    freqs: np.ndarray  # lattice frequencies
    coeffs: np.ndarray
    lattice_scale: Fraction
    n_points: int

    def __getitem__(self, w: int) -> complex:
        i = np.searchsorted(self.freqs, w)
        if i < len(self.freqs) and self.freqs[i] == w:
            return complex(self.coeffs[i])
        return 0j

    @property
    def physical(self) -> np.ndarray:
        return self.freqs / float(self.lattice_scale)

    @property
    def sum_sq(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def reconstruct(self, xs: np.ndarray) -> np.ndarray:
        phase = np.exp(1j * np.outer(np.atleast_1d(xs), self.physical))
        return np.real(phase @ self.coeffs)


def _dft(circuit: Circuit, grid: Grid, theta: np.ndarray, obs: Observable, haar) -> np.ndarray:
    f = evaluate_batch(circuit, theta, grid.xs, obs, haar)
    c = np.fft.fft(f, axis=-1) / grid.n_points
    # FFT order 0..K, -K..-1  ->  -K..K
    return np.concatenate([c[:, grid.kmax + 1 :], c[:, : grid.kmax + 1]], axis=1)


def _exact(circuit: Circuit, grid: Grid, theta: np.ndarray, obs: Observable, haar) -> np.ndarray:
    freqs, c = exact_coefficients(circuit, theta, obs, haar)
    out = np.zeros((c.shape[0], grid.n_points), dtype=complex)
    out[:, (freqs // grid.step + grid.kmax).astype(np.int64)] = c
    return out


def coefficient_batch(
    circuit: Circuit,
    theta: np.ndarray,
    obs: Observable | None = None,
    haar=None,
    method: str = "dft",
    grid: Grid | None = None,
) -> tuple[Grid, np.ndarray]:
    """Coefficients for every parameter row, shape ``(B, 2K+1)`` on ``grid.freqs``."""
    obs = obs or Observable.global_zero(circuit.n_qubits)
    grid = grid or sampling_grid(full_redundancy(circuit.spec))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if method == "dft":
        return grid, _dft(circuit, grid, theta, obs, haar)
    if method == "exact":
        return grid, _exact(circuit, grid, theta, obs, haar)
    raise ValueError(f"unknown method {method!r}")


def extract_coefficients(
    circuit: Circuit, theta: np.ndarray, obs: Observable | None = None, haar=None, method: str = "dft"
) -> CoefficientSet:
    """Sample f on the Nyquist grid of the circuit's spectrum and take the DFT."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise ValueError("theta must be one parameter vector")
    grid, c = coefficient_batch(circuit, theta, obs, haar, method)
    return CoefficientSet(grid.freqs, c[0], grid.lattice_scale, grid.n_points)


def norm_bound_check(cs: CoefficientSet, obs: Observable, tol: float = 1e-9) -> dict:
    bound = obs.norm_inf**2
    s = cs.sum_sq
    return {"sum_sq": s, "bound": bound, "pass": bool(s <= bound + tol)}


@dataclass
class _Sums:
    n: int = 0
    s1: np.ndarray | None = None
    s2: np.ndarray | None = None
    s3: np.ndarray | None = None
    s4: np.ndarray | None = None
    syy: np.ndarray | None = None

    @classmethod
    def of(cls, y: np.ndarray) -> "_Sums":
        a = np.abs(y) ** 2
        return cls(len(y), y.sum(0), a.sum(0), (y * a).sum(0), (a * a).sum(0), (y * y).sum(0))

    def merge(self, other: "_Sums") -> "_Sums":
        if self.s1 is None:
            return other
        return _Sums(
            self.n + other.n,
            self.s1 + other.s1,
            self.s2 + other.s2,
            self.s3 + other.s3,
            self.s4 + other.s4,
            self.syy + other.syy,
        )


@dataclass
class CoefficientStats:
    freqs: np.ndarray
    lattice_scale: Fraction
    count: int
    mean: np.ndarray
    second_moment: np.ndarray
    variance: np.ndarray
    stderr: np.ndarray
    redundancy: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def physical(self) -> np.ndarray:
        return self.freqs / float(self.lattice_scale)

    def at(self, w: int) -> int:
        return int(np.searchsorted(self.freqs, w))


def stats_from_sums(shift: np.ndarray, s: _Sums) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Mean, E|c|^2, variance and its standard error from shifted power sums."""
    n = s.n
    delta = s.s1 / n
    mean = shift + delta
    ey2 = s.s2 / n
    c = np.abs(delta) ** 2
    var = np.maximum(ey2 - c, 0.0)
    e_ab = np.real(s.s3 / n * np.conj(delta))
    e_b2 = 0.5 * (ey2 * c + np.real(s.syy / n * np.conj(delta) ** 2))
    e_u4 = s.s4 / n - 4 * e_ab + 4 * e_b2 + 2 * c * ey2 - 4 * c * c + c * c
    var_u2 = np.maximum(e_u4 - var**2, 0.0)
    second = np.abs(mean) ** 2 + var
    return mean, second, var, np.sqrt(var_u2 / n)


def chunk_size(circuit: Circuit, grid: Grid, method: str) -> int:
    width = grid.n_points if method == "dft" else max(grid.n_points, 1)
    return int(max(16, min(4096, _CHUNK_ELEMENTS // (width * circuit.dim))))


def draw(circuit: Circuit, seed: int, index: int, size: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Parameters and Haar unitaries for chunk ``index`` of a seeded run."""
    rng = rng_for(seed, 2, index)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(size, circuit.n_params))
    haar = [haar_unitaries(rng, k, size) for k in circuit.haar_sizes]
    return theta, haar


def sample_coefficients(
    circuit: Circuit, samples: int, seed: int, obs: Observable | None = None, method: str = "dft"
) -> tuple[Grid, np.ndarray]:
    """All sampled coefficient vectors (for reference computations on small runs)."""
    grid = sampling_grid(full_redundancy(circuit.spec))
    size = chunk_size(circuit, grid, method)
    out = []
    for i, start in enumerate(range(0, samples, size)):
        theta, haar = draw(circuit, seed, i, min(size, samples - start))
        out.append(coefficient_batch(circuit, theta, obs, haar, method, grid)[1])
    return grid, np.concatenate(out)


def coefficient_statistics(
    circuit: Circuit,
    samples: int,
    seed: int,
    obs: Observable | None = None,
    method: str = "dft",
    threads: int = 1,
) -> CoefficientStats:
    """Per-frequency mean and variance of c_w over uniform angles and Haar draws.

    Chunks have a fixed size and their own random stream, and partial sums are
    merged in chunk order, so the result does not depend on ``threads``.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    table = full_redundancy(circuit.spec)
    grid = sampling_grid(table)
    size = chunk_size(circuit, grid, method)
    starts = list(range(0, samples, size))

    def run(i: int) -> np.ndarray:
        theta, haar = draw(circuit, seed, i, min(size, samples - starts[i]))
        return coefficient_batch(circuit, theta, obs, haar, method, grid)[1]

    first = run(0)
    shift = first.mean(axis=0)
    total = _Sums.of(first - shift)
    if len(starts) > 1:
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            for part in pool.map(lambda i: _Sums.of(run(i) - shift), range(1, len(starts))):
                total = total.merge(part)
    mean, second, var, se = stats_from_sums(shift, total)
    red = np.array([table[w] for w in grid.freqs], dtype=object)
    return CoefficientStats(grid.freqs, grid.lattice_scale, samples, mean, second, var, se, red, seed)
