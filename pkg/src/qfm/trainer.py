"""Fit a quantum Fourier model to a single-frequency sinusoid and record how its coefficients move."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from qfm.circuit import Circuit
from qfm.fourier import CoefficientSet, Grid, coefficient_batch, extract_coefficients, sampling_grid
from qfm.moments import rng_for
from qfm.simulator import Observable
from qfm.spectrum import RedundancyTable, full_redundancy

_BATCH = 64  # parameter rows per exact-coefficient call


@dataclass(frozen=True)
class TrainConfig:
    """Target is ``offset + amplitude * cos(omega * x)``; ``omega`` is a physical frequency."""

    omega: float
    amplitude: float = 0.5
    offset: float = 0.0
    grid_points: int | None = None
    epochs: int = 300
    lr: float = 0.05
    optimizer: str = "adam"
    seed: int = 0
    snapshot_every: int = 10
    max_epochs: int = 2000
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    fd_check: bool = True

    def __post_init__(self) -> None:
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 1 <= self.epochs <= self.max_epochs:
            raise ValueError(f"epochs must lie in 1..{self.max_epochs}")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class TrainTrace:
    loss: np.ndarray  # loss[e] before update e; last entry is the final loss
    snapshot_epochs: list[int]
    snapshots: list[np.ndarray]  # |c_w| on ``freqs`` at each snapshot epoch
    freqs: np.ndarray
    lattice_scale: Fraction
    theta: np.ndarray
    thetas: list[np.ndarray] = field(repr=False)
    fd_error: float | None = None

    @property
    def final_loss(self) -> float:
        return float(self.loss[-1])


def lattice_frequency(table: RedundancyTable, omega: float) -> int:
    """Map a physical frequency to the lattice, rejecting anything outside the spectrum."""
    scale = float(table.lattice_scale)
    w = round(omega * scale)
    if abs(w - omega * scale) < 1e-9 and table[w] > 0:
        return int(w)
    freqs = table.frequencies
    dist = np.abs(freqs / scale - omega)
    near = freqs[dist <= dist.min() + 1e-12]
    names = ", ".join(repr(float(f) / scale) for f in near)
    raise ValueError(f"target frequency {omega!r} is not in the model spectrum; nearest: {names}")


def target_coefficients(grid: Grid, w: int, amplitude: float, offset: float) -> np.ndarray:
    t = np.zeros(grid.n_points, dtype=complex)
    t[grid.kmax] += offset
    if w:
        k = abs(w) // grid.step
        t[grid.kmax + k] += amplitude / 2
        t[grid.kmax - k] += amplitude / 2
    else:
        t[grid.kmax] += amplitude
    return t


def target_values(xs: np.ndarray, omega: float, amplitude: float, offset: float) -> np.ndarray:
    return offset + amplitude * np.cos(omega * np.asarray(xs))


class _Objective:
    """MSE over a uniform grid of at least Nyquist size, evaluated through Parseval.

    For a grid of N >= 2K+1 points the mean squared error equals
    sum_w |c_w - t_w|^2, and parameter shifts of the coefficients give the
    same gradient as averaging 2 (f - y) df/dtheta over the grid.
    """

    def __init__(self, circuit: Circuit, obs: Observable, grid: Grid, target: np.ndarray):
        self.circuit = circuit
        self.obs = obs
        self.grid = grid
        self.target = target

    def coefficients(self, thetas: np.ndarray) -> np.ndarray:
        parts = [
            coefficient_batch(self.circuit, thetas[i : i + _BATCH], self.obs, None, "exact", self.grid)[1]
            for i in range(0, len(thetas), _BATCH)
        ]
        return np.concatenate(parts)

    def loss(self, theta: np.ndarray) -> float:
        c = self.coefficients(theta[None])[0]
        return float(np.sum(np.abs(c - self.target) ** 2))

    def loss_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        P = len(theta)
        rows = np.repeat(theta[None], 2 * P + 1, axis=0)
        rows[1 : P + 1][np.arange(P), np.arange(P)] += np.pi / 2
        rows[P + 1 :][np.arange(P), np.arange(P)] -= np.pi / 2
        c = self.coefficients(rows)
        resid = c[0] - self.target
        dc = 0.5 * (c[1 : P + 1] - c[P + 1 :])
        grad = 2.0 * np.real(dc @ resid.conj())
        return float(np.sum(np.abs(resid) ** 2)), grad, c[0]


def finite_difference_check(obj: _Objective, theta: np.ndarray, grad: np.ndarray, h: float = 1e-5, k: int = 4) -> float:
    """Largest |shift-rule - central difference| over the first ``k`` parameters."""
    err = 0.0
    for i in range(min(k, len(theta))):
        e = np.zeros_like(theta)
        e[i] = h
        fd = (obj.loss(theta + e) - obj.loss(theta - e)) / (2 * h)
        err = max(err, abs(fd - grad[i]))
    return err


def train(
    circuit: Circuit,
    config: TrainConfig,
    obs: Observable | None = None,
    theta0: np.ndarray | None = None,
) -> TrainTrace:
    obs = obs or Observable.global_zero(circuit.n_qubits)
    table = full_redundancy(circuit.spec)
    w = lattice_frequency(table, config.omega)
    grid = sampling_grid(table)
    if config.grid_points is not None and config.grid_points < grid.n_points:
        raise ValueError(f"grid_points {config.grid_points} is below the Nyquist size {grid.n_points}")
    target = target_coefficients(grid, w, config.amplitude, config.offset)
    obj = _Objective(circuit, obs, grid, target)

    if theta0 is None:
        theta = rng_for(config.seed, 3).uniform(0.0, 2.0 * np.pi, circuit.n_params)
    else:
        theta = np.array(theta0, dtype=float)
        if theta.shape != (circuit.n_params,):
            raise ValueError(f"theta0 must have length {circuit.n_params}")

    b1, b2 = config.betas
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    losses, snaps, snap_epochs, thetas = [], [], [], []
    fd_error = None
    for epoch in range(config.epochs + 1):
        loss, grad, c = obj.loss_and_grad(theta)
        if not math.isfinite(loss):
            raise FloatingPointError(f"loss became non-finite at epoch {epoch}")
        if epoch == 0 and config.fd_check:
            fd_error = finite_difference_check(obj, theta, grad)
            if fd_error > 1e-5:
                raise RuntimeError(f"gradient disagrees with finite differences ({fd_error:.3g})")
        losses.append(loss)
        if epoch % config.snapshot_every == 0 or epoch == config.epochs:
            snap_epochs.append(epoch)
            snaps.append(np.abs(c))
            thetas.append(theta.copy())
        if epoch == config.epochs:
            break
        if config.optimizer == "adam":
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad**2
            mh = m / (1 - b1 ** (epoch + 1))
            vh = v / (1 - b2 ** (epoch + 1))
            theta = theta - config.lr * mh / (np.sqrt(vh) + config.adam_eps)
        else:
            theta = theta - config.lr * grad
    return TrainTrace(np.array(losses), snap_epochs, snaps, grid.freqs, grid.lattice_scale, theta, thetas, fd_error)


def coefficient_trace(
    circuit: Circuit, thetas: Sequence[np.ndarray], obs: Observable | None = None, method: str = "dft"
) -> list[CoefficientSet]:
    return [extract_coefficients(circuit, t, obs, method=method) for t in thetas]


def redundancy_extremes(table: RedundancyTable) -> tuple[int, int]:
    """Nonzero lattice frequencies with the highest and the lowest redundancy (smallest |w| on ties)."""
    items = [(w, c) for w, c in table.entries.items() if w > 0]
    hi = min(items, key=lambda t: (-t[1], t[0]))[0]
    lo = min(items, key=lambda t: (t[1], t[0]))[0]
    return hi, lo
