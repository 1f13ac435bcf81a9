"""Batched dense statevector simulation of quantum Fourier models.

States are arrays of shape ``(B, R, 2**n)``: ``B`` indexes parameter sets
(rows of ``theta`` and Haar draws), ``R`` indexes inputs ``x`` or, in the
exact-coefficient path, eigenvalue path sums. Qubit 0 is the most
significant bit of the basis index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import sparse

from qfm.circuit import ROTATIONS, Circuit, TrainableBlock
from qfm.spectrum import EncodingLayer

_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)

OBSERVABLE_KINDS = ("global_zero_projector", "local_zero_average", "local_site_projector", "custom_hermitian")


@dataclass(frozen=True)
class Observable:
    """Hermitian observable, stored as a diagonal when it is one."""

    kind: str
    n_qubits: int
    diag: np.ndarray | None = field(default=None, repr=False)
    matrix: np.ndarray | None = field(default=None, repr=False)
    site: tuple[int, ...] = ()
    rank: int = 0

    @classmethod
    def global_zero(cls, n: int) -> "Observable":
        diag = np.zeros(2**n)
        diag[0] = 1.0
        return cls("global_zero_projector", n, diag)

    @classmethod
    def local_zero_average(cls, n: int) -> "Observable":
        z = np.arange(2**n)
        zeros = sum(1 - ((z >> (n - 1 - j)) & 1) for j in range(n))
        return cls("local_zero_average", n, zeros / n)

    @classmethod
    def local_site_projector(cls, n: int, site: Sequence[int], rank: int = 1) -> "Observable":
        """Projector onto the first ``rank`` basis states of the qubits in ``site``."""
        site = tuple(int(q) for q in site)
        if not 1 <= rank <= 2 ** len(site):
            raise ValueError("rank out of range")
        z = np.arange(2**n)
        local = np.zeros(2**n, dtype=np.int64)
        for q in site:
            local = (local << 1) | ((z >> (n - 1 - q)) & 1)
        return cls("local_site_projector", n, (local < rank).astype(float), site=site, rank=rank)

    @classmethod
    def custom(cls, matrix: np.ndarray) -> "Observable":
        matrix = np.asarray(matrix, dtype=complex)
        d = matrix.shape[0]
        n = int(round(np.log2(d)))
        if matrix.shape != (d, d) or 2**n != d:
            raise ValueError("observable must be a 2^n x 2^n matrix")
        if not np.allclose(matrix, matrix.conj().T, atol=1e-12):
            raise ValueError("observable is not Hermitian")
        if np.allclose(matrix, np.diag(np.diag(matrix)), atol=0):
            return cls("custom_hermitian", n, np.real(np.diag(matrix)).copy())
        return cls("custom_hermitian", n, None, matrix)

    @classmethod
    def build(cls, kind: str, n: int, site: Sequence[int] = (0,), rank: int = 1) -> "Observable":
        if kind == "global_zero_projector":
            return cls.global_zero(n)
        if kind == "local_zero_average":
            return cls.local_zero_average(n)
        if kind == "local_site_projector":
            return cls.local_site_projector(n, site, rank)
        raise ValueError(f"unknown observable kind {kind!r}")

    def scaled(self, factor: float) -> "Observable":
        if self.diag is not None:
            return Observable(self.kind, self.n_qubits, self.diag * factor, None, self.site, self.rank)
        return Observable(self.kind, self.n_qubits, None, self.matrix * factor, self.site, self.rank)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def dense(self) -> np.ndarray:
        return np.diag(self.diag).astype(complex) if self.diag is not None else self.matrix

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero eigenvalues and the matching eigenvectors (as rows)."""
        if self.diag is not None:
            nz = np.flatnonzero(self.diag)
            vecs = np.zeros((len(nz), self.dim), dtype=complex)
            vecs[np.arange(len(nz)), nz] = 1.0
            return self.diag[nz].astype(float), vecs
        w, v = np.linalg.eigh(self.matrix)
        keep = np.abs(w) > 1e-14
        return w[keep], v[:, keep].T.copy()

    @property
    def spectrum(self) -> np.ndarray:
        return np.sort(self.diag) if self.diag is not None else np.linalg.eigvalsh(self.matrix)

    @property
    def trace(self) -> float:
        return float(np.sum(self.diag)) if self.diag is not None else float(np.real(np.trace(self.matrix)))

    @property
    def norm2_sq(self) -> float:
        """Squared Hilbert-Schmidt norm Tr(O^2)."""
        if self.diag is not None:
            return float(np.sum(self.diag**2))
        return float(np.sum(np.abs(self.matrix) ** 2))

    @property
    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.spectrum)))

    @property
    def norm_1(self) -> float:
        return float(np.sum(np.abs(self.spectrum)))

    @property
    def abs_entry_sum(self) -> float:
        """Sum of |O_ij| over all entries."""
        if self.diag is not None:
            return float(np.sum(np.abs(self.diag)))
        return float(np.sum(np.abs(self.matrix)))

    def expectation(self, psi: np.ndarray) -> np.ndarray:
        if self.diag is not None:
            return np.einsum("...z,z->...", np.abs(psi) ** 2, self.diag)
        return np.real(np.einsum("...i,ij,...j->...", psi.conj(), self.matrix, psi))


def rotation(kind: str, theta: np.ndarray) -> np.ndarray:
    """Batched Pauli rotation exp(-i theta P / 2), shape ``theta.shape + (2, 2)``."""
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    out = np.empty(theta.shape + (2, 2), dtype=complex)
    if kind == "rx":
        out[..., 0, 0] = c
        out[..., 0, 1] = -1j * s
        out[..., 1, 0] = -1j * s
        out[..., 1, 1] = c
    elif kind == "ry":
        out[..., 0, 0] = c
        out[..., 0, 1] = -s
        out[..., 1, 0] = s
        out[..., 1, 1] = c
    elif kind == "rz":
        out[..., 0, 0] = c - 1j * s
        out[..., 0, 1] = 0
        out[..., 1, 0] = 0
        out[..., 1, 1] = c + 1j * s
    else:
        raise ValueError(f"not a Pauli rotation: {kind!r}")
    return out


@lru_cache(maxsize=None)
def _cnot_perm(n: int, c: int, t: int) -> np.ndarray:
    z = np.arange(2**n)
    cbit = (z >> (n - 1 - c)) & 1
    return z ^ (cbit << (n - 1 - t))


@lru_cache(maxsize=None)
def _cz_sign(n: int, a: int, b: int) -> np.ndarray:
    z = np.arange(2**n)
    both = ((z >> (n - 1 - a)) & 1) & ((z >> (n - 1 - b)) & 1)
    return 1.0 - 2.0 * both


def apply_1q(psi: np.ndarray, mat: np.ndarray, q: int, n: int) -> np.ndarray:
    """Apply a (2,2) or batched (B,2,2) matrix on qubit ``q``."""
    B, R, d = psi.shape
    view = psi.reshape(B, R, 2**q, 2, 2 ** (n - 1 - q))
    if mat.ndim == 2:
        out = np.einsum("ij,brajc->braic", mat, view)
    else:
        out = np.einsum("bij,brajc->braic", mat, view)
    return out.reshape(B, R, d)


def apply_matrix(psi: np.ndarray, mat: np.ndarray, wires: Sequence[int], n: int) -> np.ndarray:
    """Apply a ``2^k``-dimensional (optionally batched) matrix on ``wires``."""
    if len(wires) == 1:
        return apply_1q(psi, mat, wires[0], n)
    B, R, d = psi.shape
    k = len(wires)
    axes = [2 + w for w in wires]
    t = psi.reshape((B, R) + (2,) * n)
    t = np.moveaxis(t, axes, list(range(2 + n - k, 2 + n)))
    shape = t.shape
    t = t.reshape(B, R, -1, 2**k)
    if mat.ndim == 2:
        t = t @ mat.T
    else:
        t = np.einsum("bij,brsj->brsi", mat, t)
    t = np.moveaxis(t.reshape(shape), list(range(2 + n - k, 2 + n)), axes)
    return np.ascontiguousarray(t).reshape(B, R, d)


def _compile(block: TrainableBlock) -> list[tuple]:
    """Group runs of rotations on one wire so they are applied as one matrix."""
    ops: list[tuple] = []
    for g in block.gates:
        if g.kind in ROTATIONS:
            if ops and ops[-1][0] == "rot" and ops[-1][1] == g.wires[0]:
                ops[-1][2].append((g.kind, g.slot))
            else:
                ops.append(("rot", g.wires[0], [(g.kind, g.slot)]))
        else:
            ops.append((g.kind, g.wires, g.slot))
    return ops


def _fused(seq: list[tuple[str, int]], theta: np.ndarray, adjoint: bool) -> np.ndarray:
    mat = None
    for kind, slot in seq:
        r = rotation(kind, theta[:, slot])
        mat = r if mat is None else r @ mat
    if adjoint:
        mat = np.conj(np.swapaxes(mat, -1, -2))
    return mat


def apply_block(
    psi: np.ndarray,
    block: TrainableBlock,
    theta: np.ndarray,
    haar: Sequence[np.ndarray],
    n: int,
    adjoint: bool = False,
) -> np.ndarray:
    ops = _compile(block)
    if adjoint:
        ops = ops[::-1]
    for op in ops:
        kind = op[0]
        if kind == "rot":
            psi = apply_1q(psi, _fused(op[2], theta, adjoint), op[1], n)
        elif kind == "cnot":
            psi = psi[..., _cnot_perm(n, *op[1])]
        elif kind == "cz":
            psi = psi * _cz_sign(n, *op[1])
        elif kind == "haar":
            u = haar[op[2]]
            if adjoint:
                u = np.conj(np.swapaxes(u, -1, -2))
            psi = apply_matrix(psi, u, op[1], n)
    return psi


def _basis_change(psi: np.ndarray, layer: EncodingLayer, n: int) -> np.ndarray:
    for b in layer.blocks:
        if b.axis == "x":
            for q in b.qubits:
                psi = apply_1q(psi, _H, q, n)
    return psi


def _check(circuit: Circuit, theta: np.ndarray, haar: Sequence[np.ndarray] | None) -> tuple[np.ndarray, list]:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        theta = theta[None, :]
    if theta.shape[-1] != circuit.n_params:
        raise ValueError(f"expected {circuit.n_params} parameters, got {theta.shape[-1]}")
    haar = list(haar) if haar is not None else []
    if len(haar) != circuit.n_haar:
        raise ValueError(f"circuit needs {circuit.n_haar} Haar unitaries, got {len(haar)}")
    B = theta.shape[0]
    for u in haar:
        if u.ndim == 3:
            B = max(B, u.shape[0])
    theta = np.broadcast_to(theta, (B, theta.shape[1]))
    haar = [np.broadcast_to(u, (B,) + u.shape[-2:]) if u.ndim == 3 else u for u in haar]
    return theta, haar


def states(
    circuit: Circuit,
    theta: np.ndarray,
    xs: np.ndarray | float,
    haar: Sequence[np.ndarray] | None = None,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Output states, shape ``(B, R, d)`` for ``B`` parameter rows and ``R`` inputs."""
    theta, haar = _check(circuit, theta, haar)
    n = circuit.n_qubits
    d = 2**n
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    B = theta.shape[0]
    if initial is None:
        psi = np.zeros((B, len(xs), d), dtype=complex)
        psi[:, :, 0] = 1.0
    else:
        psi = np.broadcast_to(initial, (B,) + initial.shape[-2:]).astype(complex)
    scale = float(circuit.spec.lattice_scale)
    for el in circuit.elements:
        if isinstance(el, TrainableBlock):
            psi = apply_block(psi, el, theta, haar, n)
        else:
            diag = el.diagonal(n) / scale
            psi = _basis_change(psi, el, n)
            psi = psi * np.exp(-1j * xs[:, None] * diag[None, :])[None]
            psi = _basis_change(psi, el, n)
    return psi


def evaluate_batch(
    circuit: Circuit,
    theta: np.ndarray,
    xs: np.ndarray | float,
    obs: Observable | None = None,
    haar: Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """f for every (parameter row, input) pair, shape ``(B, R)``."""
    obs = obs or Observable.global_zero(circuit.n_qubits)
    return obs.expectation(states(circuit, theta, xs, haar))


def evaluate(
    circuit: Circuit,
    theta: np.ndarray,
    x: float,
    obs: Observable | None = None,
    haar: Sequence[np.ndarray] | None = None,
) -> float:
    """f(x, theta) = <0|U^dag O U|0>."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise ValueError("theta must be one parameter vector")
    return float(evaluate_batch(circuit, theta, x, obs, haar)[0, 0])


def shifted_parameters(theta: np.ndarray) -> np.ndarray:
    """Rows theta + pi/2 e_i followed by theta - pi/2 e_i."""
    P = len(theta)
    eye = np.eye(P) * (np.pi / 2)
    return np.concatenate([theta[None, :] + eye, theta[None, :] - eye])


def gradient(
    circuit: Circuit,
    theta: np.ndarray,
    x: float,
    obs: Observable | None = None,
    haar: Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """Exact parameter-shift gradient of f with respect to every slot."""
    theta = np.asarray(theta, dtype=float)
    P = circuit.n_params
    if theta.shape != (P,):
        raise ValueError(f"expected {P} parameters, got {theta.shape}")
    if P == 0:
        return np.zeros(0)
    f = evaluate_batch(circuit, shifted_parameters(theta), x, obs, haar)[:, 0]
    return 0.5 * (f[:P] - f[P:])


def unitary(circuit: Circuit, theta: np.ndarray, x: float, haar: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """Dense U(x, theta) for small circuits, assembled column by column."""
    if circuit.n_qubits > 10:
        raise ValueError("dense unitary only for n <= 10")
    d = circuit.dim
    psi = states(circuit, theta, np.full(d, x), haar, initial=np.eye(d, dtype=complex)[None])
    return psi[0].T


@lru_cache(maxsize=64)
def _bin_matrix(mus: tuple[int, ...]) -> tuple[np.ndarray, sparse.csr_matrix]:
    m = np.asarray(mus, dtype=np.int64)
    diff = (m[:, None] - m[None, :]).ravel()
    freqs, idx = np.unique(diff, return_inverse=True)
    mat = sparse.csr_matrix((np.ones(len(diff)), (np.arange(len(diff)), idx)), shape=(len(diff), len(freqs)))
    return freqs, mat


def exact_coefficients(
    circuit: Circuit,
    theta: np.ndarray,
    obs: Observable | None = None,
    haar: Sequence[np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Fourier coefficients from eigenvalue path sums, without sampling x.

    The state is carried as a list of vectors indexed by the lattice sum of
    encoding eigenvalues picked so far; the observable is pulled back through
    the last trainable block. Returns lattice frequencies ``(F,)`` and
    coefficients ``(B, F)`` of ``exp(i w x / lattice_scale)``.
    """
    theta, haar = _check(circuit, theta, haar)
    obs = obs or Observable.global_zero(circuit.n_qubits)
    n = circuit.n_qubits
    d = 2**n
    B = theta.shape[0]
    elements = list(circuit.elements)
    last = max((i for i, e in enumerate(elements) if isinstance(e, EncodingLayer)), default=-1)

    psi = np.zeros((B, 1, d), dtype=complex)
    psi[:, 0, 0] = 1.0
    mus = np.zeros(1, dtype=np.int64)
    cols = np.arange(d)[None, :]
    for el in elements[: last + 1]:
        if isinstance(el, TrainableBlock):
            psi = apply_block(psi, el, theta, haar, n)
        else:
            lam = el.diagonal(n)
            psi = _basis_change(psi, el, n)
            sums = mus[:, None] + lam[None, :]
            new_mus = np.unique(sums)
            idx = np.searchsorted(new_mus, sums)
            out = np.zeros((B, len(new_mus), d), dtype=complex)
            out[:, idx, cols] = psi
            psi = _basis_change(out, el, n)
            mus = new_mus

    weights, vecs = obs.eigensystem()
    back = np.broadcast_to(vecs[None], (B,) + vecs.shape).astype(complex)
    for el in reversed(elements[last + 1 :]):
        back = apply_block(back, el, theta, haar, n, adjoint=True)

    z = np.einsum("bkd,bmd->bkm", back.conj(), psi)
    gram = np.einsum("k,bkp,bkq->bpq", weights, z.conj(), z)
    freqs, mat = _bin_matrix(tuple(int(m) for m in mus))
    M = len(mus)
    coeffs = (mat.T @ gram.reshape(B, M * M).T).T
    return freqs, np.asarray(coeffs)
