"""Haar second moments and empirical distances of ansatz families to a 2-design."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg.blas import zherk
from scipy.sparse.linalg import svds

from qfm.circuit import Gate, TrainableBlock
from qfm.simulator import apply_block

MIN_SAMPLES = 1000
CHUNK = 2000


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for task ``key`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def haar_unitaries(rng: np.random.Generator, d: int, size: int) -> np.ndarray:
    """``size`` Haar-random d x d unitaries: QR of a complex Gaussian with phase fix."""
    z = (rng.standard_normal((size, d, d)) + 1j * rng.standard_normal((size, d, d))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[:, None, :]


def weingarten(d: int) -> tuple[float, float]:
    """Wg(identity), Wg(swap) for the unitary group U(d), second order."""
    if d < 2:
        raise ValueError("second-moment Weingarten weights need d >= 2")
    return 1.0 / (d * d - 1), -1.0 / (d * (d * d - 1))


def haar_second_moment_entry(d: int, q: Sequence[int], r: Sequence[int], p: Sequence[int], s: Sequence[int]) -> float:
    """E[U_{q1 r1} U_{q2 r2} conj(U_{p1 s1}) conj(U_{p2 s2})] over Haar U(d)."""
    we, ws = weingarten(d)
    total = 0.0
    for sigma, tau in itertools.product(((0, 1), (1, 0)), repeat=2):
        if all(q[i] == p[sigma[i]] for i in range(2)) and all(r[i] == s[tau[i]] for i in range(2)):
            total += we if sigma == tau else ws
    return total


def _haar_chunk(d: int, q1: int, q2: int) -> np.ndarray:
    """Haar entries for fixed (q1, q2), axes (r1, r2, p1, p2, s1, s2)."""
    we, ws = weingarten(d)
    e = np.eye(d)
    p_id = np.outer(e[q1], e[q2])  # (p1, p2)
    p_sw = np.outer(e[q2], e[q1])
    s_id = np.einsum("ac,bd->abcd", e, e)  # (r1, r2, s1, s2): s1=r1, s2=r2
    s_sw = np.einsum("ad,bc->abcd", e, e)
    out = np.einsum("pq,abcd->abpqcd", we * p_id, s_id)
    out += np.einsum("pq,abcd->abpqcd", we * p_sw, s_sw)
    out += np.einsum("pq,abcd->abpqcd", ws * p_id, s_sw)
    out += np.einsum("pq,abcd->abpqcd", ws * p_sw, s_id)
    return out


def _components(block: TrainableBlock) -> list[tuple[int, ...]]:
    """Qubit groups that no gate connects; the block factorizes over them."""
    parent = {q: q for q in block.qubits}

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for g in block.gates:
        for w in g.wires[1:]:
            parent[find(w)] = find(g.wires[0])
    groups: dict[int, list[int]] = {}
    for q in block.qubits:
        groups.setdefault(find(q), []).append(q)
    comps = sorted((tuple(sorted(g)) for g in groups.values()), key=lambda g: g[0])
    flat = [q for c in comps for q in c]
    if flat != list(block.qubits) or any(c != tuple(range(c[0], c[-1] + 1)) for c in comps):
        # tensor factors must be contiguous and ordered to interleave indices
        return [tuple(block.qubits)]
    return comps


def _sub_block(block: TrainableBlock, qubits: tuple[int, ...]) -> TrainableBlock:
    pos = {q: i for i, q in enumerate(qubits)}
    gates = tuple(Gate(g.kind, tuple(pos[w] for w in g.wires), g.slot) for g in block.gates if g.wires[0] in pos)
    return TrainableBlock(block.name, tuple(range(len(qubits))), gates, block.n_params, block.n_haar)


def _local(block: TrainableBlock) -> TrainableBlock:
    return _sub_block(block, tuple(block.qubits))


def sample_unitaries(block: TrainableBlock, rng: np.random.Generator, size: int) -> np.ndarray:
    """Matrices of ``size`` random instances of ``block`` (uniform angles, Haar draws)."""
    block = _local(block)
    return _unitaries(block, *sample_parameters(block, rng, size))


def sample_parameters(block: TrainableBlock, rng: np.random.Generator, size: int) -> tuple[np.ndarray, list[np.ndarray]]:
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(size, block.n_params))
    sizes = [0] * block.n_haar
    for g in block.gates:
        if g.kind == "haar":
            sizes[g.slot - block.haar_offset] = 2 ** len(g.wires)
    haar = [haar_unitaries(rng, k, size) for k in sizes]
    return theta, haar


def _unitaries(block: TrainableBlock, theta: np.ndarray, haar: list[np.ndarray]) -> np.ndarray:
    k = len(block.qubits)
    size = theta.shape[0]
    psi = np.broadcast_to(np.eye(2**k, dtype=complex)[None], (size, 2**k, 2**k))
    out = apply_block(np.array(psi), block, theta, haar, k)
    return np.swapaxes(out, 1, 2)


def _pairs(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Canonical unordered pairs (a <= b) of flattened matrix positions."""
    a, b = np.triu_indices(k * k)
    return a, b


class _ComponentMoment:
    """Accumulates E[x_i conj(x_j)] with x = U_a U_b over canonical pairs."""

    def __init__(self, k: int) -> None:
        self.k = k
        self.a, self.b = _pairs(k)
        n = len(self.a)
        self.acc = np.zeros((n, n), dtype=complex, order="F")
        self.count = 0

    def add(self, u: np.ndarray) -> None:
        flat = u.reshape(len(u), -1)
        x = flat[:, self.a] * flat[:, self.b]
        self.acc = zherk(1.0, np.asfortranarray(x.T), c=self.acc, beta=1.0, trans=0, overwrite_c=1)
        self.count += len(u)

    def reduced(self) -> np.ndarray:
        upper = np.triu(self.acc)
        full = upper + np.triu(upper, 1).conj().T
        return full / self.count

    def tensor(self) -> np.ndarray:
        """Full moment tensor, axes (q1, q2, r1, r2, p1, p2, s1, s2)."""
        k = self.k
        red = self.reduced()
        idx = np.full((k * k, k * k), -1)
        idx[self.a, self.b] = np.arange(len(self.a))
        idx[self.b, self.a] = np.arange(len(self.a))
        q1, q2, r1, r2 = np.indices((k,) * 4).reshape(4, -1)
        row = idx[q1 * k + r1, q2 * k + r2]
        return red[np.ix_(row, row)].reshape((k,) * 8)


@dataclass
class MomentReport:
    d: int
    samples: int
    epsilon_m: float
    stderr: float
    argmax_indices: tuple[int, ...]
    epsilon_inf: float | None = None
    warnings: list[str] = field(default_factory=list)
    max_deviation: float = 0.0

    def as_dict(self) -> dict:
        out = {
            "d": self.d,
            "samples": self.samples,
            "epsilon_m": self.epsilon_m,
            "stderr": self.stderr,
            "argmax_indices": list(self.argmax_indices),
        }
        if self.epsilon_inf is not None:
            out["epsilon_inf"] = self.epsilon_inf
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out


def _accumulate(block: TrainableBlock, samples: int, seed: int) -> tuple[list[tuple[int, ...]], list[_ComponentMoment]]:
    block = _local(block)
    comps = _components(block)
    subs = [_sub_block(block, c) for c in comps]
    moms = [_ComponentMoment(2 ** len(c)) for c in comps]
    for i, start in enumerate(range(0, samples, CHUNK)):
        size = min(CHUNK, samples - start)
        theta, haar = sample_parameters(block, rng_for(seed, 1, i), size)
        for sub, mom in zip(subs, moms):
            mom.add(_unitaries(sub, theta, haar))
    return comps, moms


def _canonical_haar(k: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    q1, r1 = divmod(a, k)
    q2, r2 = divmod(b, k)
    we, ws = weingarten(k)
    Q1, Q2, R1, R2 = (v[:, None] for v in (q1, q2, r1, r2))
    P1, P2, S1, S2 = (v[None, :] for v in (q1, q2, r1, r2))
    pid = (Q1 == P1) & (Q2 == P2)
    psw = (Q1 == P2) & (Q2 == P1)
    sid = (R1 == S1) & (R2 == S2)
    ssw = (R1 == S2) & (R2 == S1)
    same = (pid & sid).astype(float) + (psw & ssw)
    cross = (pid & ssw).astype(float) + (psw & sid)
    return we * same + ws * cross


def _entry_stderr(block: TrainableBlock, comps, samples: int, seed: int, idx: tuple[int, ...]) -> float:
    """Standard error of the empirical entry at full index ``idx`` (second pass)."""
    block = _local(block)
    subs = [_sub_block(block, c) for c in comps]
    digits = []
    for c in comps:
        digits.append(len(c))
    # split each full index into per-component digits
    per = [[] for _ in comps]
    for v in idx:
        rem = v
        parts = []
        for width in reversed(digits):
            rem, dig = divmod(rem, 2**width)
            parts.append(dig)
        for j, dig in enumerate(reversed(parts)):
            per[j].append(dig)
    sums = [np.zeros(2, dtype=complex) for _ in comps]
    sq = [0.0 for _ in comps]
    for i, start in enumerate(range(0, samples, CHUNK)):
        size = min(CHUNK, samples - start)
        theta, haar = sample_parameters(block, rng_for(seed, 1, i), size)
        for j, sub in enumerate(subs):
            u = _unitaries(sub, theta, haar)
            q1, q2, p1, p2, r1, r2, s1, s2 = per[j]
            v = u[:, q1, r1] * u[:, q2, r2] * np.conj(u[:, p1, s1] * u[:, p2, s2])
            sums[j][0] += v.sum()
            sq[j] += float(np.sum(np.abs(v) ** 2))
    means = [s[0] / samples for s in sums]
    var_hat = [max(sq[j] / samples - abs(means[j]) ** 2, 0.0) / samples for j in range(len(comps))]
    prod_m = float(np.prod([abs(m) ** 2 for m in means]))
    prod_all = float(np.prod([abs(means[j]) ** 2 + var_hat[j] for j in range(len(comps))]))
    return float(np.sqrt(max(prod_all - prod_m, 0.0)))


def _scan_product(tensors: list[np.ndarray], dims: list[int]) -> tuple[float, tuple[int, ...]]:
    """Max |Haar - prod of component tensors| over all d^8 entries, chunked on (q1, q2)."""
    d = int(np.prod(dims))
    best = -1.0
    where: tuple[int, ...] = ()
    for q1, q2 in itertools.product(range(d), repeat=2):
        acc = None
        rem1, rem2 = q1, q2
        digs = []
        for k in reversed(dims):
            rem1, a = divmod(rem1, k)
            rem2, b = divmod(rem2, k)
            digs.append((a, b))
        digs.reverse()
        for t, (a, b), k in zip(tensors, digs, dims):
            s = t[a, b]  # (r1, r2, p1, p2, s1, s2)
            if acc is None:
                acc = s
            else:
                K = acc.shape[0]
                acc = np.multiply.outer(acc, s).transpose(0, 6, 1, 7, 2, 8, 3, 9, 4, 10, 5, 11)
                acc = acc.reshape((K * k,) * 6)
        dev = np.abs(_haar_chunk(d, q1, q2) - acc)
        i = int(np.argmax(dev))
        if dev.flat[i] > best:
            best = float(dev.flat[i])
            r1, r2, p1, p2, s1, s2 = np.unravel_index(i, dev.shape)
            where = (q1, q2, int(p1), int(p2), int(r1), int(r2), int(s1), int(s2))
    return best, where


def empirical_epsilon_monomial(block: TrainableBlock, samples: int, seed: int) -> MomentReport:
    """eps_M = d^2 max |M_Haar - M_emp| over every second-moment tensor entry.

    Index tuples are reported as (q1, q2, p1, p2, r1, r2, s1, s2) for the entry
    E[U_{q1 r1} U_{q2 r2} conj(U_{p1 s1}) conj(U_{p2 s2})].
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    warnings = []
    if samples < MIN_SAMPLES:
        warnings.append(f"only {samples} samples (< {MIN_SAMPLES}); epsilon estimate is noisy")
    k_all = len(block.qubits)
    d = 2**k_all
    comps = _components(_local(block))
    if len(comps) == 1 and d > 8:
        raise ValueError("dense moment scan of an entangling block needs d <= 8; factorized blocks may go to d = 16")
    if d > 16:
        raise ValueError("moment scan limited to d <= 16")
    comps, moms = _accumulate(block, samples, seed)
    if len(comps) == 1:
        mom = moms[0]
        dev = np.abs(mom.reduced() - _canonical_haar(d, mom.a, mom.b))
        i, j = np.unravel_index(int(np.argmax(dev)), dev.shape)
        best = float(dev[i, j])
        q1, r1 = divmod(int(mom.a[i]), d)
        q2, r2 = divmod(int(mom.b[i]), d)
        p1, s1 = divmod(int(mom.a[j]), d)
        p2, s2 = divmod(int(mom.b[j]), d)
        where = (q1, q2, p1, p2, r1, r2, s1, s2)
    else:
        dims = [2 ** len(c) for c in comps]
        best, where = _scan_product([m.tensor() for m in moms], dims)
    se = _entry_stderr(block, comps, samples, seed, where)
    return MomentReport(d, samples, d * d * best, d * d * se, where, None, warnings, best)


def moment_operator(block: TrainableBlock, samples: int, seed: int) -> np.ndarray:
    """Empirical E[W (x) W (x) W* (x) W*] as a d^4 x d^4 matrix, rows (q1 q2 p1 p2), cols (r1 r2 s1 s2)."""
    comps, moms = _accumulate(block, samples, seed)
    t = None
    for m in moms:
        s = m.tensor()
        if t is None:
            t = s
        else:
            K, k = t.shape[0], s.shape[0]
            t = np.multiply.outer(t, s)
            t = t.transpose([x for i in range(8) for x in (i, 8 + i)]).reshape((K * k,) * 8)
    d = t.shape[0]
    # (q1, q2, r1, r2, p1, p2, s1, s2) -> (q1, q2, p1, p2, r1, r2, s1, s2)
    return t.transpose(0, 1, 4, 5, 2, 3, 6, 7).reshape(d**4, d**4)


def haar_moment_operator(d: int) -> np.ndarray:
    rows = [_haar_chunk(d, q1, q2) for q1 in range(d) for q2 in range(d)]
    t = np.stack(rows).reshape((d,) * 8)  # (q1, q2, r1, r2, p1, p2, s1, s2)
    return t.transpose(0, 1, 4, 5, 2, 3, 6, 7).reshape(d**4, d**4)


def empirical_epsilon_spectral(block: TrainableBlock, samples: int, seed: int) -> float:
    """Largest singular value of the Haar minus empirical second-moment operator."""
    d = 2 ** len(block.qubits)
    if d > 8:
        raise ValueError(f"spectral distance needs the dense d^4 x d^4 operator; d={d} > 8")
    diff = haar_moment_operator(d) - moment_operator(block, samples, seed)
    if diff.shape[0] <= 1024:
        return float(np.linalg.norm(diff, 2))
    return float(svds(diff, k=1, return_singular_vectors=False, random_state=0)[0])
