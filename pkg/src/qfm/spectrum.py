"""Exact frequency spectra and redundancies of encoding Hamiltonians.

Frequencies live on an integer lattice: a physical frequency ``w`` is stored
as ``w * lattice_scale``. Counts are exact Python integers (numpy ``int64``
while they fit, ``object`` arrays beyond that).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_FREQUENCIES = 10**7
CLUSTER_TOL = 1e-9
_INT64_SAFE = 2**62

# Optimal Golomb rulers for the power-of-two mark counts we can reach
# cheaply; larger d falls back to the greedy Sidon construction.
_OPTIMAL_RULERS = {
    1: (0,),
    2: (0, 1),
    4: (0, 1, 4, 6),
    8: (0, 1, 4, 9, 15, 22, 32, 34),
    16: (0, 1, 4, 11, 26, 32, 56, 68, 76, 115, 117, 134, 150, 163, 168, 177),
}


@dataclass(frozen=True)
class EncodingBlock:
    """Diagonalized encoding Hamiltonian acting on ``qubits``.

    ``lattice`` holds the eigenvalues times the encoding's lattice scale, in the
    computational-basis order of the block (first qubit most significant).
    ``axis`` is the rotation axis used by the simulator; ``"x"`` means the
    block is conjugated by Hadamards on every qubit, which leaves the
    spectrum unchanged.
    """

    qubits: tuple[int, ...]
    eigenvalues: tuple[Fraction | float, ...]
    lattice: tuple[int, ...]
    axis: str = "z"

    def __post_init__(self) -> None:
        if len(self.eigenvalues) != 2 ** len(self.qubits):
            raise ValueError(
                f"block on {len(self.qubits)} qubits needs {2 ** len(self.qubits)} "
                f"eigenvalues, got {len(self.eigenvalues)}"
            )
        if len(self.lattice) != len(self.eigenvalues):
            raise ValueError("lattice and eigenvalues differ in length")
        if self.axis not in ("x", "z"):
            raise ValueError(f"unknown axis {self.axis!r}")


@dataclass(frozen=True)
class EncodingLayer:
    blocks: tuple[EncodingBlock, ...]

    @property
    def qubits(self) -> tuple[int, ...]:
        return tuple(q for b in self.blocks for q in b.qubits)

    def diagonal(self, n: int) -> np.ndarray:
        """Integer lattice eigenvalue of the whole layer for every basis state."""
        diag = np.zeros(2**n, dtype=np.int64)
        z = np.arange(2**n)
        for b in self.blocks:
            local = np.zeros(2**n, dtype=np.int64)
            for q in b.qubits:
                local = (local << 1) | ((z >> (n - 1 - q)) & 1)
            diag += np.asarray(b.lattice, dtype=np.int64)[local]
        return diag


@dataclass(frozen=True)
class EncodingSpec:
    layers: tuple[EncodingLayer, ...]
    n_qubits: int
    lattice_scale: Fraction
    strategy: str = "custom"
    tolerance: float = 0.0

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("encoding needs at least one layer")
        for layer in self.layers:
            qs = layer.qubits
            if len(set(qs)) != len(qs):
                raise ValueError("blocks of a layer must act on disjoint qubits")
            if any(q < 0 or q >= self.n_qubits for q in qs):
                raise ValueError("block qubit out of range")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


@dataclass(frozen=True)
class RedundancyTable:
    """Dense count array over lattice frequencies ``offset .. offset+len-1``."""

    offset: int
    counts: np.ndarray = field(repr=False)
    lattice_scale: Fraction = Fraction(1)
    tolerance: float = 0.0

    @classmethod
    def from_mapping(
        cls, entries: Mapping[int, int], lattice_scale: Fraction | int = 1, tolerance: float = 0.0
    ) -> "RedundancyTable":
        keys = [k for k, v in entries.items() if v]
        if not keys:
            raise ValueError("empty table")
        lo, hi = min(keys), max(keys)
        total = sum(int(v) for v in entries.values())
        counts = np.zeros(hi - lo + 1, dtype=np.int64 if total < _INT64_SAFE else object)
        if counts.dtype == object:
            counts[:] = 0
        for k, v in entries.items():
            counts[k - lo] += int(v)
        return cls(lo, counts, Fraction(lattice_scale), tolerance)

    @property
    def entries(self) -> dict[int, int]:
        nz = np.flatnonzero(self.counts != 0)
        return {int(i) + self.offset: int(self.counts[i]) for i in nz}

    @property
    def total_paths(self) -> int:
        return int(sum(int(c) for c in self.counts[self.counts != 0]))

    @property
    def frequencies(self) -> np.ndarray:
        """Lattice frequencies with nonzero redundancy, ascending."""
        return np.flatnonzero(self.counts != 0).astype(np.int64) + self.offset

    @property
    def omega_max(self) -> int:
        return int(self.frequencies[-1])

    def __getitem__(self, w: int) -> int:
        i = int(w) - self.offset
        if 0 <= i < len(self.counts):
            return int(self.counts[i])
        return 0

    def __len__(self) -> int:
        return int(np.count_nonzero(self.counts != 0))

    def physical(self, w: int) -> Fraction:
        return Fraction(int(w)) / self.lattice_scale

    def normalized(self) -> dict[int, float]:
        total = self.total_paths
        return {k: v / total for k, v in self.entries.items()}

    def same_counts(self, other: "RedundancyTable") -> bool:
        return self.lattice_scale == other.lattice_scale and self.entries == other.entries


def _lattice_from_floats(values: Sequence[float], tol: float) -> tuple[Fraction, list[Fraction]]:
    fracs = []
    for v in values:
        f = Fraction(v).limit_denominator(10**6)
        if abs(float(f) - v) > tol:
            raise ValueError(
                f"eigenvalue {v!r} is not on a rational lattice within {tol}; "
                "rescale it or pass exact fractions"
            )
        fracs.append(f)
    scale = 1
    for f in fracs:
        scale = scale * f.denominator // math.gcd(scale, f.denominator)
    return Fraction(scale), fracs


def sidon_sequence(d: int) -> tuple[int, ...]:
    """First ``d`` marks of a ruler with all pairwise differences distinct."""
    if d in _OPTIMAL_RULERS:
        return _OPTIMAL_RULERS[d]
    marks: list[int] = [0]
    diffs: set[int] = set()
    c = 0
    while len(marks) < d:
        c += 1
        new = {c - m for m in marks}
        if len(new) == len(marks) and not new & diffs:
            diffs |= new
            marks.append(c)
    return tuple(marks)


def _pauli_block(q: int, s: int, axis: str) -> EncodingBlock:
    half = Fraction(s, 2)
    # RZ ordering: |0> picks up e^{-i x s/2}
    return EncodingBlock((q,), (half, -half), (s, -s), axis)


def build_encoding(
    strategy: str,
    n: int,
    L: int,
    custom_eigs: Sequence[Sequence[float]] | None = None,
    *,
    axis: str = "x",
    repeat_layers: bool = False,
) -> EncodingSpec:
    """Build one of the built-in encodings, or a custom diagonal one.

    ``repeat_layers`` reuses the first layer's exponential scalings in every
    layer instead of continuing the powers of three.
    For ``custom``, ``custom_eigs`` holds one list of ``2**n`` eigenvalues per
    layer (a global diagonal block).
    """
    if n < 1 or L < 1:
        raise ValueError("need n >= 1 and L >= 1")
    if strategy == "pauli":
        layers = tuple(EncodingLayer(tuple(_pauli_block(j, 1, axis) for j in range(n))) for _ in range(L))
        return EncodingSpec(layers, n, Fraction(2), strategy)
    if strategy == "exponential":
        layers = []
        for l in range(L):
            base = 0 if repeat_layers else l * n
            layers.append(EncodingLayer(tuple(_pauli_block(j, 3 ** (base + j), axis) for j in range(n))))
        return EncodingSpec(tuple(layers), n, Fraction(2), strategy)
    if strategy == "golomb":
        if L != 1:
            raise ValueError("golomb encoding is non-degenerate only for a single layer (L=1)")
        marks = sidon_sequence(2**n)
        block = EncodingBlock(tuple(range(n)), tuple(Fraction(m) for m in marks), marks, "z")
        return EncodingSpec((EncodingLayer((block,)),), n, Fraction(1), strategy)
    if strategy == "custom":
        if custom_eigs is None or len(custom_eigs) != L:
            raise ValueError(f"custom encoding needs {L} eigenvalue lists")
        for eigs in custom_eigs:
            if len(eigs) != 2**n:
                raise ValueError(f"each custom layer needs {2 ** n} eigenvalues, got {len(eigs)}")
        flat = [float(v) for eigs in custom_eigs for v in eigs]
        scale, fracs = _lattice_from_floats(flat, CLUSTER_TOL)
        layers = []
        for l in range(L):
            chunk = fracs[l * 2**n : (l + 1) * 2**n]
            lat = tuple(int(f * scale) for f in chunk)
            layers.append(EncodingLayer((EncodingBlock(tuple(range(n)), tuple(chunk), lat, "z"),)))
        return EncodingSpec(tuple(layers), n, scale, strategy, CLUSTER_TOL)
    raise ValueError(f"unknown encoding strategy {strategy!r}")


def _difference_table(lattice: Iterable[int], scale: Fraction, tol: float) -> RedundancyTable:
    vals = np.asarray(list(lattice), dtype=np.int64)
    diffs = (vals[:, None] - vals[None, :]).ravel()
    lo = int(diffs.min())
    counts = np.bincount(diffs - lo).astype(np.int64)
    return RedundancyTable(lo, counts, scale, tol)


def compose(a: RedundancyTable, b: RedundancyTable) -> RedundancyTable:
    """Convolution of two count maps; total path count multiplies."""
    if a.lattice_scale != b.lattice_scale:
        raise ValueError(f"lattice mismatch: {a.lattice_scale} vs {b.lattice_scale}")
    if np.count_nonzero(a.counts) < np.count_nonzero(b.counts):
        a, b = b, a
    big = a.total_paths * b.total_paths >= _INT64_SAFE
    dtype = object if big else np.int64
    out = np.zeros(len(a.counts) + len(b.counts) - 1, dtype=dtype)
    if big:
        out[:] = 0
    src = a.counts.astype(dtype)
    # shift-and-add over the sparser operand's nonzeros
    for i in np.flatnonzero(b.counts != 0):
        out[i : i + len(src)] += src * (int(b.counts[i]) if big else b.counts[i])
    return RedundancyTable(a.offset + b.offset, out, a.lattice_scale, max(a.tolerance, b.tolerance))


def _layer_table(layer: EncodingLayer, scale: Fraction, tol: float) -> RedundancyTable:
    if not layer.blocks:
        raise ValueError("layer has no blocks")
    tables = [_difference_table(b.lattice, scale, tol) for b in layer.blocks]
    out = tables[0]
    for t in tables[1:]:
        out = compose(out, t)
    return out


def layer_spectrum(layer: EncodingLayer, lattice_scale: Fraction | int = 2) -> RedundancyTable:
    """All pairwise eigenvalue differences of one layer, with multiplicity."""
    return _layer_table(layer, Fraction(lattice_scale), 0.0)


def _guard(spec: EncodingSpec, layers: Sequence[EncodingLayer]) -> None:
    width = 1
    for layer in layers:
        for b in layer.blocks:
            width += 2 * (max(b.lattice) - min(b.lattice))
    if width > MAX_FREQUENCIES:
        raise OverflowError(
            f"frequency range of {width} lattice points exceeds the guard of {MAX_FREQUENCIES}"
        )


def partial_redundancy(spec: EncodingSpec, h: int, l: int) -> RedundancyTable:
    """Redundancy using encoding layers ``h..l`` only (1-based, inclusive)."""
    if not 1 <= h <= l <= spec.n_layers:
        raise ValueError(f"invalid layer range {h}..{l} for L={spec.n_layers}")
    layers = spec.layers[h - 1 : l]
    _guard(spec, layers)
    out = _layer_table(layers[0], spec.lattice_scale, spec.tolerance)
    for layer in layers[1:]:
        out = compose(out, _layer_table(layer, spec.lattice_scale, spec.tolerance))
    return out


def full_redundancy(spec: EncodingSpec) -> RedundancyTable:
    return partial_redundancy(spec, 1, spec.n_layers)


def sequential_parallel_check(spec: EncodingSpec) -> bool:
    """Compare the L-layer spectrum with all blocks placed side by side in one layer."""
    seq = full_redundancy(spec)
    merged = EncodingLayer(tuple(b for layer in spec.layers for b in layer.blocks))
    par = _layer_table(merged, spec.lattice_scale, spec.tolerance)
    return seq.same_counts(par)


def brute_force_redundancy(spec: EncodingSpec) -> dict[int, int]:
    """Enumerate every path pair explicitly; only for tiny specs."""
    diags = [layer.diagonal(spec.n_qubits) for layer in spec.layers]
    sums: dict[int, int] = {}
    for path in itertools.product(*diags):
        s = int(sum(path))
        sums[s] = sums.get(s, 0) + 1
    out: dict[int, int] = {}
    for (s1, c1), (s2, c2) in itertools.product(sums.items(), repeat=2):
        out[s1 - s2] = out.get(s1 - s2, 0) + c1 * c2
    return out
