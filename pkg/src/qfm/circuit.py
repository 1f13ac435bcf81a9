"""Circuit layouts: trainable ansätze, encoding layers and brickwise geometry."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from qfm.spectrum import EncodingBlock, EncodingLayer, EncodingSpec, RedundancyTable, full_redundancy

ROTATIONS = ("rx", "ry", "rz")
FIXED = ("cnot", "cz")
ANSATZE = ("strongly_entangling", "simplified_two_design", "haar")


@dataclass(frozen=True)
class Gate:
    """One gate. ``slot`` is the parameter slot of a rotation or the index of a Haar draw."""

    kind: str
    wires: tuple[int, ...]
    slot: int | None = None

    def __post_init__(self) -> None:
        if self.kind in ROTATIONS:
            if len(self.wires) != 1 or self.slot is None:
                raise ValueError(f"{self.kind} needs one wire and a parameter slot")
        elif self.kind in FIXED:
            if len(self.wires) != 2 or self.wires[0] == self.wires[1]:
                raise ValueError(f"{self.kind} needs two distinct wires")
        elif self.kind == "haar":
            if self.slot is None or len(set(self.wires)) != len(self.wires):
                raise ValueError("haar gate needs distinct wires and a draw index")
        else:
            raise ValueError(f"unsupported gate {self.kind!r}")


@dataclass(frozen=True)
class TrainableBlock:
    """Gates acting on ``qubits``; slots and Haar indices are global once placed."""

    name: str
    qubits: tuple[int, ...]
    gates: tuple[Gate, ...]
    n_params: int
    n_haar: int = 0
    slot_offset: int = 0
    haar_offset: int = 0
    row: int | None = None

    def placed(self, qubits: Sequence[int], slot_offset: int, haar_offset: int, row: int | None = None) -> "TrainableBlock":
        """Relabel local wires ``0..k-1`` onto ``qubits`` and shift slots."""
        qubits = tuple(int(q) for q in qubits)
        if len(qubits) != len(self.qubits):
            raise ValueError("placement width mismatch")
        pos = {q: i for i, q in enumerate(self.qubits)}
        gates = []
        for g in self.gates:
            wires = tuple(qubits[pos[w]] for w in g.wires)
            if g.kind == "haar":
                slot = g.slot - self.haar_offset + haar_offset
            elif g.kind in ROTATIONS:
                slot = g.slot - self.slot_offset + slot_offset
            else:
                slot = None
            gates.append(Gate(g.kind, wires, slot))
        return TrainableBlock(self.name, qubits, tuple(gates), self.n_params, self.n_haar, slot_offset, haar_offset, row)


def strongly_entangling(n: int, reps: int) -> TrainableBlock:
    """RZ·RY·RZ on every qubit followed by a CNOT ring, ``reps`` times.

    Sub-layer ``l`` (1-based) uses ring range ``(l-1) mod (n-1) + 1``, which
    cycles 1, 2, ..., n-1. A one-qubit block has no ring.
    """
    if n < 1 or reps < 1:
        raise ValueError("need n >= 1 and reps >= 1")
    gates: list[Gate] = []
    slot = 0
    for l in range(1, reps + 1):
        for q in range(n):
            for kind in ("rz", "ry", "rz"):
                gates.append(Gate(kind, (q,), slot))
                slot += 1
        if n > 1:
            r = (l - 1) % (n - 1) + 1
            for q in range(n):
                gates.append(Gate("cnot", (q, (q + r) % n)))
    return TrainableBlock("strongly_entangling", tuple(range(n)), tuple(gates), slot)


def ring_ranges(n: int, reps: int) -> list[int]:
    return [(l - 1) % (n - 1) + 1 for l in range(1, reps + 1)] if n > 1 else []


def simplified_two_design(n: int, depth: int) -> TrainableBlock:
    """Initial RY layer, then ``depth`` layers of CZ + RY pairs on staggered neighbours."""
    if n < 1 or depth < 0:
        raise ValueError("need n >= 1 and depth >= 0")
    gates = [Gate("ry", (q,), q) for q in range(n)]
    slot = n
    for _ in range(depth):
        for start in (0, 1):
            for a in range(start, n - 1, 2):
                gates.append(Gate("cz", (a, a + 1)))
                gates.append(Gate("ry", (a,), slot))
                gates.append(Gate("ry", (a + 1,), slot + 1))
                slot += 2
    return TrainableBlock("simplified_two_design", tuple(range(n)), tuple(gates), slot)


def haar_block(n: int) -> TrainableBlock:
    """A single Haar-random unitary on ``n`` qubits, redrawn per sample."""
    return TrainableBlock("haar", tuple(range(n)), (Gate("haar", tuple(range(n)), 0),), 0, 1)


def make_block(kind: str, n: int, reps: int) -> TrainableBlock:
    if kind == "strongly_entangling":
        return strongly_entangling(n, reps)
    if kind == "simplified_two_design":
        return simplified_two_design(n, reps)
    if kind == "haar":
        return haar_block(n)
    raise ValueError(f"unknown ansatz {kind!r}; expected one of {ANSATZE}")


def local_blocks(kind: str, n: int, m: int, reps: int) -> TrainableBlock:
    """One column of ``m``-qubit blocks covering ``n`` qubits (last block may be narrower)."""
    if m < 1:
        raise ValueError("m must be positive")
    gates: list[Gate] = []
    slot = haar = 0
    for start in range(0, n, m):
        qs = tuple(range(start, min(start + m, n)))
        b = make_block(kind, len(qs), reps).placed(qs, slot, haar)
        gates.extend(b.gates)
        slot += b.n_params
        haar += b.n_haar
    return TrainableBlock(f"{kind}_local{m}", tuple(range(n)), tuple(gates), slot, haar)


Element = Union[TrainableBlock, EncodingLayer]


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    elements: tuple[Element, ...]
    spec: EncodingSpec
    n_params: int
    n_haar: int = 0
    layout: "BrickwiseLayout | None" = None

    def __post_init__(self) -> None:
        slots: list[int] = []
        haars: list[int] = []
        for el in self.elements:
            if isinstance(el, TrainableBlock):
                for g in el.gates:
                    if any(w < 0 or w >= self.n_qubits for w in g.wires):
                        raise ValueError(f"gate {g} outside the register")
                    if g.kind in ROTATIONS:
                        slots.append(g.slot)
                    elif g.kind == "haar":
                        haars.append(g.slot)
        if sorted(slots) != list(range(self.n_params)):
            raise ValueError("parameter slots must be exactly 0..P-1")
        if sorted(haars) != list(range(self.n_haar)):
            raise ValueError("Haar draws must be exactly 0..H-1")

    @property
    def trainable_blocks(self) -> list[TrainableBlock]:
        return [e for e in self.elements if isinstance(e, TrainableBlock)]

    @property
    def encoding_layers(self) -> list[EncodingLayer]:
        return [e for e in self.elements if isinstance(e, EncodingLayer)]

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def haar_sizes(self) -> list[int]:
        sizes = [0] * self.n_haar
        for b in self.trainable_blocks:
            for g in b.gates:
                if g.kind == "haar":
                    sizes[g.slot] = 2 ** len(g.wires)
        return sizes

    def slot_map(self) -> dict[int, tuple[int, int]]:
        """Parameter slot -> (element index, gate index)."""
        out = {}
        for i, el in enumerate(self.elements):
            if isinstance(el, TrainableBlock):
                for j, g in enumerate(el.gates):
                    if g.kind in ROTATIONS:
                        out[g.slot] = (i, j)
        return out


def assemble(n: int, spec: EncodingSpec, elements: Sequence[Element], layout=None) -> Circuit:
    """Place blocks sequentially, renumbering slots and Haar draws."""
    placed: list[Element] = []
    slot = haar = 0
    for el in elements:
        if isinstance(el, TrainableBlock):
            el = el.placed(el.qubits, slot, haar, el.row)
            slot += el.n_params
            haar += el.n_haar
        placed.append(el)
    return Circuit(n, tuple(placed), spec, slot, haar, layout)


def build_model_circuit(spec: EncodingSpec, ansatz: str | TrainableBlock, reps: int = 1) -> Circuit:
    """W^{L+1} S^L W^L ... S^1 W^1 with a fresh trainable block between encodings."""
    n = spec.n_qubits
    block = ansatz if isinstance(ansatz, TrainableBlock) else make_block(ansatz, n, reps)
    if block.qubits != tuple(range(n)):
        raise ValueError("ansatz must act on all qubits of the encoding")
    elements: list[Element] = [block]
    for layer in spec.layers:
        elements += [layer, block]
    return assemble(n, spec, elements)


@dataclass(frozen=True)
class BrickwiseLayout:
    """Brick geometry on a ring of qubits.

    Rows alternate between offset 0 and ``m/2``. The pre-encoding row next to
    the encoding and the first post-encoding row sit on the encoding grid
    (offset 0); the observable brick ``site`` is taken on the grid of the
    last trainable row.
    """

    m: int
    L1: int
    L2: int
    site: int = 0
    block: str = "haar"
    reps: int = 1
    connectivity: str = "circular"

    def __post_init__(self) -> None:
        if self.m < 1 or self.L1 < 0 or self.L2 < 0:
            raise ValueError("invalid brick sizes")
        if self.connectivity != "circular":
            raise ValueError("only circular connectivity is supported")
        if self.m % 2 and self.m > 1 and (self.L1 > 1 or self.L2 > 1):
            raise ValueError("odd m cannot alternate brick offsets")

    def pre_offsets(self) -> list[int]:
        return [((self.L1 - 1 - i) % 2) * (self.m // 2) for i in range(self.L1)]

    def post_offsets(self) -> list[int]:
        return [(j % 2) * (self.m // 2) for j in range(self.L2)]

    def bricks(self, n: int, offset: int) -> list[tuple[int, ...]]:
        if n % self.m:
            raise ValueError(f"n={n} not divisible by m={self.m}")
        return [tuple((offset + k * self.m + t) % n for t in range(self.m)) for k in range(n // self.m)]

    def site_qubits(self, n: int) -> tuple[int, ...]:
        offset = self.post_offsets()[-1] if self.L2 else 0
        bricks = self.bricks(n, offset)
        if not 0 <= self.site < len(bricks):
            raise ValueError(f"site {self.site} out of range (0..{len(bricks) - 1})")
        return bricks[self.site]


def build_brickwise(layout: BrickwiseLayout, spec: EncodingSpec) -> Circuit:
    n = spec.n_qubits
    if spec.n_layers != 1:
        raise ValueError("brickwise circuits take exactly one encoding layer")
    grid = layout.bricks(n, 0)
    brick_of = {q: k for k, b in enumerate(grid) for q in b}
    for b in spec.layers[0].blocks:
        if len({brick_of[q] for q in b.qubits}) != 1:
            raise ValueError(f"encoding block on {b.qubits} is not aligned to the m={layout.m} brick grid")
    proto = make_block(layout.block, layout.m, layout.reps)
    elements: list[Element] = []
    row = 0
    for off in layout.pre_offsets():
        elements += [replace(proto.placed(qs, 0, 0), row=row) for qs in layout.bricks(n, off)]
        row += 1
    elements.append(spec.layers[0])
    row += 1
    for off in layout.post_offsets():
        elements += [replace(proto.placed(qs, 0, 0), row=row) for qs in layout.bricks(n, off)]
        row += 1
    return assemble(n, spec, elements, layout)


@dataclass(frozen=True)
class LightCone:
    circuit: Circuit
    support: tuple[int, ...]
    encoding_support: tuple[int, ...]
    complement: tuple[int, ...]
    redundancy: RedundancyTable
    param_index: np.ndarray = field(repr=False)
    haar_index: np.ndarray = field(repr=False)
    site: tuple[int, ...] = ()


def extract_lightcone(circuit: Circuit, layout: BrickwiseLayout | None = None) -> LightCone:
    """Backward causal cone of the observable brick, relabelled onto its support."""
    layout = layout or circuit.layout
    if layout is None:
        raise ValueError("circuit was not built by build_brickwise")
    n = circuit.n_qubits
    site = layout.site_qubits(n)
    cone = set(site)
    keep: list[Element] = []
    enc_support: set[int] = set()
    for el in reversed(circuit.elements):
        if isinstance(el, TrainableBlock):
            if cone & set(el.qubits):
                cone |= set(el.qubits)
                keep.append(el)
        else:
            blocks = tuple(b for b in el.blocks if cone & set(b.qubits))
            for b in blocks:
                enc_support |= set(b.qubits)
            cone |= enc_support
            keep.append(EncodingLayer(blocks))
    keep.reverse()
    support = tuple(sorted(cone))
    pos = {q: i for i, q in enumerate(support)}

    elements: list[Element] = []
    params: list[int] = []
    haars: list[int] = []
    sub_layer = None
    for el in keep:
        if isinstance(el, TrainableBlock):
            rots = [g.slot for g in el.gates if g.kind in ROTATIONS]
            hs = [g.slot for g in el.gates if g.kind == "haar"]
            gates = []
            for g in el.gates:
                slot = g.slot
                if g.kind in ROTATIONS:
                    slot = len(params) + rots.index(g.slot)
                elif g.kind == "haar":
                    slot = len(haars) + hs.index(g.slot)
                gates.append(Gate(g.kind, tuple(pos[w] for w in g.wires), slot))
            qubits = tuple(pos[q] for q in el.qubits)
            elements.append(
                TrainableBlock(el.name, qubits, tuple(gates), el.n_params, el.n_haar, len(params), len(haars), el.row)
            )
            params += rots
            haars += hs
        else:
            sub_layer = EncodingLayer(
                tuple(EncodingBlock(tuple(pos[q] for q in b.qubits), b.eigenvalues, b.lattice, b.axis) for b in el.blocks)
            )
            elements.append(sub_layer)
    sub_spec = EncodingSpec((sub_layer,), len(support), circuit.spec.lattice_scale, circuit.spec.strategy, circuit.spec.tolerance)
    sub = Circuit(len(support), tuple(elements), sub_spec, len(params), len(haars))
    return LightCone(
        circuit=sub,
        support=support,
        encoding_support=tuple(sorted(enc_support)),
        complement=tuple(sorted(cone - enc_support)),
        redundancy=full_redundancy(sub_spec),
        param_index=np.asarray(params, dtype=np.int64),
        haar_index=np.asarray(haars, dtype=np.int64),
        site=tuple(pos[q] for q in site),
    )
