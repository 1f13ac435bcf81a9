import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfm.circuit import (
    BrickwiseLayout,
    Circuit,
    TrainableBlock,
    build_brickwise,
    build_model_circuit,
    extract_lightcone,
    local_blocks,
    ring_ranges,
    simplified_two_design,
    strongly_entangling,
)
from qfm.moments import haar_unitaries
from qfm.simulator import Observable, apply_block, evaluate_batch, unitary
from qfm.spectrum import EncodingLayer, build_encoding, full_redundancy


def block_matrix(block: TrainableBlock, theta, haar=()):
    n = len(block.qubits)
    d = 2**n
    psi = np.eye(d, dtype=complex)[None]
    out = apply_block(psi, block, np.atleast_2d(theta), list(haar), n)
    return out[0].T


@pytest.mark.parametrize("n,reps,P", [(4, 5, 60), (2, 1, 6), (3, 2, 18)])
def test_strongly_entangling_params(n, reps, P):
    assert strongly_entangling(n, reps).n_params == P


def test_ring_ranges_cycle():
    assert ring_ranges(4, 5) == [1, 2, 3, 1, 2]
    b = strongly_entangling(2, 1)
    cnots = [g.wires for g in b.gates if g.kind == "cnot"]
    assert cnots == [(0, 1), (1, 0)]


@pytest.mark.parametrize("n,depth,P", [(2, 1, 4), (6, 0, 6), (3, 2, 11), (5, 3, 5 + 3 * 8)])
def test_simplified_two_design_params(n, depth, P):
    b = simplified_two_design(n, depth)
    assert b.n_params == P
    if depth == 0:
        assert not any(g.kind == "cz" for g in b.gates)


@pytest.mark.parametrize(
    "block",
    [strongly_entangling(3, 2), simplified_two_design(3, 2), local_blocks("strongly_entangling", 3, 2, 1)],
    ids=["se", "s2d", "local"],
)
def test_block_unitary(block):
    rng = np.random.default_rng(1)
    for _ in range(5):
        u = block_matrix(block, rng.uniform(0, 2 * np.pi, block.n_params))
        assert np.allclose(u.conj().T @ u, np.eye(len(u)), atol=1e-12)


def test_model_circuit_structure():
    c = build_model_circuit(build_encoding("pauli", 2, 1), "strongly_entangling", 5)
    assert len(c.trainable_blocks) == 2 and len(c.encoding_layers) == 1
    assert c.n_params == 60
    c2 = build_model_circuit(build_encoding("pauli", 2, 2), "strongly_entangling", 1)
    assert len(c2.trainable_blocks) == 3 and len(c2.encoding_layers) == 2
    assert isinstance(c2.elements[0], TrainableBlock) and isinstance(c2.elements[1], EncodingLayer)


def test_golomb_block_spans_register():
    c = build_model_circuit(build_encoding("golomb", 3, 1), "strongly_entangling", 1)
    (layer,) = c.encoding_layers
    assert len(layer.blocks) == 1 and layer.blocks[0].qubits == (0, 1, 2)
    assert len(layer.blocks[0].eigenvalues) == 8


def test_slots_contiguous():
    c = build_model_circuit(build_encoding("pauli", 3, 2), "simplified_two_design", 2)
    slots = sorted(g.slot for b in c.trainable_blocks for g in b.gates if g.kind in ("rx", "ry", "rz"))
    assert slots == list(range(c.n_params))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_slot_permutation_roundtrip(seed):
    """Permuting parameters by the slot map and back leaves f unchanged."""
    c = build_model_circuit(build_encoding("pauli", 2, 1), "strongly_entangling", 2)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 2 * np.pi, c.n_params)
    perm = rng.permutation(c.n_params)
    shuffled = theta[perm]
    restored = np.empty_like(shuffled)
    restored[perm] = shuffled
    xs = rng.uniform(0, 2 * np.pi, 3)
    assert np.array_equal(evaluate_batch(c, theta, xs), evaluate_batch(c, restored, xs))


def test_circuit_rejects_bad_wires():
    spec = build_encoding("pauli", 2, 1)
    block = strongly_entangling(3, 1)
    with pytest.raises(ValueError):
        Circuit(2, (block, spec.layers[0], block), spec, block.n_params)


# ---- brickwise


def test_brickwise_counts():
    layout = BrickwiseLayout(2, 1, 1)
    c = build_brickwise(layout, build_encoding("pauli", 4, 1))
    assert len(c.trainable_blocks) == 4
    assert len(c.encoding_layers[0].blocks) == 4  # pauli blocks are single qubits: 2 per brick


def test_brickwise_offsets():
    layout = BrickwiseLayout(2, 3, 2)
    assert layout.pre_offsets() == [0, 1, 0]
    assert layout.post_offsets() == [0, 1]
    c = build_brickwise(layout, build_encoding("pauli", 8, 1))
    rows = {}
    for b in c.trainable_blocks:
        rows.setdefault(b.row, []).append(b.qubits)
    assert rows[1] == [(1, 2), (3, 4), (5, 6), (7, 0)]  # circular wrap at offset m/2


def test_brickwise_rejects_misaligned():
    spec = build_encoding("golomb", 2, 1)  # one block on qubits 0,1
    with pytest.raises(ValueError, match="not aligned"):
        build_brickwise(BrickwiseLayout(1, 1, 1), spec)
    with pytest.raises(ValueError, match="divisible"):
        build_brickwise(BrickwiseLayout(4, 1, 1), spec)
    with pytest.raises(ValueError, match="odd m"):
        BrickwiseLayout(3, 2, 1)


def test_m1_has_no_entanglement():
    c = build_brickwise(BrickwiseLayout(1, 2, 2, site=2, block="strongly_entangling"), build_encoding("pauli", 4, 1))
    cone = extract_lightcone(c)
    assert cone.support == (2,)


def test_lightcone_l2_zero():
    c = build_brickwise(BrickwiseLayout(2, 2, 0, site=1), build_encoding("pauli", 6, 1))
    cone = extract_lightcone(c)
    assert cone.encoding_support == (2, 3)
    # the pre-encoding cone still spreads through the staggered rows
    assert len(cone.support) == 4


def test_lightcone_grows_with_l2():
    spec = build_encoding("pauli", 8, 1)
    sizes = [len(extract_lightcone(build_brickwise(BrickwiseLayout(2, 1, L2), spec)).encoding_support) for L2 in (1, 2, 3)]
    assert sizes == [2, 4, 6]


def test_lightcone_full_cover():
    spec = build_encoding("pauli", 4, 1)
    c = build_brickwise(BrickwiseLayout(2, 1, 3), spec)
    cone = extract_lightcone(c)
    assert cone.encoding_support == (0, 1, 2, 3)
    assert cone.redundancy.entries == full_redundancy(spec).entries


@pytest.mark.parametrize("n,m,L1,L2,site,block", [(6, 2, 1, 1, 1, "haar"), (6, 2, 2, 2, 2, "strongly_entangling"), (8, 2, 1, 2, 0, "haar")])
def test_lightcone_expectation_matches(n, m, L1, L2, site, block):
    layout = BrickwiseLayout(m, L1, L2, site, block)
    c = build_brickwise(layout, build_encoding("pauli", n, 1))
    cone = extract_lightcone(c)
    rng = np.random.default_rng(3)
    full_obs = Observable.local_site_projector(n, layout.site_qubits(n))
    cone_obs = Observable.local_site_projector(cone.circuit.n_qubits, cone.site)
    for _ in range(50):
        theta = rng.uniform(0, 2 * np.pi, c.n_params)
        haar = [haar_unitaries(rng, k, 1)[0] for k in c.haar_sizes]
        x = rng.uniform(-np.pi, np.pi, 1)
        f_full = evaluate_batch(c, theta, x, full_obs, haar or None)
        sub_haar = [haar[i] for i in cone.haar_index]
        f_cone = evaluate_batch(cone.circuit, theta[cone.param_index], x, cone_obs, sub_haar or None)
        assert abs(f_full - f_cone).max() <= 1e-10


def test_dense_unitary_is_unitary():
    c = build_model_circuit(build_encoding("pauli", 3, 1), "strongly_entangling", 2)
    theta = np.random.default_rng(0).uniform(0, 2 * np.pi, c.n_params)
    u = unitary(c, theta, 0.7)
    assert np.allclose(u.conj().T @ u, np.eye(8), atol=1e-12)
