import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from qfm.circuit import BrickwiseLayout, build_brickwise, build_model_circuit, extract_lightcone
from qfm.fourier import coefficient_statistics
from qfm.simulator import Observable
from qfm.spectrum import build_encoding, full_redundancy, layer_spectrum, partial_redundancy
from qfm.theory import (
    TheoryInputs,
    bound_approx_2design,
    bound_local_2design,
    bound_model_variance,
    mean_2design,
    var_2design_informal,
    var_2design_lightcone,
    var_2design_reuploading,
    var_2design_reuploading_exact,
    var_2design_single,
    var_2design_single_detail,
    var_2design_single_exact,
)


def og(n):
    return TheoryInputs.from_observable(Observable.global_zero(n))


def test_mean():
    assert mean_2design(og(2), 0) == 0.25
    assert mean_2design(og(2), 3) == 0.0
    traceless = TheoryInputs.from_observable(Observable.custom(np.diag([1.0, -1.0])))
    assert mean_2design(traceless, 0) == 0.0


def test_single_layer_examples():
    assert var_2design_single(og(1), 1, 1) == pytest.approx(1 / 36)
    for R in (1, 4, 6, 9):
        assert var_2design_single(og(2), 2, R) == pytest.approx(R / 400)
    assert var_2design_single(og(3), 5, 0) == 0.0


def test_zero_frequency_clamp_and_flag():
    tv = var_2design_single_detail(og(1), 0, 2)
    assert tv.raw == pytest.approx(-1 / 36)
    assert tv.value == 0.0 and tv.flag == "approximate"
    assert var_2design_single_detail(og(1), 2, 1).flag == ""


def test_exact_single_layer_zero_frequency():
    # d = 2 Haar pair: Var(c_0) = 1/36 analytically
    assert var_2design_single_exact(og(1), 0, 2) == pytest.approx(1 / 36)
    assert var_2design_single_exact(og(1), 2, 1) == pytest.approx(1 / 36)


def test_informal_alpha_matches_formal():
    ti = og(3)
    d = 8
    for R in (1, 5, 20):
        assert var_2design_informal(ti, R / d**2) == pytest.approx(var_2design_single(ti, 2, R))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.integers(0, 50), st.integers(-3, 3))
def test_reuploading_reduces_to_single(n, seed, R, w):
    eigs = np.random.default_rng(seed).normal(size=2**n)
    ti = TheoryInputs.from_observable(Observable.custom(np.diag(eigs)))
    assert var_2design_reuploading(ti, w, [R]) == var_2design_single(ti, w, R)


def test_reuploading_zero_outside_spectrum():
    ti = og(2)
    assert var_2design_reuploading(ti, 7, [0, 0, 0]) == 0.0


def test_exact_recursion_single_layer():
    spec = build_encoding("pauli", 2, 1)
    ti = og(2)
    ex = var_2design_reuploading_exact(ti, [layer_spectrum(spec.layers[0])])
    for w, R in full_redundancy(spec).entries.items():
        assert ex[w] == pytest.approx(var_2design_single_exact(ti, w, R))


def test_exact_recursion_haar_layers_mc():
    """Per-layer Haar blocks: exact recursion vs Monte Carlo (pauli n=1, L=3)."""
    spec = build_encoding("pauli", 1, 3)
    c = build_model_circuit(spec, "haar")
    ti = og(1)
    ex = var_2design_reuploading_exact(ti, [layer_spectrum(l) for l in spec.layers])
    st_ = coefficient_statistics(c, 20000, seed=3)
    for i, w in enumerate(st_.freqs):
        assert abs(st_.variance[i] - ex[int(w)]) < 4 * st_.stderr[i]


def test_d4_single_layer_mc():
    c = build_model_circuit(build_encoding("pauli", 2, 1), "haar")
    st_ = coefficient_statistics(c, 20000, seed=9)
    table = full_redundancy(c.spec)
    for i, w in enumerate(st_.freqs):
        if w:
            assert abs(st_.variance[i] - table[w] / 400) < 4 * st_.stderr[i]


# ---- bounds


def test_c2_monomial_og():
    assert og(2).c2_monomial == pytest.approx(1 / 16)
    dense = np.kron(Observable.global_zero(2).dense(), Observable.global_zero(2).dense())
    assert og(2).c2_monomial == pytest.approx(np.abs(dense).sum() / 16)


@pytest.mark.parametrize("norm", ["diamond", "spectral", "monomial"])
def test_bound_limit(norm):
    ti = og(3)
    for w, R in ((0, 20), (2, 15), (6, 1)):
        assert bound_approx_2design(ti, norm, 0.0, w, R) == var_2design_single(ti, w, R)


def test_bound_unknown_norm():
    with pytest.raises(ValueError, match="unknown norm"):
        bound_approx_2design(og(2), "trace", 0.1, 1, 1)
    with pytest.raises(ValueError):
        bound_approx_2design(og(2), "monomial", -0.1, 1, 1)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["diamond", "spectral", "monomial"]),
    st.integers(1, 4),
    st.floats(0, 2),
    st.floats(0, 2),
    st.integers(1, 100),
    st.integers(0, 100),
    st.integers(-3, 3),
)
def test_bounds_monotone(norm, n, e1, e2, R1, R2, w):
    ti = og(n)
    lo_e, hi_e = sorted((e1, e2))
    lo_r, hi_r = sorted((R1, R2))
    assume(lo_r >= 1)
    assert bound_approx_2design(ti, norm, lo_e, w, lo_r) <= bound_approx_2design(ti, norm, hi_e, w, lo_r) + 1e-15
    assert bound_approx_2design(ti, norm, lo_e, w, lo_r) <= bound_approx_2design(ti, norm, lo_e, w, hi_r) + 1e-15
    assert bound_approx_2design(ti, norm, lo_e, w, lo_r) >= 0


def test_model_variance_bound():
    assert bound_model_variance(og(2), 0.0) == pytest.approx(1 / 16)
    twice = TheoryInputs.from_observable(Observable.global_zero(2).scaled(2.0))
    assert bound_model_variance(twice, 0.3) == pytest.approx(4 * bound_model_variance(og(2), 0.3))


def test_local_bound_examples():
    assert bound_local_2design("projector", 2, 1, 1, rank=1) == pytest.approx(64 / 3600)
    assert bound_local_2design("projector", 2, 0, 3, rank=2) == pytest.approx((2 / 4) ** 2 * 9)
    assert bound_local_2design("bounded_norm", 2, 0, 3, local_norm2_sq=4) == 9
    with pytest.raises(ValueError, match="2\\^m"):
        bound_local_2design("bounded_norm", 1, 1, 1, local_norm2_sq=3.0)
    with pytest.raises(ValueError):
        bound_local_2design("cone", 1, 1, 1)


def test_lightcone_formula():
    for R in (1, 4, 6):
        assert var_2design_lightcone(2, 1, 1, 1, 1, R) == pytest.approx(R / 400)
    with pytest.raises(ValueError, match="nonzero"):
        var_2design_lightcone(2, 1, 1, 1, 1, 6, omega=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 3), st.integers(1, 200))
def test_lightcone_below_local_bound(m, L1, L2, R):
    assume(L2 >= 1)
    for r in range(1, 2**m + 1):
        assert var_2design_lightcone(m, L1, L2, r, r, R) <= bound_local_2design("projector", m, L2, R, rank=r)


def test_lightcone_mc_m2():
    layout = BrickwiseLayout(2, 1, 1, 0, "haar")
    c = build_brickwise(layout, build_encoding("pauli", 4, 1))
    cone = extract_lightcone(c)
    obs = Observable.local_site_projector(cone.circuit.n_qubits, cone.site)
    st_ = coefficient_statistics(cone.circuit, 20000, seed=5, obs=obs)
    for i, w in enumerate(st_.freqs):
        if w and st_.redundancy[i]:
            assert abs(st_.variance[i] - var_2design_lightcone(2, 1, 1, 1, 1, st_.redundancy[i])) < 4 * st_.stderr[i]


def test_parseval_consistency():
    """Summed single-layer variances stay below ||O||_inf^2 for O_G."""
    for n in (1, 2, 3, 4):
        table = full_redundancy(build_encoding("pauli", n, 1))
        total = sum(var_2design_single(og(n), w, R) for w, R in table.entries.items())
        assert 0 < total <= 1.0


def test_partial_inputs_consistency():
    spec = build_encoding("pauli", 3, 2)
    ti = og(3)
    p = [partial_redundancy(spec, j, 2) for j in (1, 2)]
    w = 4
    d = 8
    expect = ti.k_offzero * (p[0][w] - p[1][w]) / (d * (d + 1) * (d * d - 1))
    assert var_2design_reuploading(ti, w, [p[0][w], p[1][w]]) == pytest.approx(expect)


def test_inputs_validate():
    with pytest.raises(ValueError):
        TheoryInputs(2, 1.0, -1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        TheoryInputs(1, 1.0, 1.0, 1.0, 1.0, 1.0)
