import numpy as np
import pytest

from qfm.circuit import Gate, TrainableBlock, haar_block, local_blocks, strongly_entangling
from qfm.moments import (
    empirical_epsilon_monomial,
    empirical_epsilon_spectral,
    haar_moment_operator,
    haar_second_moment_entry,
    haar_unitaries,
    moment_operator,
    rng_for,
    weingarten,
)


def rz_block():
    return TrainableBlock("rz", (0,), (Gate("rz", (0,), 0),), 1)


def fixed_block():
    return TrainableBlock("cnot", (0, 1), (Gate("cnot", (0, 1)),), 0)


def test_weingarten_weights():
    assert weingarten(2) == pytest.approx((1 / 3, -1 / 6))
    with pytest.raises(ValueError):
        weingarten(1)


def test_haar_entries_closed_form():
    assert haar_second_moment_entry(2, (0, 0), (0, 0), (0, 0), (0, 0)) == pytest.approx(1 / 3)
    # |U_11|^2 |U_22|^2: only the identity pairing survives
    assert haar_second_moment_entry(2, (0, 1), (0, 1), (0, 1), (0, 1)) == pytest.approx(1 / 3)
    assert haar_second_moment_entry(3, (0, 1), (0, 0), (0, 0), (0, 0)) == 0.0
    assert haar_second_moment_entry(4, (0, 1), (2, 3), (0, 1), (3, 2)) == pytest.approx(-1 / 60)


def test_haar_entries_monte_carlo_d2():
    u = haar_unitaries(rng_for(0, 9), 2, 400_000)
    a = np.abs(u[:, 0, 0]) ** 4
    b = np.abs(u[:, 0, 0]) ** 2 * np.abs(u[:, 1, 1]) ** 2
    for v, exact in ((a, 1 / 3), (b, 1 / 3)):
        assert abs(v.mean() - exact) < 5 * v.std() / np.sqrt(len(v))


@pytest.mark.parametrize("d", [2, 4, 8])
def test_haar_entries_random_tuples(d):
    rng = np.random.default_rng(d)
    u = haar_unitaries(rng_for(1, d), d, 20_000)
    for _ in range(50):
        if rng.random() < 0.5:
            q, r = rng.integers(d, size=2), rng.integers(d, size=2)
            p, s = rng.permutation(q), rng.permutation(r)
        else:
            q, r, p, s = (rng.integers(d, size=2) for _ in range(4))
        v = u[:, q[0], r[0]] * u[:, q[1], r[1]] * np.conj(u[:, p[0], s[0]] * u[:, p[1], s[1]])
        exact = haar_second_moment_entry(d, q, r, p, s)
        se = np.sqrt(np.mean(np.abs(v - v.mean()) ** 2) / len(v))
        assert abs(v.mean() - exact) <= 5 * se + 1e-12


def test_haar_sampler_unitary():
    u = haar_unitaries(np.random.default_rng(0), 4, 10)
    assert np.allclose(u @ u.conj().transpose(0, 2, 1), np.eye(4), atol=1e-12)


def test_epsilon_single_rz():
    rep = empirical_epsilon_monomial(rz_block(), 2000, seed=0)
    assert rep.epsilon_m >= 8 / 3 - 1e-9
    assert rep.d == 2


def test_epsilon_haar_vanishes():
    rep = empirical_epsilon_monomial(haar_block(2), 20_000, seed=3)
    assert rep.epsilon_m <= 5 * rep.stderr + 0.05
    assert rep.epsilon_inf is None


def test_epsilon_reproducible_and_stderr_shrinks():
    block = strongly_entangling(2, 2)
    a = empirical_epsilon_monomial(block, 4000, seed=5)
    b = empirical_epsilon_monomial(block, 4000, seed=5)
    assert a.as_dict() == b.as_dict()
    c = empirical_epsilon_monomial(block, 8000, seed=5)
    assert c.stderr < a.stderr


def test_epsilon_warns_on_few_samples():
    rep = empirical_epsilon_monomial(rz_block(), 200, seed=0)
    assert rep.warnings and "samples" in rep.warnings[0]


def test_connectivity_ordering():
    full = empirical_epsilon_monomial(strongly_entangling(2, 5), 10_000, seed=1).epsilon_m
    local = empirical_epsilon_monomial(local_blocks("strongly_entangling", 2, 1, 5), 10_000, seed=1).epsilon_m
    assert full < local


def test_factorized_scan_matches_dense_operator():
    block = local_blocks("strongly_entangling", 2, 1, 1)
    rep = empirical_epsilon_monomial(block, 3000, seed=2)
    dev = np.abs(haar_moment_operator(4) - moment_operator(block, 3000, seed=2))
    assert rep.epsilon_m == pytest.approx(16 * dev.max(), rel=1e-10)
    q1, q2, p1, p2, r1, r2, s1, s2 = rep.argmax_indices
    row = ((q1 * 4 + q2) * 4 + p1) * 4 + p2
    col = ((r1 * 4 + r2) * 4 + s1) * 4 + s2
    assert dev[row, col] == pytest.approx(dev.max())


def test_dense_scan_matches_operator():
    block = strongly_entangling(2, 1)
    rep = empirical_epsilon_monomial(block, 3000, seed=4)
    dev = np.abs(haar_moment_operator(4) - moment_operator(block, 3000, seed=4))
    assert rep.epsilon_m == pytest.approx(16 * dev.max(), rel=1e-10)


def test_moment_operator_of_haar_samples():
    op = moment_operator(haar_block(1), 50_000, seed=0)
    assert np.abs(op - haar_moment_operator(2)).max() < 0.02


def test_spectral_distance():
    haar = empirical_epsilon_spectral(haar_block(1), 20_000, seed=0)
    fixed = empirical_epsilon_spectral(fixed_block(), 10, seed=0)
    assert haar < 0.1
    assert fixed > 0.5
    with pytest.raises(ValueError, match="d=16"):
        empirical_epsilon_spectral(strongly_entangling(4, 1), 10, seed=0)


@pytest.mark.parametrize(
    "block",
    [strongly_entangling(2, 1), strongly_entangling(2, 3), local_blocks("strongly_entangling", 2, 1, 2), rz_block(), haar_block(2)],
    ids=["se1", "se3", "local", "rz", "haar"],
)
def test_spectral_vs_monomial_relation(block):
    rep = empirical_epsilon_monomial(block, 2000, seed=7)
    eps_inf = empirical_epsilon_spectral(block, 2000, seed=7)
    d = rep.d
    # ||A||_2 <= ||A||_F <= d^4 max|A_ij| = d^2 eps_M
    assert eps_inf <= d * d * rep.epsilon_m + 1e-9


def test_dimension_guards():
    with pytest.raises(ValueError, match="d <= 8"):
        empirical_epsilon_monomial(strongly_entangling(4, 1), 10, seed=0)


@pytest.mark.slow
def test_factorized_d16_scan():
    rep = empirical_epsilon_monomial(local_blocks("strongly_entangling", 4, 2, 1), 1000, seed=0)
    assert rep.d == 16 and len(rep.argmax_indices) == 8


def test_rng_streams_independent():
    a = rng_for(1, 2, 0).random(4)
    b = rng_for(1, 2, 1).random(4)
    c = rng_for(1, 2, 0).random(4)
    assert not np.array_equal(a, b) and np.array_equal(a, c)
