import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracap.gram import assemble
from fracap.measures import (
    MeasureError,
    NodalMeasure,
    capacity,
    check_K_membership,
    comparison_violations,
    gamma_sequence_test,
    measure_from_z,
    relaxed_dirichlet_solve,
    torsion_z,
)
from fracap.mesh import Mesh1D, lumped_mass, mass_matrix

MESH = Mesh1D(0, 1, 64)


@pytest.fixture(scope="module")
def G():
    return assemble(MESH, "tilde", 0.1)


def test_measure_construction():
    mu = NodalMeasure(MESH, np.where(MESH.nodes_in([(0.2, 0.4)]), np.inf, 2.0))
    assert mu.infinite_set.sum() == MESH.nodes_in([(0.2, 0.4)]).sum()
    assert np.all(mu.weights[mu.infinite_set] == 0)
    assert np.isinf(mu.density()[mu.infinite_set]).all()
    with pytest.raises(MeasureError):
        NodalMeasure(MESH, -1.0)
    with pytest.raises(MeasureError):
        NodalMeasure(MESH, np.nan)


def test_domination():
    small = NodalMeasure.on_intervals(MESH, [(0.2, 0.4)], 3.0)
    big = NodalMeasure.on_intervals(MESH, [(0.1, 0.5)], np.inf)
    assert small.dominated_by(big) and not big.dominated_by(small)


def test_zero_measure_solves_plain_system(G):
    M = mass_matrix(MESH)
    f = MESH.interpolate(lambda x: np.sin(3 * x))
    sol = relaxed_dirichlet_solve(G, M, NodalMeasure.zero(MESH), f)
    np.testing.assert_allclose(G.matrix @ sol.w.values, M @ f.values, rtol=1e-10, atol=1e-13)
    assert sol.residual_norm <= 1e-10


def test_infinite_everywhere_gives_zero(G):
    mu = NodalMeasure(MESH, np.inf)
    sol = torsion_z(G, None, mu)
    assert np.all(sol.w.values == 0)


def test_infinite_nodes_vanish_exactly(G):
    mu = NodalMeasure.on_intervals(MESH, [(0.3, 0.6)], np.inf)
    z = torsion_z(G, None, mu).w.values
    assert np.all(z[mu.infinite_set] == 0.0)
    assert np.all(z[~mu.infinite_set] > 0)


def test_spectral_s1_torsion_is_parabola():
    m = Mesh1D(0, 1, 128)
    Gs = assemble(m, "spectral", 1.0)
    z = torsion_z(Gs, None, NodalMeasure.zero(m)).w.values
    x = m.interior_nodes
    assert np.abs(z - x * (1 - x) / 2).max() <= 1e-12 + 2 * m.h**2


def test_torsion_scaling_and_sign(G):
    mu = NodalMeasure.on_intervals(MESH, [(0.1, 0.3)], 7.0)
    z1 = torsion_z(G, None, mu).w.values
    z3 = torsion_z(G, None, mu, scale=3.0).w.values
    np.testing.assert_allclose(z3, 3 * z1, rtol=1e-12)
    z0 = torsion_z(G, None, NodalMeasure.zero(MESH)).w.values
    assert z0.min() >= -1e-10


@pytest.mark.parametrize("kind", ["tilde", "omega", "spectral"])
def test_energy_identity_and_bound_random(kind, rng):
    Gk = assemble(MESH, kind, 0.1)
    M = mass_matrix(MESH)
    for _ in range(20):
        weights = rng.exponential(5.0, MESH.interior_dof_count) * (rng.random(MESH.interior_dof_count) < 0.5)
        mu = NodalMeasure(MESH, weights, rng.random(MESH.interior_dof_count) < 0.1)
        f = MESH.function(rng.standard_normal(MESH.interior_dof_count))
        sol = relaxed_dirichlet_solve(Gk, M, mu, f)
        assert sol.energy_identity_error <= 1e-10
        assert sol.w_norm <= sol.rhs_dual_norm * (1 + 1e-10)


def _comparison_instances(rng, count):
    n = MESH.interior_dof_count
    for _ in range(count):
        f1 = rng.uniform(0, 1, n)
        f2 = f1 + rng.uniform(0, 1, n)
        mu2 = rng.uniform(0, 20, n) * (rng.random(n) < 0.5)
        mu1 = mu2 + rng.uniform(0, 20, n) * (rng.random(n) < 0.5)
        yield MESH.function(f1), MESH.function(f2), NodalMeasure(MESH, mu1), NodalMeasure(MESH, mu2)


def test_comparison_principle_exact_for_laplacian(rng):
    G1 = assemble(MESH, "spectral", 1.0)
    for f1, f2, mu1, mu2 in _comparison_instances(rng, 100):
        w1 = relaxed_dirichlet_solve(G1, None, mu1, f1).w
        w2 = relaxed_dirichlet_solve(G1, None, mu2, f2).w
        assert comparison_violations(w1, w2, tol=1e-8).size == 0


@pytest.mark.parametrize("kind", ["tilde", "omega", "spectral"])
def test_comparison_principle_fractional_is_diagnostic(kind, rng):
    # no discrete maximum principle for the fractional matrices: only record violations
    Gk = assemble(MESH, kind, 0.1)
    counts = []
    for f1, f2, mu1, mu2 in _comparison_instances(rng, 100):
        w1 = relaxed_dirichlet_solve(Gk, None, mu1, f1).w
        w2 = relaxed_dirichlet_solve(Gk, None, mu2, f2).w
        counts.append(comparison_violations(w1, w2, tol=1e-8).size)
    assert len(counts) == 100 and min(counts) >= 0


@given(st.floats(0.0, 1e4), st.floats(0.0, 1e4), st.floats(0.05, 0.45), st.floats(0.5, 0.95))
def test_torsion_monotone_in_block_weight_on_block(c1, c2, lo, hi):
    # for torsion data and a scaled block measure the comparison does hold on the block itself
    G = assemble(MESH, "tilde", 0.1)
    small, large = sorted((c1, c2))
    on = MESH.nodes_in([(lo, hi)])
    z_small = torsion_z(G, None, NodalMeasure.on_intervals(MESH, [(lo, hi)], small)).w.values
    z_large = torsion_z(G, None, NodalMeasure.on_intervals(MESH, [(lo, hi)], large)).w.values
    assert np.all(z_large[on] <= z_small[on] + 1e-10)


# -- capacity -------------------------------------------------------------------

def test_capacity_empty(G):
    assert capacity(G, np.zeros(MESH.interior_dof_count, dtype=bool)).value == 0.0


def _random_mask(rng, n):
    a, b = sorted(rng.integers(0, n, 2))
    mask = np.zeros(n, dtype=bool)
    mask[a:b + 1] = True
    return mask


def test_capacity_monotone_and_subadditive(G, rng):
    n = MESH.interior_dof_count
    for _ in range(50):
        k1 = _random_mask(rng, n)
        k2 = k1 | _random_mask(rng, n)
        assert capacity(G, k1).value <= capacity(G, k2).value + 1e-10
        a, b = _random_mask(rng, n), _random_mask(rng, n)
        assert capacity(G, a | b).value <= capacity(G, a).value + capacity(G, b).value + 1e-10


def test_capacity_minimizer_equals_one_on_set(G):
    K = MESH.nodes_in([(0.4, 0.6)])
    res = capacity(G, K)
    np.testing.assert_array_equal(res.w.values[K], 1.0)
    assert res.value == pytest.approx(G.energy(res.w))


# -- K membership and reconstruction ------------------------------------------

def test_membership_examples(G):
    zero = MESH.function(np.zeros(MESH.interior_dof_count))
    rep = check_K_membership(G, None, zero)
    assert rep.member
    np.testing.assert_allclose(rep.slack, lumped_mass(MESH))
    z0 = torsion_z(G, None, NodalMeasure.zero(MESH)).w
    rep0 = check_K_membership(G, None, z0)
    assert rep0.member and np.abs(rep0.slack).max() <= 1e-12
    assert not check_K_membership(G, None, 2 * z0).member
    with pytest.raises(MeasureError):
        measure_from_z(G, None, 2 * z0)


def test_reconstruction_of_zero_measure(G):
    z0 = torsion_z(G, None, NodalMeasure.zero(MESH)).w
    mu = measure_from_z(G, None, z0)
    assert np.abs(mu.weights).max() <= 1e-8
    assert not mu.infinite_set.any()


def test_reconstruction_block_weight_five(G):
    mu = NodalMeasure.on_intervals(MESH, [(0.4, 0.6)], 5.0)
    rec = measure_from_z(G, None, torsion_z(G, None, mu).w)
    np.testing.assert_allclose(rec.weights, mu.weights, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("kind", ["tilde", "omega", "spectral"])
def test_reconstruction_random_blocks(kind, rng):
    Gk = assemble(MESH, kind, 0.1)
    for _ in range(20):
        weights = np.zeros(MESH.interior_dof_count)
        inf = np.zeros(MESH.interior_dof_count, dtype=bool)
        for _ in range(rng.integers(1, 4)):
            mask = _random_mask(rng, MESH.interior_dof_count)
            if rng.random() < 0.3:
                inf |= mask
            else:
                weights[mask] = rng.uniform(0.5, 100.0)
        mu = NodalMeasure(MESH, weights, inf)
        rec = measure_from_z(Gk, None, torsion_z(Gk, None, mu).w)
        np.testing.assert_array_equal(rec.infinite_set, mu.infinite_set)
        keep = ~mu.infinite_set
        np.testing.assert_allclose(rec.weights[keep], mu.weights[keep], rtol=1e-6, atol=1e-8 * weights.max(initial=1))


# -- gamma harness ----------------------------------------------------------------

def test_gamma_constant_sequence(G):
    mu = NodalMeasure.on_intervals(MESH, [(0.3, 0.6)], 4.0)
    rep = gamma_sequence_test(G, None, [mu, mu, mu], [lambda x: np.sin(np.pi * x)])
    assert np.all(rep.z_diff == 0) and np.all(rep.f_diff == 0)


def test_gamma_blow_up_sequence(G):
    block = [(0.3, 0.6)]
    mus = [NodalMeasure.on_intervals(MESH, block, 10.0**k) for k in range(5)]
    mus.append(NodalMeasure.on_intervals(MESH, block, np.inf))
    rhs = [lambda x: np.sin(np.pi * x), lambda x: x, lambda x: 1 + np.cos(2 * np.pi * x)]
    rep = gamma_sequence_test(G, None, mus, rhs)
    assert np.all(np.diff(rep.z_diff) < 0)
    assert rep.z_diff[-2] <= 1e-3 * rep.z_norms[0]
    assert np.all(np.diff(rep.f_diff, axis=1) < 0)
    assert rep.bounds_ok and rep.cauchy_consistent
    # comparison principle on the block: z_k decreases nodally as the weight grows
    on = MESH.nodes_in(block)
    zk = [torsion_z(G, None, mu).w.values[on] for mu in mus]
    for a, b in zip(zk, zk[1:]):
        assert np.all(b <= a + 1e-12)
    assert set(rep.as_dict()) >= {"z_diff", "f_diff", "z_cauchy_implies_f_cauchy", "empirical_constants"}


def test_gamma_needs_two_measures(G):
    with pytest.raises(ValueError):
        gamma_sequence_test(G, None, [NodalMeasure.zero(MESH)], [lambda x: x])
    with pytest.raises(Exception):
        gamma_sequence_test(G, None, [NodalMeasure.zero(MESH), NodalMeasure.zero(Mesh1D(0, 1, 8))], [lambda x: x])
