import itertools

import numpy as np
import pytest

from conftest import random_rbm
from hsiseg import rbm, samplers


def brute_force_minimum(problem):
    best = np.inf
    for bits in itertools.product((0, 1), repeat=problem.n_vars):
        best = min(best, samplers.qubo_energy(problem, bits))
    return best


def test_qubo_energy_matches_hand_computation():
    problem = samplers.QuboProblem(
        linear=np.array([1.0, -2.0, 0.5]),
        quadratic={(0, 1): 3.0, (1, 2): -1.0},
        offset=0.25,
    )
    assert samplers.qubo_energy(problem, [0, 0, 0]) == 0.25
    assert samplers.qubo_energy(problem, [1, 1, 0]) == 0.25 + 1.0 - 2.0 + 3.0
    assert samplers.qubo_energy(problem, [1, 1, 1]) == pytest.approx(1.75)


def test_qubo_problem_validation():
    with pytest.raises(ValueError):
        samplers.QuboProblem(linear=np.zeros((2, 2)), quadratic={})
    with pytest.raises(ValueError):
        samplers.QuboProblem(linear=np.zeros(3), quadratic={(1, 1): 1.0})
    with pytest.raises(ValueError):
        samplers.QuboProblem(linear=np.zeros(3), quadratic={(2, 1): 1.0})
    # keys are canonicalized into sorted order
    problem = samplers.QuboProblem(
        linear=np.zeros(3), quadratic={(1, 2): 1.0, (0, 1): 2.0}
    )
    assert list(problem.quadratic) == [(0, 1), (1, 2)]


def test_bridge_energy_identity_exact(rng):
    # QUBO objective equals RBM energy bit for bit on every assignment
    for _ in range(40):
        n_visible = int(rng.integers(1, 5))
        n_hidden = int(rng.integers(1, 5))
        model = random_rbm(rng, n_visible, n_hidden)
        problem = samplers.rbm_to_qubo(model)
        assert problem.n_vars == n_visible + n_hidden
        for bits in itertools.product((0, 1), repeat=problem.n_vars):
            v, h = bits[:n_visible], bits[n_visible:]
            assert samplers.qubo_energy(problem, bits) == rbm.energy(model, v, h)


def test_exact_boltzmann_properties(rng):
    model = random_rbm(rng, 3, 2)
    problem = samplers.rbm_to_qubo(model)
    dist = samplers.exact_boltzmann(problem, beta=1.3)
    assert dist.assignments.shape == (32, 5)
    assert dist.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    # Boltzmann ratios: p_i / p_j = exp(-beta (E_i - E_j))
    ratio = dist.probabilities[3] / dist.probabilities[17]
    expected = np.exp(-1.3 * (dist.energies[3] - dist.energies[17]))
    assert ratio == pytest.approx(expected, rel=1e-9)
    # log partition consistent with direct summation
    assert dist.log_partition == pytest.approx(
        np.log(np.exp(-1.3 * dist.energies).sum()), rel=1e-9
    )
    marg = dist.marginals()
    assert marg.shape == (5,)
    assert ((marg >= 0) & (marg <= 1)).all()


def test_exact_boltzmann_guards():
    big = samplers.QuboProblem(linear=np.zeros(21), quadratic={})
    with pytest.raises(ValueError):
        samplers.exact_boltzmann(big)
    small = samplers.QuboProblem(linear=np.zeros(2), quadratic={})
    with pytest.raises(ValueError):
        samplers.exact_boltzmann(small, beta=-1.0)


def test_sample_set_invariants(rng):
    model = random_rbm(rng, 3, 2)
    result = samplers.gibbs_sample(model, sweeps=3, num_reads=50, seed=5)
    assert result.occurrences.sum() == pytest.approx(50.0)
    assert result.n_vars == 5
    # energies are sorted ascending and match recomputation
    assert (np.diff(result.energies) >= 0).all()
    problem = samplers.rbm_to_qubo(model)
    for row, energy in zip(result.assignments, result.energies):
        assert samplers.qubo_energy(problem, row) == energy
    best_state, best_energy = result.best()
    assert best_energy == result.energies[0]
    assert samplers.qubo_energy(problem, best_state) == best_energy
    assert result.weights().sum() == pytest.approx(1.0)


def test_sample_set_validation():
    with pytest.raises(ValueError):
        samplers.SampleSet(
            assignments=np.array([[0, 2]]),
            energies=np.zeros(1),
            occurrences=np.ones(1),
            num_reads=1,
        )
    with pytest.raises(ValueError):
        samplers.SampleSet(
            assignments=np.zeros((2, 2), dtype=np.uint8),
            energies=np.zeros(2),
            occurrences=np.ones(2),
            num_reads=5,  # occurrences sum to 2
        )


def test_gibbs_zero_reads(rng):
    model = random_rbm(rng, 2, 2)
    result = samplers.gibbs_sample(model, sweeps=1, num_reads=0, seed=0)
    assert result.num_reads == 0.0
    assert result.assignments.shape[0] == 0


def test_gibbs_determinism_and_seed_sensitivity(rng):
    model = random_rbm(rng, 3, 3)
    a = samplers.gibbs_sample(model, sweeps=10, num_reads=200, seed=42)
    b = samplers.gibbs_sample(model, sweeps=10, num_reads=200, seed=42)
    c = samplers.gibbs_sample(model, sweeps=10, num_reads=200, seed=43)
    assert np.array_equal(a.assignments, b.assignments)
    assert np.array_equal(a.occurrences, b.occurrences)
    assert not (
        np.array_equal(a.assignments, c.assignments)
        and np.array_equal(a.occurrences, c.occurrences)
    )


def test_gibbs_converges_to_boltzmann(rng):
    # moderate weights keep mixing fast; joint TV shrinks with burn-in
    model = random_rbm(rng, 3, 2, scale=0.6)
    problem = samplers.rbm_to_qubo(model)
    dist = samplers.exact_boltzmann(problem)
    result = samplers.gibbs_sample(model, sweeps=200, num_reads=20000, seed=9)
    empirical = np.zeros(dist.assignments.shape[0])
    keys = {tuple(row): k for k, row in enumerate(dist.assignments)}
    for row, occ in zip(result.assignments, result.occurrences):
        empirical[keys[tuple(row)]] = occ / result.num_reads
    tv = 0.5 * np.abs(empirical - dist.probabilities).sum()
    assert tv < 0.03


def test_gibbs_general_kernel_path(rng):
    # wide layer exceeds the lookup-table limit and takes the general kernel
    model = random_rbm(rng, 17, 2, scale=0.1)
    result = samplers.gibbs_sample(model, sweeps=2, num_reads=30, seed=1)
    assert result.occurrences.sum() == pytest.approx(30.0)
    assert result.n_vars == 19


def test_anneal_schedule():
    schedule = samplers.AnnealSchedule(beta_start=0.1, beta_end=10.0, sweeps=100)
    betas = schedule.betas()
    assert betas.shape == (100,)
    assert betas[0] == pytest.approx(0.1)
    assert betas[-1] == pytest.approx(10.0)
    assert (np.diff(betas) > 0).all()
    # geometric: constant ratio
    ratios = betas[1:] / betas[:-1]
    assert np.allclose(ratios, ratios[0])
    assert samplers.AnnealSchedule(sweeps=1).betas().tolist() == [5.0]
    with pytest.raises(ValueError):
        samplers.AnnealSchedule(beta_start=0.0)
    with pytest.raises(ValueError):
        samplers.AnnealSchedule(beta_start=2.0, beta_end=1.0)
    with pytest.raises(ValueError):
        samplers.AnnealSchedule(sweeps=0)


def test_sa_finds_small_problem_minimum(rng):
    for seed in range(5):
        problem_rng = np.random.default_rng(seed)
        n = 6
        quadratic = {
            (i, j): float(problem_rng.normal(0, 1))
            for i in range(n)
            for j in range(i + 1, n)
        }
        problem = samplers.QuboProblem(
            linear=problem_rng.normal(0, 1, n), quadratic=quadratic
        )
        result = samplers.sa_sample(problem, num_reads=30, seed=seed)
        _, best = result.best()
        assert best == pytest.approx(brute_force_minimum(problem), abs=1e-9)


def test_sa_determinism(rng):
    problem = samplers.QuboProblem(
        linear=rng.normal(0, 1, 5),
        quadratic={(0, 1): 1.0, (2, 4): -2.0},
    )
    a = samplers.sa_sample(problem, num_reads=40, seed=7)
    b = samplers.sa_sample(problem, num_reads=40, seed=7)
    assert np.array_equal(a.assignments, b.assignments)
    assert np.array_equal(a.occurrences, b.occurrences)


def test_negative_phase_statistics(rng):
    model = random_rbm(rng, 3, 2)
    problem = samplers.rbm_to_qubo(model)
    exact = samplers.ExactSampler()
    result = exact.sample(problem, num_reads=100, seed=0)
    # fractional occurrences sum to the requested reads
    assert result.occurrences.sum() == pytest.approx(100.0)
    vh, v, h = samplers.negative_phase(result, 3, 2)
    dist = samplers.exact_boltzmann(problem)
    v_ref = dist.probabilities @ dist.assignments[:, :3]
    h_ref = dist.probabilities @ dist.assignments[:, 3:]
    vh_ref = (dist.assignments[:, :3] * dist.probabilities[:, None]).T @ dist.assignments[:, 3:]
    assert v == pytest.approx(v_ref, abs=1e-12)
    assert h == pytest.approx(h_ref, abs=1e-12)
    assert vh == pytest.approx(vh_ref, abs=1e-12)


def test_negative_phase_validation(rng):
    model = random_rbm(rng, 3, 2)
    result = samplers.gibbs_sample(model, sweeps=1, num_reads=10, seed=0)
    with pytest.raises(ValueError):
        samplers.negative_phase(result, 4, 2)
    empty = samplers.gibbs_sample(model, sweeps=1, num_reads=0, seed=0)
    with pytest.raises(ValueError):
        samplers.negative_phase(empty, 3, 2)


def test_sa_sampler_wrapper(rng):
    model = random_rbm(rng, 2, 2)
    problem = samplers.rbm_to_qubo(model)
    sampler = samplers.SaSampler(
        samplers.AnnealSchedule(beta_start=0.5, beta_end=20.0, sweeps=50)
    )
    result = sampler.sample(problem, num_reads=20, seed=3)
    assert result.num_reads == 20.0
    assert "sa(" in result.sampler_info
