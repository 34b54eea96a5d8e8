"""QUBO problems and the samplers that draw from them.

A binary RBM maps onto a QUBO objective by negating its parameters: variables
0..n_visible-1 are the visible units, the hidden units follow. All samplers
return a SampleSet whose energies are recomputed from the problem, never
trusted from the generating process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Tuple

import numpy as np

from . import _kernels

__all__ = [
    "QuboProblem",
    "SampleSet",
    "AnnealSchedule",
    "BoltzmannDistribution",
    "rbm_to_qubo",
    "qubo_energy",
    "exact_boltzmann",
    "gibbs_sample",
    "sa_sample",
    "negative_phase",
    "ExactSampler",
    "SaSampler",
]

MAX_EXACT_VARS = 20


@dataclass(frozen=True)
class QuboProblem:
    """Minimization objective offset + sum(linear_i x_i) + sum(q_ij x_i x_j)."""

    linear: np.ndarray
    quadratic: Dict[Tuple[int, int], float]
    offset: float = 0.0

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=np.float64)
        if lin.ndim != 1:
            raise ValueError("linear coefficients must be a 1-D array")
        object.__setattr__(self, "linear", lin)
        n = lin.shape[0]
        terms = {}
        for key, value in self.quadratic.items():
            i, j = int(key[0]), int(key[1])
            if not (0 <= i < j < n):
                raise ValueError(f"quadratic key {(i, j)} needs 0 <= i < j < {n}")
            terms[(i, j)] = float(value)
        # canonical term order: all energy evaluations accumulate in this
        # exact sequence so independently computed energies match bit for bit
        object.__setattr__(self, "quadratic", dict(sorted(terms.items())))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n_vars(self) -> int:
        return int(self.linear.shape[0])

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric off-diagonal matrix view of the quadratic terms."""
        n = self.n_vars
        coupling = np.zeros((n, n), dtype=np.float64)
        for (i, j), value in self.quadratic.items():
            coupling[i, j] = value
            coupling[j, i] = value
        return coupling


def qubo_energy(problem: QuboProblem, assignment: Iterable[int]) -> float:
    """Objective value of one assignment, accumulated in canonical order."""
    x = np.asarray(assignment)
    if x.shape != (problem.n_vars,):
        raise ValueError(
            f"assignment has shape {x.shape}, expected ({problem.n_vars},)"
        )
    if not np.isin(x, (0, 1)).all():
        raise ValueError("assignment entries must be 0 or 1")
    acc = problem.offset
    lin = problem.linear
    for i in range(problem.n_vars):
        if x[i]:
            acc += lin[i]
    for (i, j), value in problem.quadratic.items():
        if x[i] and x[j]:
            acc += value
    return float(acc)


def _energies_for(problem: QuboProblem, assignments: np.ndarray) -> np.ndarray:
    return np.array(
        [qubo_energy(problem, assignments[k]) for k in range(assignments.shape[0])],
        dtype=np.float64,
    )


@dataclass(frozen=True)
class SampleSet:
    """Aggregated sampler output: unique assignments with multiplicities.

    occurrences are floats so exact samplers can report fractional expected
    counts; they still sum to the number of reads requested.
    """

    assignments: np.ndarray
    energies: np.ndarray
    occurrences: np.ndarray
    num_reads: float
    sampler_info: str = ""

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.assignments, dtype=np.uint8))
        e = np.asarray(self.energies, dtype=np.float64)
        occ = np.asarray(self.occurrences, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("assignments must be a 2-D array")
        if e.shape != (a.shape[0],) or occ.shape != (a.shape[0],):
            raise ValueError("energies and occurrences must match assignments rows")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("assignments must be binary")
        if (occ < 0).any():
            raise ValueError("occurrences must be non-negative")
        total = float(occ.sum())
        if not math.isclose(total, float(self.num_reads), rel_tol=1e-9, abs_tol=1e-6):
            raise ValueError(
                f"occurrences sum to {total}, expected {self.num_reads}"
            )
        object.__setattr__(self, "assignments", a)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "occurrences", occ)
        object.__setattr__(self, "num_reads", float(self.num_reads))

    @property
    def n_vars(self) -> int:
        return int(self.assignments.shape[1])

    def best(self) -> Tuple[np.ndarray, float]:
        """Lowest-energy assignment and its energy."""
        k = int(np.argmin(self.energies))
        return self.assignments[k], float(self.energies[k])

    def weights(self) -> np.ndarray:
        """Occurrences normalized to a probability vector."""
        return self.occurrences / self.occurrences.sum()


def _aggregate_reads(
    problem: QuboProblem, states: np.ndarray, sampler_info: str
) -> SampleSet:
    uniq, counts = np.unique(states, axis=0, return_counts=True)
    energies = _energies_for(problem, uniq)
    # present samples lowest energy first; ties stay in lexicographic order
    order = np.argsort(energies, kind="stable")
    return SampleSet(
        assignments=uniq[order],
        energies=energies[order],
        occurrences=counts[order].astype(np.float64),
        num_reads=float(states.shape[0]),
        sampler_info=sampler_info,
    )


def rbm_to_qubo(model) -> QuboProblem:
    """Map an RBM's energy onto a QUBO over visible-then-hidden variables.

    The objective equals the RBM energy for every joint state, so sampling
    low QUBO energies is sampling high-probability RBM configurations.
    """
    weights = np.asarray(model.weights, dtype=np.float64)
    a = np.asarray(model.visible_bias, dtype=np.float64)
    b = np.asarray(model.hidden_bias, dtype=np.float64)
    n_visible, n_hidden = weights.shape
    linear = np.concatenate([-a, -b])
    quadratic = {}
    for i in range(n_visible):
        for j in range(n_hidden):
            quadratic[(i, n_visible + j)] = -float(weights[i, j])
    return QuboProblem(linear=linear, quadratic=quadratic, offset=0.0)


def _enumerate_assignments(n_vars: int) -> np.ndarray:
    index = np.arange(1 << n_vars, dtype=np.uint32)
    bits = (index[:, None] >> np.arange(n_vars, dtype=np.uint32)[None, :]) & 1
    return bits.astype(np.uint8)


@dataclass(frozen=True)
class BoltzmannDistribution:
    """Exact Boltzmann weights over every assignment of a small QUBO."""

    assignments: np.ndarray
    energies: np.ndarray
    probabilities: np.ndarray
    beta: float
    log_partition: float

    def marginals(self) -> np.ndarray:
        """P(x_i = 1) for each variable."""
        return self.probabilities @ self.assignments

    def expectation(self, values: np.ndarray) -> float:
        return float(self.probabilities @ np.asarray(values, dtype=np.float64))


def exact_boltzmann(problem: QuboProblem, beta: float = 1.0) -> BoltzmannDistribution:
    """Enumerate all 2**n assignments and normalize exp(-beta * energy)."""
    n = problem.n_vars
    if n > MAX_EXACT_VARS:
        raise ValueError(
            f"exact enumeration supports at most {MAX_EXACT_VARS} variables, got {n}"
        )
    if beta < 0:
        raise ValueError("beta must be non-negative")
    assignments = _enumerate_assignments(n)
    energies = assignments @ problem.linear + problem.offset
    for (i, j), value in problem.quadratic.items():
        energies = energies + value * (assignments[:, i] * assignments[:, j])
    logits = -beta * energies
    peak = logits.max()
    log_z = peak + math.log(np.exp(logits - peak).sum())
    probabilities = np.exp(logits - log_z)
    probabilities = probabilities / probabilities.sum()
    return BoltzmannDistribution(
        assignments=assignments,
        energies=energies.astype(np.float64),
        probabilities=probabilities,
        beta=float(beta),
        log_partition=float(log_z),
    )


_GIBBS_TABLE_LIMIT = 16


def _conditional_tables(weights, a, b):
    """Bernoulli tables P(h_j=1 | v-pattern) and P(v_i=1 | h-pattern)."""
    n_visible, n_hidden = weights.shape
    v_states = _enumerate_assignments(n_visible).astype(np.float64)
    h_states = _enumerate_assignments(n_hidden).astype(np.float64)
    ph = 1.0 / (1.0 + np.exp(-(b[None, :] + v_states @ weights)))
    pv = 1.0 / (1.0 + np.exp(-(a[None, :] + h_states @ weights.T)))
    # flattened as table[(unit << bits_of_other_layer) + other_pattern]
    return ph.T.reshape(-1).copy(), pv.T.reshape(-1).copy()


def gibbs_sample(
    model,
    sweeps: int,
    num_reads: int,
    seed: int,
    beta: float = 1.0,
) -> SampleSet:
    """Run num_reads independent block-Gibbs chains and keep final states.

    Each chain starts from a uniform random visible state and alternates
    h | v and v | h block updates for the requested number of sweeps.
    """
    if num_reads < 0 or sweeps < 1:
        raise ValueError("need num_reads >= 0 and sweeps >= 1")
    weights = beta * np.asarray(model.weights, dtype=np.float64)
    a = beta * np.asarray(model.visible_bias, dtype=np.float64)
    b = beta * np.asarray(model.hidden_bias, dtype=np.float64)
    n_visible, n_hidden = weights.shape
    out = np.zeros((num_reads, n_visible + n_hidden), dtype=np.uint8)
    if num_reads == 0:
        pass
    elif n_visible <= _GIBBS_TABLE_LIMIT and n_hidden <= _GIBBS_TABLE_LIMIT:
        table_h, table_v = _conditional_tables(weights, a, b)
        _kernels.gibbs_table_kernel(
            table_h, table_v, n_visible, n_hidden, sweeps, num_reads,
            np.uint64(seed & 0xFFFFFFFFFFFFFFFF), out,
        )
    else:
        _kernels.gibbs_general_kernel(
            np.ascontiguousarray(weights), a, b, sweeps, num_reads,
            np.uint64(seed & 0xFFFFFFFFFFFFFFFF), out,
        )
    problem = rbm_to_qubo(model)
    return _aggregate_reads(
        problem, out, f"gibbs(sweeps={sweeps}, beta={beta})"
    )


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric inverse-temperature ramp for simulated annealing."""

    beta_start: float = 0.1
    beta_end: float = 5.0
    sweeps: int = 1000
    num_restarts: int = 1

    def __post_init__(self):
        if not (0.0 < self.beta_start <= self.beta_end):
            raise ValueError("need 0 < beta_start <= beta_end")
        if self.sweeps < 1:
            raise ValueError("sweeps must be positive")
        if self.num_restarts < 1:
            raise ValueError("num_restarts must be positive")

    def betas(self) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([self.beta_end], dtype=np.float64)
        return np.geomspace(self.beta_start, self.beta_end, self.sweeps)


def sa_sample(
    problem: QuboProblem,
    num_reads: int,
    seed: int,
    schedule: AnnealSchedule | None = None,
) -> SampleSet:
    """Simulated annealing: per read, one random start swept through the ramp.

    A restart repeats the ramp from the reached state without rerandomizing.
    """
    if num_reads < 0:
        raise ValueError("num_reads must be non-negative")
    schedule = schedule or AnnealSchedule()
    out = np.zeros((num_reads, problem.n_vars), dtype=np.uint8)
    if num_reads:
        _kernels.sa_kernel(
            problem.linear,
            problem.coupling_matrix(),
            schedule.betas(),
            schedule.num_restarts,
            num_reads,
            np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
            out,
        )
    info = (
        f"sa(beta={schedule.beta_start}->{schedule.beta_end}, "
        f"sweeps={schedule.sweeps}, restarts={schedule.num_restarts})"
    )
    return _aggregate_reads(problem, out, info)


def negative_phase(
    samples: SampleSet, n_visible: int, n_hidden: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Occurrence-weighted model statistics <v h^T>, <v>, <h> from samples."""
    if samples.assignments.shape[0] == 0:
        raise ValueError("cannot take statistics of an empty sample set")
    if samples.n_vars != n_visible + n_hidden:
        raise ValueError(
            f"samples carry {samples.n_vars} variables, expected "
            f"{n_visible + n_hidden}"
        )
    weights = samples.weights()
    v = samples.assignments[:, :n_visible].astype(np.float64)
    h = samples.assignments[:, n_visible:].astype(np.float64)
    vw = v * weights[:, None]
    return vw.T @ h, weights @ v, weights @ h


class ExactSampler:
    """Returns every assignment with its exact expected occurrence count.

    Training against it yields the true model expectation in the negative
    phase, which is what makes small-model likelihood ascent monotone.
    """

    name = "exact"

    def __init__(self, beta: float = 1.0):
        self.beta = float(beta)

    def sample(self, problem: QuboProblem, num_reads: int, seed: int) -> SampleSet:
        del seed  # deterministic by construction
        dist = exact_boltzmann(problem, beta=self.beta)
        return SampleSet(
            assignments=dist.assignments,
            energies=dist.energies,
            occurrences=dist.probabilities * float(num_reads),
            num_reads=float(num_reads),
            sampler_info=f"exact(beta={self.beta})",
        )


class SaSampler:
    """Simulated-annealing sampler with a fixed schedule."""

    name = "sa"

    def __init__(self, schedule: AnnealSchedule | None = None):
        self.schedule = schedule or AnnealSchedule()

    def sample(self, problem: QuboProblem, num_reads: int, seed: int) -> SampleSet:
        return sa_sample(problem, num_reads, seed, schedule=self.schedule)
