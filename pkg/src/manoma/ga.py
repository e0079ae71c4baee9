"""Genetic search over the decoding indicator matrix at fixed beams and
antenna positions.

Genes list the strict upper triangle of the indicator matrix row-major.
Fitness is the sum rate minus a large penalty per user whose rate fails its
minimum; roulette selection is fitness-proportional after shifting the
values to be positive whenever penalties push any of them at or below zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, SystemConfig, channel_matrix
from .rates import pair_powers, rate_vector


@dataclass(frozen=True)
class GaConfig:
    population: int = 100
    penalty: float = 100.0
    crossover_prob: float = 0.5
    mutation_prob: float = 0.1
    max_generations: int = 200

    def validate(self) -> "GaConfig":
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be even and >= 2")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        return self


def gene_length(num_users: int) -> int:
    return num_users * (num_users - 1) // 2


def gene_to_matrix(gene, num_users: int) -> np.ndarray:
    gene = np.asarray(gene, dtype=np.int8)
    if gene.size != gene_length(num_users):
        raise ValueError(f"gene length {gene.size} does not match "
                         f"{num_users} users")
    pi = np.eye(num_users, dtype=np.int8)
    pi[np.triu_indices(num_users, k=1)] = gene
    return pi


def matrix_to_gene(pi) -> np.ndarray:
    pi = np.asarray(pi)
    K = pi.shape[0]
    return pi[np.triu_indices(K, k=1)].astype(np.int8)


def fitness_from_powers(gene, powers, noise, min_rate, penalty) -> float:
    """Sum rate penalized by the count of users at or below the minimum."""
    K = powers.shape[0]
    pi = gene_to_matrix(gene, K)
    rates = rate_vector(powers, pi, noise)
    violations = int(np.sum(rates <= min_rate))
    return float(rates.sum()) - penalty * violations


def fitness(gene, w_set, apv, realization: ChannelRealization,
            config: SystemConfig, ga_config: GaConfig,
            min_rate=None) -> float:
    h = channel_matrix(apv, realization, config.wavelength)
    powers = pair_powers(h, w_set)
    target = config.min_rate if min_rate is None else min_rate
    return fitness_from_powers(gene, powers, np.full(len(h), config.noise_power),
                               target, ga_config.penalty)


def select_parents(fitness_values, rng) -> np.ndarray:
    """Roulette-wheel draw of len(F) parent indices, with replacement.

    The raw proportions are ill-defined once penalties drive any fitness to
    zero or below, so in that case all values are shifted by -min + 1 first.
    """
    f = np.asarray(fitness_values, dtype=float)
    if np.min(f) <= 0.0:
        f = f - np.min(f) + 1.0
    probs = f / f.sum()
    return rng.choice(len(f), size=len(f), replace=True, p=probs)


def crossover(gene_a, gene_b, crossover_prob, rng):
    """Per-locus symmetric swap: one uniform draw per locus shared by the
    pair; both offspring exchange the allele where the draw falls at or
    below the crossover probability."""
    gene_a = np.asarray(gene_a, dtype=np.int8)
    gene_b = np.asarray(gene_b, dtype=np.int8)
    draws = rng.random(gene_a.size)
    swap = draws <= crossover_prob
    child_a = np.where(swap, gene_b, gene_a).astype(np.int8)
    child_b = np.where(swap, gene_a, gene_b).astype(np.int8)
    return child_a, child_b


def elitist_accept(offspring, parent, fitness_fn):
    """Keep the fitter of child and parent; ties keep the parent."""
    return offspring if fitness_fn(offspring) > fitness_fn(parent) else parent


def mutate(gene, mutation_prob, rng):
    """Flip one uniformly chosen locus with the given probability."""
    gene = np.asarray(gene, dtype=np.int8)
    if gene.size == 0:
        raise ValueError("cannot mutate an empty gene")
    out = gene.copy()
    locus = int(rng.integers(gene.size))
    if rng.random() <= mutation_prob:
        out[locus] = 1 - out[locus]
    return out


def run_ga(w_set, apv, realization: ChannelRealization, config: SystemConfig,
           ga_config: GaConfig, rng, min_rate=None):
    """Full generational loop; returns the best indicator matrix found and
    the per-generation best-fitness trace (global best, non-decreasing)."""
    ga_config.validate()
    K = realization.num_users
    nbits = gene_length(K)
    h = channel_matrix(apv, realization, config.wavelength)
    powers = pair_powers(h, w_set)
    noise = np.full(K, config.noise_power)
    target = config.min_rate if min_rate is None else min_rate

    cache = {}

    def fit(gene):
        key = gene.tobytes()
        if key not in cache:
            cache[key] = fitness_from_powers(gene, powers, noise, target,
                                             ga_config.penalty)
        return cache[key]

    if nbits == 0:
        gene = np.zeros(0, dtype=np.int8)
        return gene_to_matrix(gene, K), np.array([fit(gene)])

    G = ga_config.population
    pop = rng.integers(0, 2, size=(G, nbits), dtype=np.int8)
    fits = np.array([fit(g) for g in pop])
    best_idx = int(np.argmax(fits))
    best_gene = pop[best_idx].copy()
    best_fit = float(fits[best_idx])
    trace = [best_fit]

    for _ in range(ga_config.max_generations):
        parent_idx = select_parents(fits, rng)
        parents = pop[parent_idx]
        grouping = rng.permutation(G)
        nxt = np.empty_like(pop)
        for g in range(0, G, 2):
            ia, ib = grouping[g], grouping[g + 1]
            child_a, child_b = crossover(parents[ia], parents[ib],
                                         ga_config.crossover_prob, rng)
            nxt[g] = elitist_accept(child_a, parents[ia], fit)
            nxt[g + 1] = elitist_accept(child_b, parents[ib], fit)
        for g in range(G):
            nxt[g] = mutate(nxt[g], ga_config.mutation_prob, rng)
        pop = nxt
        fits = np.array([fit(g) for g in pop])
        gen_best = int(np.argmax(fits))
        if fits[gen_best] > best_fit:
            best_fit = float(fits[gen_best])
            best_gene = pop[gen_best].copy()
        trace.append(best_fit)

    return gene_to_matrix(best_gene, K), np.array(trace)


def exhaustive_indicator_search(w_set, apv, realization: ChannelRealization,
                                config: SystemConfig, penalty: float = 100.0,
                                min_rate=None, max_bits: int = 12):
    """Enumerate every indicator matrix and return (best Pi, best fitness,
    best sum rate).  This is the oracle the GA is measured against."""
    K = realization.num_users
    nbits = gene_length(K)
    if nbits > max_bits:
        raise ValueError(f"{2**nbits} candidates exceed the enumeration cap "
                         f"(K(K-1)/2 = {nbits} > {max_bits} bits)")
    h = channel_matrix(apv, realization, config.wavelength)
    powers = pair_powers(h, w_set)
    noise = np.full(K, config.noise_power)
    target = config.min_rate if min_rate is None else min_rate
    best = None
    for code in range(2**nbits):
        gene = np.array([(code >> b) & 1 for b in range(nbits)], dtype=np.int8)
        f = fitness_from_powers(gene, powers, noise, target, penalty)
        pi = gene_to_matrix(gene, K)
        sr = float(rate_vector(powers, pi, noise).sum())
        if best is None or f > best[1]:
            best = (pi, f, sr)
    return best
