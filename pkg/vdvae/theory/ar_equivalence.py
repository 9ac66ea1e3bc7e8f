"""A VAE with deterministic posteriors and an identity decoder equals its autoregressive prior.

Checked by exact enumeration over a small discrete cube: with q(z_i = x_i | z_<i, x) = 1,
p(x_i | z) = [x_i = z_i] and p(z_i | z_<i) taken from an autoregressive model, the ELBO
of every x equals the autoregressive log-likelihood.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

ENUMERATION_LIMIT = 4096


@dataclass
class DiscreteARModel:
    """tables[i][prefix] is the distribution of x_i given the base-`alphabet` index of x_<i."""
    n: int
    alphabet: int
    tables: list[np.ndarray]

    def __post_init__(self):
        for i, table in enumerate(self.tables):
            if table.shape != (self.alphabet ** i, self.alphabet):
                raise ConfigError(f"table {i} has shape {table.shape}, expected {(self.alphabet ** i, self.alphabet)}")

    @classmethod
    def uniform(cls, n: int, alphabet: int = 2) -> DiscreteARModel:
        return cls(n, alphabet, [np.full((alphabet ** i, alphabet), 1.0 / alphabet) for i in range(n)])

    def prefix_index(self, x: tuple[int, ...], i: int) -> int:
        index = 0
        for v in x[:i]:
            index = index * self.alphabet + v
        return index

    def conditional(self, x: tuple[int, ...], i: int) -> np.ndarray:
        return self.tables[i][self.prefix_index(x, i)]

    def log_prob(self, x: tuple[int, ...]) -> float:
        return math.fsum(math.log(self.conditional(x, i)[x[i]]) for i in range(self.n))

    def configurations(self):
        size = self.alphabet ** self.n
        if size > ENUMERATION_LIMIT:
            raise ConfigError(f"{self.alphabet}^{self.n} = {size} configurations exceed the enumeration "
                              f"limit of {ENUMERATION_LIMIT}")
        return itertools.product(range(self.alphabet), repeat=self.n)


def random_ar_model(n: int, rng: np.random.Generator, alphabet: int = 2) -> DiscreteARModel:
    tables = []
    for i in range(n):
        table = rng.dirichlet(np.ones(alphabet), size=alphabet ** i)
        table[:, -1] = 1.0 - table[:, :-1].sum(axis=1)
        tables.append(table)
    return DiscreteARModel(n, alphabet, tables)


def _categorical_kl(q: np.ndarray, p: np.ndarray) -> float:
    """Exact KL with 0 * log 0 = 0."""
    return math.fsum(float(qv) * (math.log(qv) - math.log(pv)) for qv, pv in zip(q, p) if qv > 0)


def vae_elbo(ar: DiscreteARModel, x: tuple[int, ...]) -> float:
    """Exact ELBO of x under the VAE built on `ar`.

    Reconstruction: sum over z with q(z|x) > 0 of q(z|x) log p(x|z).
    KL: sum over layers of E_q[KL(q(z_i|z_<i, x) || p(z_i|z_<i))].
    """
    def posterior(i: int) -> np.ndarray:
        one_hot = np.zeros(ar.alphabet)
        one_hot[x[i]] = 1.0
        return one_hot

    recon_terms, kl_terms = [], []
    for z in itertools.product(range(ar.alphabet), repeat=ar.n):
        weight = math.prod(float(posterior(i)[z[i]]) for i in range(ar.n))
        if weight == 0.0:
            continue
        likelihood = math.prod(1.0 if x[i] == z[i] else 0.0 for i in range(ar.n))
        recon_terms.append(weight * math.log(likelihood))
        kl_terms.append(weight * math.fsum(_categorical_kl(posterior(i), ar.conditional(z, i))
                                           for i in range(ar.n)))
    return math.fsum(recon_terms) - math.fsum(kl_terms)


def vae_marginal(ar: DiscreteARModel, x: tuple[int, ...]) -> float:
    """p(x) = sum_z p(z) p(x|z) with the identity decoder."""
    terms = []
    for z in itertools.product(range(ar.alphabet), repeat=ar.n):
        likelihood = math.prod(1.0 if x[i] == z[i] else 0.0 for i in range(ar.n))
        terms.append(math.exp(ar.log_prob(z)) * likelihood)
    return math.fsum(terms)


@dataclass
class Prop1Report:
    n: int
    n_configurations: int
    max_discrepancy: float
    total_mass: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_discrepancy < self.tolerance and abs(self.total_mass - 1.0) < self.tolerance

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] AR equivalence n={self.n}: max |ELBO - log p_AR| = {self.max_discrepancy:.3e} "
                f"over {self.n_configurations} configurations, total mass {self.total_mass:.15f}")


def prop1_equivalence_check(ar: DiscreteARModel, tolerance: float = 1e-12) -> Prop1Report:
    worst, masses, count = 0.0, [], 0
    for x in ar.configurations():
        worst = max(worst, abs(vae_elbo(ar, x) - ar.log_prob(x)))
        masses.append(vae_marginal(ar, x))
        count += 1
    return Prop1Report(n=ar.n, n_configurations=count, max_discrepancy=worst,
                       total_mass=math.fsum(masses), tolerance=tolerance)
