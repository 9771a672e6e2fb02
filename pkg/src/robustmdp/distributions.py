"""Finitely supported distributions and density reweightings.

These are the computational substrates shared by the ambiguity, risk and
solver layers: a canonical (value, probability) atom list and a nonnegative
reweighting of a finite reference law.
"""

from dataclasses import dataclass

import numpy as np

#: absolute tolerance for probability mass accounting
PROB_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteDistribution:
    """Law on the reals with finitely many atoms.

    Canonical form: values strictly increasing, probabilities positive and
    summing to one within PROB_TOL. Build through :meth:`from_atoms`, which
    merges equal values and drops zero-mass atoms.
    """

    values: tuple
    probs: tuple

    @staticmethod
    def from_atoms(values, probs) -> "DiscreteDistribution":
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1 or values.size == 0:
            raise ValueError("atoms need matching non-empty value/prob lists")
        if np.any(probs < -PROB_TOL):
            raise ValueError("negative atom probability")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"atom probabilities sum to {total!r}, not 1")
        order = np.argsort(values, kind="stable")
        merged_v, merged_p = [], []
        for v, p in zip(values[order], probs[order]):
            if merged_v and v == merged_v[-1]:
                merged_p[-1] += p
            else:
                merged_v.append(float(v))
                merged_p.append(float(p))
        keep = [(v, p) for v, p in zip(merged_v, merged_p) if p > 0.0]
        if not keep:
            raise ValueError("all atoms carry zero mass")
        return DiscreteDistribution(
            values=tuple(v for v, _ in keep), probs=tuple(p for _, p in keep)
        )

    @staticmethod
    def point_mass(value) -> "DiscreteDistribution":
        return DiscreteDistribution(values=(float(value),), probs=(1.0,))

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def cdf_points(self) -> np.ndarray:
        """Cumulative probabilities aligned with the sorted atom values."""
        return np.cumsum(self.probs)

    def cdf(self, t) -> float:
        total = 0.0
        for v, p in zip(self.values, self.probs):
            if v <= t:
                total += p
        return total

    def stop_loss(self, t) -> float:
        """E[(X - t)+], piecewise linear in t with kinks at the atoms."""
        return float(
            sum(p * (v - t) for v, p in zip(self.values, self.probs) if v > t)
        )


@dataclass(frozen=True)
class Density:
    """Nonnegative reweighting of a finite reference law.

    weights[i] multiplies the reference probability of the i-th support
    point; a valid density satisfies sum_i p_i * w_i = 1.
    """

    weights: tuple

    @staticmethod
    def uniform(size) -> "Density":
        return Density(weights=(1.0,) * size)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def law(self, ref_probs) -> DiscreteDistribution:
        """Distribution of the density itself under the reference law."""
        return DiscreteDistribution.from_atoms(self.weights, ref_probs)

    def expectation(self, ref_probs, payoff) -> float:
        p = np.asarray(ref_probs, dtype=float)
        return float(np.dot(p * self.as_array(), payoff))


def density_violations(weights, ref_probs) -> list:
    """Human-readable reasons why `weights` is not a valid density."""
    problems = []
    w = np.asarray(weights, dtype=float)
    p = np.asarray(ref_probs, dtype=float)
    if w.shape != p.shape:
        problems.append(f"density length {w.size} != support size {p.size}")
        return problems
    if np.any(w < -PROB_TOL):
        problems.append("density has a negative weight")
    total = float(np.dot(p, w))
    if abs(total - 1.0) > PROB_TOL:
        problems.append(f"density integrates to {total!r}, not 1")
    return problems
