"""Ambiguity sets over a finite disturbance and stochastic-order reductions.

An ambiguity set is either a finite generator family of densities (with
convex-hull semantics: the worst-case value never improves on the hull, so
the extreme points are a lossless representation) or a spectral set given
by a spectrum, whose worst case is a spectral risk measure.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distributions import Density, DiscreteDistribution
from .risk import Spectrum, comonotone_density, spectral_rho

MAX = "max"
MIN = "min"

#: slack on order comparisons so exact dominance survives float noise
ORDER_TOL = 1e-12
#: tolerance for the equal-means precondition of the convex order
MEAN_TOL = 1e-10
#: tolerance on stop-loss comparisons
STOP_LOSS_TOL = 1e-10


@dataclass(frozen=True)
class AmbiguitySet:
    """Generator family or spectral set; q/norm_bound are diagnostics metadata."""

    generators: Optional[tuple] = None
    spectrum: Optional[Spectrum] = None
    q: Optional[float] = None
    norm_bound: Optional[float] = None

    @staticmethod
    def from_generators(weight_lists, q=None, norm_bound=None) -> "AmbiguitySet":
        gens = tuple(Density(weights=tuple(float(w) for w in ws)) for ws in weight_lists)
        return AmbiguitySet(generators=gens, q=q, norm_bound=norm_bound)

    @staticmethod
    def from_spectrum(spectrum: Spectrum, q=None, norm_bound=None) -> "AmbiguitySet":
        return AmbiguitySet(spectrum=spectrum, q=q, norm_bound=norm_bound)

    @staticmethod
    def singleton(size) -> "AmbiguitySet":
        """The reference measure alone (density identically one)."""
        return AmbiguitySet(generators=(Density.uniform(size),))

    @property
    def is_spectral(self) -> bool:
        return self.spectrum is not None

    def __post_init__(self):
        if (self.generators is None) == (self.spectrum is None):
            raise ValueError("ambiguity set needs exactly one of generators or spectrum")


def sup_over_set(amb: AmbiguitySet, payoff, ref):
    """Worst-case expectation of the payoff vector and its witness density.

    Generator sets: maximum over generators (lowest index on exact ties).
    Spectral sets: the spectral risk measure of the payoff law under the
    reference probabilities, witnessed by the comonotone density.
    """
    p = np.asarray(ref.ref_probs, dtype=float)
    payoff = np.asarray(payoff, dtype=float)
    if payoff.shape != p.shape:
        raise ValueError("payoff vector must align with the disturbance support")
    if amb.is_spectral:
        law = DiscreteDistribution.from_atoms(payoff, p)
        witness = comonotone_density(payoff, p, amb.spectrum)
        return spectral_rho(law, amb.spectrum), witness
    best_val, best = None, None
    for den in amb.generators:
        val = float(np.dot(p * den.as_array(), payoff))
        if best_val is None or val > best_val:
            best_val, best = val, den
    return best_val, best


def usual_order_leq(d1: DiscreteDistribution, d2: DiscreteDistribution) -> bool:
    """d1 <=_st d2: the CDF of d1 dominates the CDF of d2 everywhere.

    CDFs of finite laws are piecewise constant, so checking at the union of
    the supports is sufficient.
    """
    for t in sorted(set(d1.values) | set(d2.values)):
        if d1.cdf(t) < d2.cdf(t) - ORDER_TOL:
            return False
    return True


def convex_order_leq(d1: DiscreteDistribution, d2: DiscreteDistribution) -> bool:
    """d1 <=_cx d2: equal means and stop-loss dominance.

    Stop-loss functions of finite laws are piecewise linear with kinks at
    the atoms, so the union of supports carries the whole comparison.
    """
    if abs(d1.mean() - d2.mean()) > MEAN_TOL:
        return False
    for t in sorted(set(d1.values) | set(d2.values)):
        if d1.stop_loss(t) > d2.stop_loss(t) + STOP_LOSS_TOL:
            return False
    return True


def find_st_extreme(amb: AmbiguitySet, ref, direction) -> Optional[Density]:
    """Generator whose induced disturbance law dominates (MAX) or is
    dominated by (MIN) every other generator's law in <=_st, if one exists.

    Lowest index on ties. Spectral sets are rejected; their reduction goes
    through the spectrum instead.
    """
    if amb.is_spectral:
        raise ValueError("stochastic-order extremes apply to generator sets only")
    if direction not in (MAX, MIN):
        raise ValueError(f"direction must be {MAX!r} or {MIN!r}")
    p = np.asarray(ref.ref_probs, dtype=float)
    support = np.asarray(ref.support, dtype=float)
    laws = [DiscreteDistribution.from_atoms(support, p * g.as_array()) for g in amb.generators]
    for k, law_k in enumerate(laws):
        if direction == MAX:
            ok = all(usual_order_leq(law_j, law_k) for law_j in laws)
        else:
            ok = all(usual_order_leq(law_k, law_j) for law_j in laws)
        if ok:
            return amb.generators[k]
    return None


def find_cx_maximal(amb: AmbiguitySet, ref) -> Optional[Density]:
    """Generator whose density, as a random variable under the reference
    law, dominates all others in the convex order; lowest index on ties."""
    if amb.is_spectral:
        raise ValueError("convex-order maxima apply to generator sets only")
    p = np.asarray(ref.ref_probs, dtype=float)
    laws = [g.law(p) for g in amb.generators]
    for k, law_k in enumerate(laws):
        if all(convex_order_leq(law_j, law_k) for law_j in laws):
            return amb.generators[k]
    return None


def convex_combinations(amb: AmbiguitySet, samples, seed) -> AmbiguitySet:
    """The set augmented with seeded random convex combinations of its
    generators. The worst-case value is invariant under this augmentation;
    the hull-invariance tests exercise exactly that."""
    if amb.is_spectral:
        raise ValueError("convex combinations apply to generator sets only")
    rng = np.random.default_rng(seed)
    gens = list(amb.generators)
    arrays = np.array([g.as_array() for g in amb.generators])
    for _ in range(samples):
        lam = rng.dirichlet(np.ones(len(amb.generators)))
        mixed = lam @ arrays
        gens.append(Density(weights=tuple(float(w) for w in mixed)))
    return AmbiguitySet(generators=tuple(gens), q=amb.q, norm_bound=amb.norm_bound)
