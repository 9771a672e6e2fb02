"""Quantile functions, spectral risk measures and their dual machinery.

A spectrum is an increasing, right-continuous, nonnegative step function
on [0,1] with unit integral. It defines both a coherent risk measure
rho(X) = int_0^1 q_X(u) phi(u) du and, through its comonotone rearrangements,
a law-invariant family of densities over any finite reference law.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .distributions import PROB_TOL, Density, DiscreteDistribution

#: largest support size for which a spectrum is expanded into the full
#: family of comonotone densities (one per payoff ordering)
MAX_ORDERING_EXPANSION = 6


@dataclass(frozen=True)
class Spectrum:
    """Step function phi on [0,1]: breakpoints 0=u_0<...<u_k=1, values phi_1<=...<=phi_k.

    phi is right-continuous: phi(u) = values[j] on [breakpoints[j], breakpoints[j+1]).
    Valid spectra are increasing, nonnegative and integrate to one; see
    :func:`spectrum_violations`. Containers are permissive so malformed user
    input surfaces through model validation rather than a constructor error.
    """

    breakpoints: tuple
    values: tuple

    def value_at(self, u) -> float:
        j = int(np.searchsorted(self.breakpoints, u, side="right")) - 1
        j = min(max(j, 0), len(self.values) - 1)
        return self.values[j]

    def integral_to(self, u) -> float:
        """Phi(u) = int_0^u phi, exact for the step function."""
        total = 0.0
        for j, v in enumerate(self.values):
            lo, hi = self.breakpoints[j], self.breakpoints[j + 1]
            if u <= lo:
                break
            total += v * (min(u, hi) - lo)
        return total

    def norm(self, q) -> float:
        """L^q norm of phi(U), U uniform; q may be float('inf')."""
        vals = np.asarray(self.values, dtype=float)
        gaps = np.diff(self.breakpoints)
        if q == float("inf"):
            return float(vals.max())
        return float(np.dot(vals**q, gaps) ** (1.0 / q))


def spectrum_violations(spec: Spectrum) -> list:
    problems = []
    bp = np.asarray(spec.breakpoints, dtype=float)
    vals = np.asarray(spec.values, dtype=float)
    if bp.ndim != 1 or vals.ndim != 1 or bp.size != vals.size + 1 or vals.size == 0:
        problems.append("spectrum needs k+1 breakpoints for k values")
        return problems
    if abs(bp[0]) > 0 or abs(bp[-1] - 1.0) > 0:
        problems.append("spectrum breakpoints must start at 0 and end at 1")
    if np.any(np.diff(bp) <= 0):
        problems.append("spectrum breakpoints must be strictly increasing")
    if np.any(vals < 0):
        problems.append("spectrum values must be nonnegative")
    if np.any(np.diff(vals) < 0):
        problems.append("spectrum values must be increasing")
    total = float(np.dot(vals, np.diff(bp)))
    if abs(total - 1.0) > PROB_TOL:
        problems.append(f"spectrum integrates to {total!r}, not 1")
    return problems


def expected_shortfall_spectrum(alpha) -> Spectrum:
    """The step spectrum (1/(1-alpha)) * 1_[alpha,1]; alpha=0 is the mean."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError("expected shortfall level must lie in [0,1)")
    if alpha == 0.0:
        return Spectrum(breakpoints=(0.0, 1.0), values=(1.0,))
    return Spectrum(breakpoints=(0.0, float(alpha), 1.0), values=(0.0, 1.0 / (1.0 - alpha)))


@dataclass(frozen=True)
class TransformedSample:
    """Uniform coordinate attached to an atom by the distributional transform."""

    index: int
    u: float


def quantile_lower(d: DiscreteDistribution, alpha) -> float:
    """Left-continuous generalized inverse: inf {x : F(x) >= alpha}."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("quantile level must lie in (0,1)")
    cum = d.cdf_points()
    idx = int(np.searchsorted(cum, alpha, side="left"))
    return d.values[min(idx, len(d.values) - 1)]


def quantile_upper(d: DiscreteDistribution, alpha) -> float:
    """Right-continuous generalized inverse: inf {x : F(x) > alpha}."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("quantile level must lie in (0,1)")
    cum = d.cdf_points()
    idx = int(np.searchsorted(cum, alpha, side="right"))
    return d.values[min(idx, len(d.values) - 1)]


def spectral_rho(d: DiscreteDistribution, phi: Spectrum) -> float:
    """int_0^1 q_X(u) phi(u) du as an exact piecewise sum.

    The unit interval is partitioned by the CDF jump points of d together
    with the spectrum breakpoints; on each open cell both the quantile and
    phi are constant, so the integral is a finite sum with no quadrature.
    """
    cuts = np.concatenate(([0.0, 1.0], d.cdf_points(), np.asarray(phi.breakpoints)))
    cuts = np.unique(np.clip(cuts, 0.0, 1.0))
    # merge float-noise near-duplicates so every cell midpoint is interior
    kept = [cuts[0]]
    for c in cuts[1:]:
        if c - kept[-1] > 1e-15:
            kept.append(c)
    kept[-1] = 1.0
    total = 0.0
    for lo, hi in zip(kept[:-1], kept[1:]):
        mid = 0.5 * (lo + hi)
        total += quantile_lower(d, mid) * phi.value_at(mid) * (hi - lo)
    return float(total)


def comonotone_density(payoffs, ref_probs, phi: Spectrum) -> Density:
    """Density comonotone to the payoff vector, built from the spectrum.

    Support points are ranked by payoff (stable, so ties keep support
    order); the j-th ranked point receives the average of phi over its
    cumulative-probability interval. This is the maximizer of E[X Y] over
    the law-invariant set generated by phi.
    """
    pay = np.asarray(payoffs, dtype=float)
    p = np.asarray(ref_probs, dtype=float)
    order = np.argsort(pay, kind="stable")
    weights = np.empty_like(p)
    cum = 0.0
    for i in order:
        nxt = cum + p[i]
        weights[i] = (phi.integral_to(nxt) - phi.integral_to(cum)) / p[i]
        cum = nxt
    return Density(weights=tuple(float(w) for w in weights))


def dual_value(payoffs, ref_probs, phi: Spectrum) -> float:
    """sup E[X Y] over the spectral ambiguity set, attained comonotonically.

    Equals spectral_rho of the payoff law; the two routes are kept separate
    so the duality can be checked numerically.
    """
    y = comonotone_density(payoffs, ref_probs, phi)
    return y.expectation(ref_probs, payoffs)


def distributional_transform(d: DiscreteDistribution, index, v) -> TransformedSample:
    """Uniform coordinate for atom `index`, randomized by v in (0,1).

    u lies in the CDF jump interval of the atom, so both generalized
    inverses recover the atom value at u.
    """
    if not 0.0 < v < 1.0:
        raise ValueError("randomization draw must lie in (0,1)")
    cum = d.cdf_points()
    lo = cum[index - 1] if index > 0 else 0.0
    return TransformedSample(index=int(index), u=float(lo + v * (cum[index] - lo)))


def spectrum_from_density(density: Density, ref_probs) -> Spectrum:
    """Upper quantile function of the density's law, emitted as a spectrum.

    Densities equal in law produce identical spectra; the unit integral is
    the density normalization E[Y] = 1.
    """
    law = density.law(ref_probs)
    cum = law.cdf_points()
    cum[-1] = 1.0
    return Spectrum(
        breakpoints=(0.0, *(float(c) for c in cum)),
        values=tuple(float(v) for v in law.values),
    )


def expand_spectrum_to_generators(phi: Spectrum, ref_probs) -> list:
    """All comonotone densities of phi over a finite reference law.

    One density per ranking of the support points; for every payoff vector
    the spectral supremum is attained inside this family, so it is an exact
    generator representation of the spectral set. Support sizes above
    MAX_ORDERING_EXPANSION are refused (factorial growth).
    """
    p = np.asarray(ref_probs, dtype=float)
    m = p.size
    if m > MAX_ORDERING_EXPANSION:
        raise SpectralExpansionError(
            f"support size {m} exceeds ordering-expansion limit {MAX_ORDERING_EXPANSION}"
        )
    seen = set()
    out = []
    for perm in itertools.permutations(range(m)):
        weights = np.empty(m)
        cum = 0.0
        for i in perm:
            nxt = cum + p[i]
            weights[i] = (phi.integral_to(nxt) - phi.integral_to(cum)) / p[i]
            cum = nxt
        key = tuple(round(w, 14) for w in weights)
        if key not in seen:
            seen.add(key)
            out.append(Density(weights=tuple(float(w) for w in weights)))
    return out


class SpectralExpansionError(RuntimeError):
    """Raised when a spectral set cannot be expanded into finitely many generators."""


def solve_risk_form(model):
    """Backward induction in risk-measure form for all-spectral models.

    J_n(x) = min_a rho_phi(cost + J_{n+1} at the transition), with rho the
    stage spectrum's risk measure under the reference disturbance law.
    Returns the same result structure as the robust solver, with comonotone
    witness densities.
    """
    from .solver import SolveResult, _validate_or_raise

    _validate_or_raise(model)
    n_stages = model.horizon
    n_states = len(model.states.points)
    for n, stage in enumerate(model.stages):
        if not stage.ambiguity.is_spectral:
            raise ValueError(f"stage {n} is not spectral; use solve_robust")
    values = np.zeros((n_stages + 1, n_states))
    values[n_stages] = np.asarray(model.terminal_cost, dtype=float)
    controller, nature, witnesses = [], [], []
    for n in range(n_stages - 1, -1, -1):
        stage = model.stages[n]
        phi = stage.ambiguity.spectrum
        probs = np.asarray(stage.disturbance.ref_probs, dtype=float)
        row_actions, row_nature, row_wit = [], [], []
        for s in range(n_states):
            vals = np.full(len(stage.actions.points), np.inf)
            entries = [None] * len(stage.actions.points)
            for a in stage.admissible[s]:
                payoff = model.stage_payoff(n, s, a, values[n + 1])
                law = DiscreteDistribution.from_atoms(payoff, probs)
                vals[a] = spectral_rho(law, phi)
                entries[a] = "comonotone"
            # lowest action index within the tie window of the minimum
            best_a = int(np.argmax(vals <= vals.min() + 1e-12))
            values[n, s] = vals.min()
            row_actions.append(best_a)
            row_nature.append(tuple(entries))
            row_wit.append(
                comonotone_density(model.stage_payoff(n, s, best_a, values[n + 1]), probs, phi)
            )
        controller.insert(0, tuple(row_actions))
        nature.insert(0, tuple(row_nature))
        witnesses.insert(0, tuple(row_wit))
    return SolveResult(
        values=values,
        controller=tuple(controller),
        nature=tuple(nature),
        witnesses=tuple(witnesses),
    )
