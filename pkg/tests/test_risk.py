import numpy as np
import pytest
from scipy import stats

from helpers import make_model
from robustmdp import (
    AmbiguitySet,
    Density,
    DiscreteDistribution,
    Spectrum,
    comonotone_density,
    distributional_transform,
    dual_value,
    expand_spectrum_to_generators,
    expected_shortfall_spectrum,
    quantile_lower,
    quantile_upper,
    solve_risk_form,
    solve_robust,
    spectral_rho,
    spectrum_from_density,
)
from robustmdp.risk import SpectralExpansionError, spectrum_violations

UNIF4 = DiscreteDistribution.from_atoms([1, 2, 3, 4], [0.25] * 4)


def random_spectrum(rng, max_steps=10):
    k = int(rng.integers(1, max_steps + 1))
    cuts = np.sort(rng.uniform(size=k - 1)) if k > 1 else np.array([])
    bp = np.concatenate([[0.0], cuts, [1.0]])
    vals = np.sort(rng.uniform(0.05, 2.0, size=k))
    vals /= np.dot(vals, np.diff(bp))
    return Spectrum(tuple(bp), tuple(vals))


def random_distribution(rng, max_atoms=20):
    m = int(rng.integers(1, max_atoms + 1))
    vals = np.unique(rng.normal(size=m) * 2.0)
    return DiscreteDistribution.from_atoms(vals, rng.dirichlet(np.ones(vals.size)))


def test_quantile_point_mass():
    d = DiscreteDistribution.point_mass(3.0)
    for alpha in (0.1, 0.5, 0.9):
        assert quantile_lower(d, alpha) == 3.0
        assert quantile_upper(d, alpha) == 3.0


def test_quantiles_uniform_two_points():
    d = DiscreteDistribution.from_atoms([1, 2], [0.5, 0.5])
    assert quantile_lower(d, 0.5) == 1.0
    assert quantile_upper(d, 0.5) == 2.0


def test_quantiles_uniform_four_points():
    assert quantile_lower(UNIF4, 0.6) == 3.0
    assert quantile_upper(UNIF4, 0.75) == 4.0


def test_quantile_rejects_bad_level():
    with pytest.raises(ValueError):
        quantile_lower(UNIF4, 0.0)
    with pytest.raises(ValueError):
        quantile_upper(UNIF4, 1.0)


def test_rho_flat_spectrum_is_mean():
    rng = np.random.default_rng(2)
    flat = expected_shortfall_spectrum(0.0)
    for _ in range(20):
        d = random_distribution(rng)
        assert abs(spectral_rho(d, flat) - d.mean()) <= 1e-12


def test_rho_expected_shortfall_hand_value():
    assert spectral_rho(UNIF4, expected_shortfall_spectrum(0.5)) == 3.5


def test_rho_point_mass_any_spectrum():
    rng = np.random.default_rng(4)
    d = DiscreteDistribution.point_mass(-1.75)
    for _ in range(10):
        assert abs(spectral_rho(d, random_spectrum(rng)) + 1.75) <= 1e-12


def test_comonotone_flat_spectrum():
    y = comonotone_density([0.3, -0.2, 1.0], [0.2, 0.3, 0.5], expected_shortfall_spectrum(0.0))
    assert np.allclose(y.weights, 1.0)


def test_comonotone_es_half_two_points():
    y = comonotone_density([1.0, 3.0], [0.5, 0.5], expected_shortfall_spectrum(0.5))
    assert y.weights == (0.0, 2.0)


def test_comonotone_ties_value_invariant():
    phi = expected_shortfall_spectrum(0.5)
    y = comonotone_density([2.0, 2.0], [0.5, 0.5], phi)
    # stable ranking: the earlier support point takes the lower segment
    assert y.weights == (0.0, 2.0)
    assert abs(dual_value([2.0, 2.0], [0.5, 0.5], phi) - 2.0) <= 1e-12


def test_dual_equals_rho_random():
    rng = np.random.default_rng(6)
    for _ in range(100):
        m = int(rng.integers(1, 15))
        pay = rng.normal(size=m)
        probs = rng.dirichlet(np.ones(m))
        phi = random_spectrum(rng)
        lhs = spectral_rho(DiscreteDistribution.from_atoms(pay, probs), phi)
        assert abs(lhs - dual_value(pay, probs, phi)) <= 1e-12


def test_transform_point_mass():
    d = DiscreteDistribution.point_mass(5.0)
    assert distributional_transform(d, 0, 0.3).u == 0.3


def test_transform_uniform_two_points():
    d = DiscreteDistribution.from_atoms([1, 2], [0.5, 0.5])
    t = distributional_transform(d, 1, 0.5)
    assert t.u == 0.75
    assert quantile_lower(d, t.u) == 2.0
    assert quantile_upper(d, t.u) == 2.0


def test_transform_recovers_atom():
    rng = np.random.default_rng(8)
    for _ in range(50):
        d = random_distribution(rng, max_atoms=6)
        i = int(rng.integers(len(d.values)))
        t = distributional_transform(d, i, float(rng.uniform(0.01, 0.99)))
        assert quantile_lower(d, t.u) == d.values[i]
        assert quantile_upper(d, t.u) == d.values[i]


def test_transform_uniformity_ks():
    rng = np.random.default_rng(10)
    d = DiscreteDistribution.from_atoms([0.0, 1.0, 5.0], [0.2, 0.5, 0.3])
    cum = np.array([0.0, 0.2, 0.7])
    widths = np.array([0.2, 0.5, 0.3])
    n = 100_000
    atoms = rng.choice(3, size=n, p=widths)
    us = cum[atoms] + rng.uniform(size=n) * widths[atoms]
    stat = stats.kstest(us, "uniform").statistic
    assert stat < 1.63 / np.sqrt(n)  # 1% critical value


def test_spectrum_from_density_flat():
    sp = spectrum_from_density(Density((1.0, 1.0)), [0.5, 0.5])
    assert sp.breakpoints == (0.0, 1.0)
    assert sp.values == (1.0,)


def test_spectrum_from_density_es_shape_and_law_invariance():
    sp1 = spectrum_from_density(Density((0.0, 2.0)), [0.5, 0.5])
    sp2 = spectrum_from_density(Density((2.0, 0.0)), [0.5, 0.5])
    assert sp1 == sp2
    assert sp1.breakpoints == (0.0, 0.5, 1.0)
    assert sp1.values == (0.0, 2.0)
    assert spectrum_violations(sp1) == []


def test_spectrum_from_density_integral_is_one():
    rng = np.random.default_rng(12)
    for _ in range(30):
        m = int(rng.integers(1, 8))
        probs = rng.dirichlet(np.ones(m))
        w = rng.uniform(0.05, 2.0, size=m)
        w /= np.dot(probs, w)
        sp = spectrum_from_density(Density(tuple(w)), probs)
        assert spectrum_violations(sp) == []


def test_rho_coherence_properties():
    rng = np.random.default_rng(14)
    for _ in range(40):
        m = int(rng.integers(2, 8))
        probs = rng.dirichlet(np.ones(m))
        phi = random_spectrum(rng, max_steps=5)
        x = rng.normal(size=m)
        y = rng.normal(size=m)
        c = float(rng.normal())
        lam = float(rng.uniform(0.1, 3.0))
        rho = lambda pay: spectral_rho(DiscreteDistribution.from_atoms(pay, probs), phi)
        # translation, positive homogeneity, subadditivity on a common space
        assert abs(rho(x + c) - (rho(x) + c)) <= 1e-12
        assert abs(rho(lam * x) - lam * rho(x)) <= 1e-11
        assert rho(x + y) <= rho(x) + rho(y) + 1e-12
        # monotonicity via pointwise domination on the common support
        assert rho(x) <= rho(x + np.abs(y)) + 1e-12
        # rho dominates the mean for every spectrum
        assert rho(x) >= float(np.dot(probs, x)) - 1e-12


def test_rho_monotone_under_usual_order():
    from robustmdp import usual_order_leq

    rng = np.random.default_rng(16)
    checked = 0
    while checked < 15:
        d1 = random_distribution(rng, max_atoms=5)
        shift = float(rng.uniform(0, 1))
        d2 = DiscreteDistribution.from_atoms(np.array(d1.values) + shift, d1.probs)
        assert usual_order_leq(d1, d2)
        phi = random_spectrum(rng, max_steps=4)
        assert spectral_rho(d1, phi) <= spectral_rho(d2, phi) + 1e-12
        checked += 1


def test_expansion_limit():
    with pytest.raises(SpectralExpansionError):
        expand_spectrum_to_generators(expected_shortfall_spectrum(0.5), [1 / 7.0] * 7)


def spectral_model(phi, n_stages=1):
    # two states, two actions, transitions spread over three outcomes
    rng = np.random.default_rng(40)
    states = [-1.0, 0.0, 1.0]
    stages = []
    for _ in range(n_stages):
        stages.append(
            {
                "actions": [0.0, 1.0],
                "transition": rng.uniform(-1, 1, size=(3, 2, 3)),
                "cost": rng.uniform(-1, 1, size=(3, 2, 3)),
                "support": [0.0, 0.5, 1.0],
                "probs": [0.3, 0.4, 0.3],
                "ambiguity": AmbiguitySet.from_spectrum(phi),
            }
        )
    return make_model(states, stages, rng.uniform(-1, 1, size=3))


def test_solve_risk_form_flat_spectrum_is_classical():
    from helpers import standalone_backward_induction

    model = spectral_model(expected_shortfall_spectrum(0.0), n_stages=2)
    result = solve_risk_form(model)
    flat = Density((1.0, 1.0, 1.0))
    classical = standalone_backward_induction(model, [flat, flat])
    assert np.max(np.abs(result.values - classical)) <= 1e-12


def test_solve_risk_form_matches_spectral_solve_robust():
    model = spectral_model(expected_shortfall_spectrum(0.4), n_stages=2)
    a = solve_risk_form(model)
    b = solve_robust(model)
    assert np.max(np.abs(a.values - b.values)) <= 1e-12
    assert a.controller == b.controller


def test_solve_risk_form_equals_expanded_generator_solve():
    phi = expected_shortfall_spectrum(0.3)
    model = spectral_model(phi)
    spectral = solve_risk_form(model)
    gens = expand_spectrum_to_generators(phi, model.stages[0].disturbance.ref_probs)
    swapped = make_model(
        model.states.points,
        [
            {
                "actions": model.stages[0].actions.points,
                "transition": model.stages[0].dynamics.transition,
                "cost": model.stages[0].dynamics.cost,
                "support": model.stages[0].disturbance.support,
                "probs": model.stages[0].disturbance.ref_probs,
                "ambiguity": AmbiguitySet(generators=tuple(gens)),
            }
        ],
        model.terminal_cost,
    )
    expanded = solve_robust(swapped)
    assert np.max(np.abs(spectral.values - expanded.values)) <= 1e-12


def test_solve_risk_form_rejects_generator_stage():
    model = make_model(
        [0.0, 1.0],
        [
            {
                "actions": [0.0],
                "transition": np.zeros((2, 1, 2)),
                "cost": np.zeros((2, 1, 2)),
                "support": [0.0, 1.0],
                "probs": [0.5, 0.5],
                "ambiguity": AmbiguitySet.singleton(2),
            }
        ],
        [0.0, 0.0],
    )
    with pytest.raises(ValueError):
        solve_risk_form(model)
