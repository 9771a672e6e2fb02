import numpy as np
import pytest

from helpers import make_model, random_instance
from robustmdp import (
    AmbiguitySet,
    Density,
    FiniteRobustMDP,
    StateGrid,
    induced_distribution,
    project_to_grid,
    solve_robust,
    validate,
)
from robustmdp.solver import ModelValidationError


def tiny_model(probs=(0.5, 0.5), admissible=None):
    return make_model(
        states=[0.0, 1.0],
        stages_spec=[
            {
                "actions": [0.0, 1.0],
                "admissible": admissible,
                "transition": np.zeros((2, 2, 2)),
                "cost": np.zeros((2, 2, 2)),
                "support": [0.0, 1.0],
                "probs": probs,
                "ambiguity": AmbiguitySet.singleton(2),
            }
        ],
        terminal=[0.0, 0.0],
    )


def test_validate_well_formed():
    assert validate(tiny_model()) == []


def test_validate_empty_admissible_names_location():
    bad = tiny_model(admissible=((), (0, 1)))
    violations = validate(bad)
    assert len(violations) == 1
    assert violations[0].stage == 0 and violations[0].state == 0
    assert violations[0].code == "admissible"


def test_validate_bad_probs():
    bad = tiny_model(probs=(0.5, 0.4))
    violations = validate(bad)
    assert any(v.code == "disturbance" and v.stage == 0 for v in violations)


def test_validate_gates_solver():
    bad = tiny_model(probs=(0.5, 0.4))
    with pytest.raises(ModelValidationError):
        solve_robust(bad)


def test_project_exact_tie_clamp():
    grid = StateGrid(points=(0.0, 1.0, 2.0))
    assert project_to_grid(grid, 1.0) == 1
    assert project_to_grid(grid, 0.5) == 0  # tie to the lower index
    assert project_to_grid(grid, 7.3) == 2
    assert project_to_grid(grid, -3.0) == 0


def test_project_idempotent_on_grid_points():
    rng = np.random.default_rng(7)
    for _ in range(50):
        pts = np.sort(rng.choice(np.linspace(-5, 5, 201), size=6, replace=False))
        grid = StateGrid(points=tuple(pts))
        for i, x in enumerate(pts):
            assert project_to_grid(grid, x) == i


def identity_transition_model(density_weights, support=(0.0, 1.0), probs=(0.5, 0.5)):
    m = len(support)
    raw = np.broadcast_to(np.asarray(support, float), (2, 1, m)).copy()
    return make_model(
        states=[0.0, 1.0],
        stages_spec=[
            {
                "actions": [0.0],
                "transition": raw,
                "cost": np.zeros((2, 1, m)),
                "support": support,
                "probs": probs,
                "ambiguity": AmbiguitySet.from_generators([density_weights]),
            }
        ],
        terminal=[0.0, 0.0],
    )


def test_induced_identity():
    model = identity_transition_model((1.0, 1.0))
    dist = induced_distribution(model, 0, 0, 0, Density((1.0, 1.0)))
    assert dist.values == (0.0, 1.0)
    assert dist.probs == (0.5, 0.5)


def test_induced_constant_transition_merges():
    model = make_model(
        states=[0.0, 1.0],
        stages_spec=[
            {
                "actions": [0.0],
                "transition": np.zeros((2, 1, 2)),
                "cost": np.zeros((2, 1, 2)),
                "support": [0.0, 1.0],
                "probs": [0.5, 0.5],
                "ambiguity": AmbiguitySet.singleton(2),
            }
        ],
        terminal=[0.0, 0.0],
    )
    dist = induced_distribution(model, 0, 0, 0, Density((1.0, 1.0)))
    assert dist.values == (0.0,)
    assert dist.probs == (1.0,)


def test_induced_hand_case_zero_weight_dropped():
    # T(x,a,z) = x + z - a at x=1, a=1, support {0,2}: outcomes {0, 2};
    # density (2, 0) kills the second branch, leaving a point mass at 0
    states = [0.0, 1.0, 2.0]
    raw = np.zeros((3, 1, 2))
    for s, x in enumerate(states):
        raw[s, 0] = [x + 0.0 - 1.0, x + 2.0 - 1.0]
    model = make_model(
        states=states,
        stages_spec=[
            {
                "actions": [1.0],
                "transition": raw,
                "cost": np.zeros((3, 1, 2)),
                "support": [0.0, 2.0],
                "probs": [0.5, 0.5],
                "ambiguity": AmbiguitySet.from_generators([(2.0, 0.0)]),
            }
        ],
        terminal=[0.0, 0.0, 0.0],
    )
    dist = induced_distribution(model, 0, 1, 0, Density((2.0, 0.0)))
    assert dist.values == (0.0,)
    assert dist.probs == (1.0,)


def test_induced_rejects_inadmissible():
    model = tiny_model(admissible=((0,), (0, 1)))
    with pytest.raises(ValueError):
        induced_distribution(model, 0, 0, 1, Density((1.0, 1.0)))


def test_induced_probabilities_normalized_randomly():
    rng = np.random.default_rng(11)
    for _ in range(30):
        model = random_instance(rng)
        n = int(rng.integers(model.horizon))
        stage = model.stages[n]
        s = int(rng.integers(len(model.states)))
        a = int(rng.choice(stage.admissible[s]))
        g = stage.ambiguity.generators[int(rng.integers(len(stage.ambiguity.generators)))]
        dist = induced_distribution(model, n, s, a, g)
        assert abs(sum(dist.probs) - 1.0) <= 1e-12
        assert all(p > 0 for p in dist.probs)
