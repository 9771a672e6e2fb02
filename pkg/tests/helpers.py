"""Shared instance builders for the test suite.

Everything is seeded through a numpy Generator so tests are reproducible;
the builders construct plain dense-table instances so the expectations the
tests assert are computable by hand or by the standalone oracles below.
"""

import numpy as np

from robustmdp import (
    ActionSet,
    AmbiguitySet,
    BoundingData,
    ConvexFlags,
    FiniteDisturbance,
    FiniteRobustMDP,
    Stage,
    StageDynamics,
    StateGrid,
)


def make_model(states, stages_spec, terminal):
    """Assemble an instance from per-stage dicts of plain tables."""
    stages = []
    for spec in stages_spec:
        actions = spec["actions"]
        S = len(states)
        admissible = spec.get("admissible") or tuple(tuple(range(len(actions))) for _ in range(S))
        stages.append(
            Stage(
                actions=ActionSet(points=tuple(float(a) for a in actions)),
                admissible=tuple(tuple(row) for row in admissible),
                dynamics=StageDynamics(
                    transition=np.asarray(spec["transition"], dtype=float),
                    cost=np.asarray(spec["cost"], dtype=float),
                    monotone=spec.get("monotone"),
                    convex=spec.get("convex"),
                ),
                disturbance=FiniteDisturbance(
                    support=tuple(float(z) for z in spec["support"]),
                    ref_probs=tuple(float(p) for p in spec["probs"]),
                ),
                ambiguity=spec["ambiguity"],
                generator_mask=spec.get("mask"),
            )
        )
    return FiniteRobustMDP(
        horizon=len(stages),
        states=StateGrid(points=tuple(float(x) for x in states)),
        stages=tuple(stages),
        terminal_cost=tuple(float(c) for c in terminal),
    )


def random_densities(rng, probs, count):
    """Random valid generator weight lists over the given reference probs."""
    out = []
    for _ in range(count):
        raw = rng.uniform(0.05, 2.0, size=len(probs))
        raw /= np.dot(probs, raw)
        out.append(tuple(float(w) for w in raw))
    return out


def random_instance(
    rng,
    s_max=4,
    a_max=3,
    m_max=3,
    g_max=3,
    n_max=3,
    pair_budget=20000,
    cost_scale=1.0,
):
    """Generic random instance with generator ambiguity, kept small enough
    for the enumeration oracle."""
    from robustmdp.solver import count_policy_pairs

    while True:
        N = int(rng.integers(1, n_max + 1))
        S = int(rng.integers(1, s_max + 1))
        states = np.sort(rng.choice(np.linspace(-1.0, 1.0, 41), size=S, replace=False))
        stages = []
        for _ in range(N):
            M = int(rng.integers(1, a_max + 1))
            m = int(rng.integers(1, m_max + 1))
            G = int(rng.integers(1, g_max + 1))
            probs = rng.dirichlet(np.ones(m))
            admissible = []
            for _ in range(S):
                adm = [a for a in range(M) if rng.random() < 0.7]
                if not adm:
                    adm = [int(rng.integers(M))]
                admissible.append(tuple(sorted(adm)))
            stages.append(
                {
                    "actions": np.sort(rng.choice(np.linspace(-1.0, 1.0, 41), size=M, replace=False)),
                    "admissible": tuple(admissible),
                    "transition": rng.uniform(-1.3, 1.3, size=(S, M, m)),
                    "cost": rng.uniform(-cost_scale, cost_scale, size=(S, M, m)),
                    "support": np.sort(rng.choice(np.linspace(0.0, 1.0, 41), size=m, replace=False)),
                    "probs": probs,
                    "ambiguity": AmbiguitySet.from_generators(random_densities(rng, probs, G)),
                }
            )
        model = make_model(states, stages, rng.uniform(-cost_scale, cost_scale, size=S))
        if count_policy_pairs(model) <= pair_budget:
            return model


def mlr_chain_densities(rng, probs, count, direction="max"):
    """Tilt family ordered by the usual stochastic order.

    Weights 1 + lambda * t with t increasing (direction "max": the largest
    lambda dominates) or decreasing (direction "min": it is dominated).
    """
    m = len(probs)
    t = np.arange(m, dtype=float) - (m - 1) / 2.0
    if direction == "min":
        t = -t
    if np.max(np.abs(t)) > 0:
        t = t / np.max(np.abs(t)) * 0.8
    lams = np.sort(rng.uniform(0.1, 1.0, size=count))
    out = []
    for lam in lams:
        raw = 1.0 + lam * t
        raw /= np.dot(probs, raw)
        out.append(tuple(float(w) for w in raw))
    return out


def random_monotone_instance(rng, s_max=4, a_max=3, m_max=3, g_max=3, n_max=3):
    """Monotone model with transitions increasing in state and disturbance,
    costs increasing in (state, next state), and an st-maximal generator."""
    N = int(rng.integers(1, n_max + 1))
    S = int(rng.integers(2, s_max + 1))
    states = np.sort(rng.choice(np.linspace(-1.0, 1.0, 41), size=S, replace=False))
    stages = []
    for _ in range(N):
        M = int(rng.integers(1, a_max + 1))
        m = int(rng.integers(2, m_max + 1))
        G = int(rng.integers(2, g_max + 1))
        support = np.sort(rng.choice(np.linspace(0.0, 1.0, 41), size=m, replace=False))
        probs = rng.dirichlet(np.ones(m))
        shift = rng.uniform(-0.5, 0.5, size=M)
        raw = 0.4 * states[:, None, None] + shift[None, :, None] + support[None, None, :]
        c_state = rng.uniform(0.0, 1.0)
        c_next = rng.uniform(0.0, 1.0)
        act_cost = rng.uniform(-0.3, 0.3, size=M)
        cost = c_state * states[:, None, None] + c_next * raw + act_cost[None, :, None]
        stages.append(
            {
                "actions": np.sort(rng.uniform(-1, 1, size=M) + np.arange(M) * 2),
                "transition": raw,
                "cost": cost,
                "support": support,
                "probs": probs,
                "ambiguity": AmbiguitySet.from_generators(
                    mlr_chain_densities(rng, probs, G, direction="max")
                ),
            }
        )
    terminal = np.sort(rng.uniform(-1.0, 1.0, size=S))
    return make_model(states, stages, terminal)


def random_bounded_instance(rng, alpha=1.5, **kwargs):
    """Random instance with costs in [-1, 1] plus a consistent bounding pack."""
    model = random_instance(rng, cost_scale=1.0, **kwargs)
    level = 1.0
    biggest = max(
        max(max(g.weights) for g in st.ambiguity.generators) for st in model.stages
    )
    data = BoundingData(
        lower=tuple(-level for _ in model.states.points),
        upper=tuple(level for _ in model.states.points),
        alpha=alpha,
        norm_bound=max(1.0, float(biggest)),
        q=float("inf"),
        eps_lower=0.5,
        eps_upper=0.5,
    )
    return model, data


def lq_style_gap_instance(rng, resolution):
    """Convex-flagged lattice instance for the interchange-gap criterion.

    One quadratic-control stage structure per stage: transitions -a + w on
    a common lattice of step `resolution` (state-independent, so no
    clamping and exact projection), quadratic costs, and a two-point wind
    {0, W} with W an even lattice multiple. The two base densities put
    masses q_lo < q_hi on W chosen to straddle the worst-case mass, which
    makes the payoff parabolas cross at W/2 -- an action grid point -- so
    the controller's side of the finite game is exact and the whole gap is
    nature's mixture-grid quantization, shrinking quadratically with the
    resolution. Nature's set is the mixture grid of the same step between
    the base densities.
    """
    h = resolution
    n_act = int(round(1.0 / h)) + 1
    actions = np.arange(n_act) * h
    N = int(rng.integers(1, 3))
    k_lattice = int(round(1.0 / h))
    states = np.arange(-k_lattice, k_lattice + 1) * h
    lams = np.arange(n_act) * h
    # terminal curvature acts as the innermost stage's continuation weight
    q_next = rng.uniform(0.8, 1.0)
    terminal = q_next * states**2
    stages = []
    for _ in range(N):
        # W is an odd multiple of 0.01, so the worst-case kink at W/2 sits
        # exactly mid-cell on the 0.01 action grid (the gap there is the
        # kink slope times half a step) and on-grid once the step halves;
        # the draw must not depend on h (both resolutions share structure)
        W = 0.01 * (2 * int(rng.integers(5, 11)) + 1)
        probs = np.array([rng.uniform(0.3, 0.7), 0.0])
        probs[1] = 1.0 - probs[0]
        rho = rng.uniform(0.2, 0.4)
        # masses straddle the worst-case mass (1+rho)/2, the lower one
        # narrowly: the smaller kink slope, hence the per-stage gap, stays
        # near 2 * W * delta * h/2
        q_lo = (1.0 + rho) / 2.0 - rng.uniform(0.05, 0.1)
        q_hi = rng.uniform(0.8, 0.95)
        base = [
            np.array([(1.0 - q) / probs[0], q / probs[1]]) for q in (q_lo, q_hi)
        ]
        mixtures = [tuple(lam * base[1] + (1 - lam) * base[0]) for lam in lams]
        support = np.array([0.0, W])
        raw = np.broadcast_to(
            -actions[None, :, None] + support[None, None, :],
            (states.size, actions.size, 2),
        ).copy()
        q_here = rng.uniform(0.8, 1.0)
        r = rho * q_next
        cost = q_here * states[:, None, None] ** 2 + r * actions[None, :, None] ** 2
        cost = np.broadcast_to(cost, raw.shape).copy()
        stages.insert(
            0,
            {
                "actions": actions,
                "transition": raw,
                "cost": cost,
                "support": support,
                "probs": probs,
                "ambiguity": AmbiguitySet.from_generators(mixtures),
                "convex": ConvexFlags(),
            },
        )
        q_next = q_here
    return make_model(states, stages, terminal)


def lq_saddle_params(rng, n_max=3):
    """Random quadratic-control parameter boxes on which the stage minimax
    provably has a saddle point.

    The control-noise mean is a fixed nonzero value and the covariance is
    pinned to zero, so nature's cross moment is an interval through the
    bracket optimum; control weights are sized so the cross-term ratio
    stays below one half, which makes nature's best reply at the optimal
    action equal to the bracket argmax. General boxes can fail the
    interchange outright (the moment set need not be concave-like).
    """
    from robustmdp.apps import BoxResolution, LQParams, ParameterBox

    N = int(rng.integers(1, n_max + 1))
    boxes = []
    for _ in range(N):
        mu_u_lo = rng.uniform(0.3, 0.8)
        vbar = rng.uniform(0.2, 0.4) * rng.choice([-1.0, 1.0])
        boxes.append(
            ParameterBox(
                mu_u=(mu_u_lo, mu_u_lo + rng.uniform(0.1, 0.4)),
                sigma_u=(0.0, rng.uniform(0.1, 0.5)),
                mu_v=(vbar, vbar),
                sigma_v=(0.0, rng.uniform(0.1, 0.5)),
                sigma_uv=(0.0, 0.0),
                w2=(0.0, rng.uniform(0, 0.5)),
            )
        )
    return LQParams(
        horizon=N,
        q_weights=tuple(rng.uniform(0.2, 1.0, N + 1)),
        r_weights=tuple(rng.uniform(1.0, 2.0, N)),
        boxes=tuple(boxes),
        resolution=BoxResolution(3, 3, 1, 3, 1, 2),
    )


def standalone_backward_induction(model, stage_densities):
    """Classical dynamic program under fixed per-stage densities.

    Written against raw tables with its own nearest-point projection so it
    shares nothing with the solver implementation.
    """
    pts = list(model.states.points)

    def project(x):
        best, best_d = 0, abs(x - pts[0])
        for i, p in enumerate(pts):
            d = abs(x - p)
            if d < best_d:
                best, best_d = i, d
        return best

    N, S = model.horizon, len(pts)
    J = [list(model.terminal_cost)]
    for n in range(N - 1, -1, -1):
        stage = model.stages[n]
        y = stage_densities[n]
        row = []
        for s in range(S):
            best = None
            for a in stage.admissible[s]:
                total = 0.0
                for i, z in enumerate(stage.disturbance.support):
                    tr = stage.dynamics.transition
                    nxt = tr[s, a, i] if isinstance(tr, np.ndarray) else tr(pts[s], stage.actions.points[a], z)
                    cost = stage.dynamics.cost
                    j = project(nxt)
                    c = cost[s, a, i] if isinstance(cost, np.ndarray) else cost(pts[s], stage.actions.points[a], pts[j])
                    total += stage.disturbance.ref_probs[i] * y.weights[i] * (c + J[0][j])
                if best is None or total < best:
                    best = total
            row.append(best)
        J.insert(0, row)
    return np.array(J)


def random_policy_pair(rng, model):
    """A random admissible controller and a random nature index table."""
    controller, nature = [], []
    for n in range(model.horizon):
        stage = model.stages[n]
        c_row, n_row = [], []
        for s in range(len(model.states)):
            c_row.append(int(rng.choice(stage.admissible[s])))
            entries = []
            for a in range(len(stage.actions.points)):
                if a in stage.admissible[s]:
                    pool = (
                        stage.generator_mask[s][a]
                        if stage.generator_mask is not None
                        else range(len(stage.ambiguity.generators))
                    )
                    entries.append(int(rng.choice(list(pool))))
                else:
                    entries.append(None)
            n_row.append(tuple(entries))
        controller.append(tuple(c_row))
        nature.append(tuple(n_row))
    return tuple(controller), tuple(nature)
