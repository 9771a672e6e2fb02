"""JSON instance schema: parsing, builtin dynamics families, digests.

An instance document carries the horizon, the state grid, one block per
stage (actions, admissibility, disturbance, ambiguity, transition, cost,
optional generator mask) and the terminal cost. Transitions and costs may
be dense tables (state x action x support) or named builtin families with
parameters. Structural problems raise SchemaError; semantic ones are left
for model validation.
"""

import hashlib
import json

import numpy as np

from .ambiguity import AmbiguitySet
from .apps import binomial_mixture_probs, density_from_law, discretized_beta_probs
from .bounds import BoundingData
from .model import (
    ActionSet,
    ConvexFlags,
    FiniteDisturbance,
    FiniteRobustMDP,
    MonotoneFlags,
    Stage,
    StageDynamics,
    StateGrid,
)
from .risk import Spectrum, expected_shortfall_spectrum


class SchemaError(ValueError):
    """Input document does not match the instance schema."""


def digest_bytes(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def canonical_json(obj) -> str:
    """Deterministic serialization: sorted keys, no whitespace drift."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _require(doc, key, where):
    if key not in doc:
        raise SchemaError(f"missing key {key!r} in {where}")
    return doc[key]


def _as_number_list(obj, where):
    if not isinstance(obj, list) or not all(isinstance(v, (int, float)) for v in obj):
        raise SchemaError(f"{where} must be a list of numbers")
    return [float(v) for v in obj]


def load_instance(doc: dict) -> FiniteRobustMDP:
    if not isinstance(doc, dict):
        raise SchemaError("instance document must be a JSON object")
    horizon = _require(doc, "horizon", "instance")
    if not isinstance(horizon, int):
        raise SchemaError("horizon must be an integer")
    states = tuple(_as_number_list(_require(doc, "states", "instance"), "states"))
    stage_docs = _require(doc, "stages", "instance")
    if not isinstance(stage_docs, list):
        raise SchemaError("stages must be a list")
    stages = tuple(
        _load_stage(sd, states, f"stages[{i}]") for i, sd in enumerate(stage_docs)
    )
    terminal = tuple(_as_number_list(_require(doc, "terminal_cost", "instance"), "terminal_cost"))
    return FiniteRobustMDP(
        horizon=horizon, states=StateGrid(points=states), stages=stages, terminal_cost=terminal
    )


def _load_stage(doc, states, where) -> Stage:
    if not isinstance(doc, dict):
        raise SchemaError(f"{where} must be an object")
    actions = tuple(_as_number_list(_require(doc, "actions", where), f"{where}.actions"))
    dist_doc = _require(doc, "disturbance", where)
    support_raw = _require(dist_doc, "support", f"{where}.disturbance")
    support = tuple(tuple(z) if isinstance(z, list) else float(z) for z in support_raw)
    probs = tuple(_as_number_list(_require(dist_doc, "probs", f"{where}.disturbance"), "probs"))
    disturbance = FiniteDisturbance(support=support, ref_probs=probs)

    if "admissible" in doc and doc["admissible"] is not None:
        admissible = tuple(tuple(int(a) for a in row) for row in doc["admissible"])
    else:
        admissible = tuple(tuple(range(len(actions))) for _ in states)

    ambiguity = _load_ambiguity(_require(doc, "ambiguity", where), f"{where}.ambiguity")
    transition = _load_map(
        _require(doc, "transition", where), states, actions, support, f"{where}.transition", kind="transition"
    )
    cost = _load_map(
        _require(doc, "cost", where), states, actions, support, f"{where}.cost", kind="cost"
    )
    mask = None
    if doc.get("mask") is not None:
        mask = tuple(
            tuple(tuple(int(g) for g in entry) for entry in row) for row in doc["mask"]
        )
    return Stage(
        actions=ActionSet(points=actions),
        admissible=admissible,
        dynamics=StageDynamics(
            transition=transition,
            cost=cost,
            monotone=MonotoneFlags(**doc["monotone"]) if doc.get("monotone") else None,
            convex=ConvexFlags(**doc["convex"]) if doc.get("convex") else None,
        ),
        disturbance=disturbance,
        ambiguity=ambiguity,
        generator_mask=mask,
    )


def _load_ambiguity(doc, where) -> AmbiguitySet:
    if not isinstance(doc, dict):
        raise SchemaError(f"{where} must be an object")
    kind = _require(doc, "type", where)
    q = doc.get("q")
    if q == "inf":
        q = float("inf")
    norm_bound = doc.get("norm_bound")
    if kind == "generators":
        densities = _require(doc, "densities", where)
        if not isinstance(densities, list) or not densities:
            raise SchemaError(f"{where}.densities must be a non-empty list")
        return AmbiguitySet.from_generators(densities, q=q, norm_bound=norm_bound)
    if kind == "spectral":
        return AmbiguitySet.from_spectrum(
            _load_spectrum(_require(doc, "spectrum", where), where), q=q, norm_bound=norm_bound
        )
    raise SchemaError(f"{where}.type must be 'generators' or 'spectral'")


def _load_spectrum(doc, where) -> Spectrum:
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}.spectrum must be an object")
    if "es" in doc:
        return expected_shortfall_spectrum(float(doc["es"]))
    bp = _as_number_list(_require(doc, "breakpoints", where), f"{where}.breakpoints")
    vals = _as_number_list(_require(doc, "values", where), f"{where}.values")
    return Spectrum(breakpoints=tuple(bp), values=tuple(vals))


def _load_map(doc, states, actions, support, where, kind):
    if isinstance(doc, list):
        arr = np.asarray(doc, dtype=float)
        expect = (len(states), len(actions), len(support))
        if arr.shape != expect:
            raise SchemaError(f"{where} table has shape {arr.shape}, expected {expect}")
        return arr
    if isinstance(doc, dict) and "name" in doc:
        return _builtin_map(doc["name"], doc.get("params", {}), states, actions, support, where, kind)
    raise SchemaError(f"{where} must be a dense table or a named builtin")


def _builtin_map(name, params, states, actions, support, where, kind):
    if name == "lq":
        if kind == "transition":
            return lambda x, a, z: z[0] * x + z[1] * a + z[2]
        q, r = float(params.get("q", 0.0)), float(params.get("r", 0.0))
        return lambda x, a, nxt: q * x**2 + r * a**2
    if name == "counterexample":
        if kind == "transition":
            return lambda x, a, z: -((a - z) ** 2)
        return lambda x, a, nxt: nxt
    if name == "energy":
        if kind == "transition":
            cap = float(_require(params, "capacity", where))
            return lambda x, a, z: np.clip(x + z - a, 0.0, cap)
        price = float(_require(params, "price", where))
        penalty = float(_require(params, "penalty", where))
        xs = np.asarray(states)[:, None, None]
        avs = np.asarray(actions)[None, :, None]
        zs = np.asarray(support, dtype=float)[None, None, :]
        return -avs * price + (price + penalty) * np.maximum(avs - xs - zs, 0.0)
    raise SchemaError(f"{where}: unknown builtin {name!r}")


def load_bounding(doc: dict, model: FiniteRobustMDP) -> BoundingData:
    q = doc.get("q", 2)
    if q == "inf":
        q = float("inf")
    return BoundingData(
        lower=tuple(_as_number_list(_require(doc, "lower", "bounding"), "bounding.lower")),
        upper=tuple(_as_number_list(_require(doc, "upper", "bounding"), "bounding.upper")),
        alpha=float(_require(doc, "alpha", "bounding")),
        norm_bound=float(_require(doc, "norm_bound", "bounding")),
        q=float(q),
        eps_lower=float(doc.get("eps_lower", 0.5)),
        eps_upper=float(doc.get("eps_upper", 0.5)),
    )


def load_policies(doc: dict):
    """Optional (controller, nature) policy tables from an instance document."""
    controller = None
    nature = None
    if "policies" in doc:
        block = doc["policies"]
        if "controller" in block:
            controller = tuple(tuple(int(a) for a in row) for row in block["controller"])
        if "nature" in block:
            nature = tuple(
                tuple(
                    tuple(e if isinstance(e, str) or e is None else int(e) for e in entry)
                    for entry in row
                )
                for row in block["nature"]
            )
    return controller, nature


def load_lq_params(doc: dict):
    from .apps import BoxResolution, LQParams, ParameterBox

    horizon = int(_require(doc, "horizon", "lq"))
    boxes_doc = _require(doc, "boxes", "lq")
    if isinstance(boxes_doc, dict):
        boxes_doc = [boxes_doc] * horizon
    if len(boxes_doc) != horizon:
        raise SchemaError("lq.boxes must give one box per stage")

    def box(b):
        return ParameterBox(
            mu_u=tuple(_require(b, "mu_u", "box")),
            sigma_u=tuple(_require(b, "sigma_u", "box")),
            mu_v=tuple(_require(b, "mu_v", "box")),
            sigma_v=tuple(_require(b, "sigma_v", "box")),
            sigma_uv=tuple(_require(b, "sigma_uv", "box")),
            w2=tuple(_require(b, "w2", "box")),
        )

    resolution = BoxResolution(**doc.get("resolution", {}))
    return LQParams(
        horizon=horizon,
        q_weights=tuple(_as_number_list(_require(doc, "q_weights", "lq"), "q_weights")),
        r_weights=tuple(_as_number_list(_require(doc, "r_weights", "lq"), "r_weights")),
        boxes=tuple(box(b) for b in boxes_doc),
        resolution=resolution,
        trust_bracket_monotonicity=bool(doc.get("trust_bracket_monotonicity", False)),
    )


def load_energy_params(doc: dict):
    from .apps import EnergyParams

    wind = _require(doc, "wind", "energy")
    support = tuple(_as_number_list(_require(wind, "support", "energy.wind"), "support"))
    probs = tuple(_as_number_list(_require(wind, "probs", "energy.wind"), "probs"))
    gens_doc = _require(wind, "generators", "energy.wind")
    wind_max = float(_require(doc, "wind_max", "energy"))
    if isinstance(gens_doc, dict):
        family = _require(gens_doc, "family", "energy.wind.generators")
        members = _require(gens_doc, "members", "energy.wind.generators")
        gens = []
        for member in members:
            if family == "beta":
                law = discretized_beta_probs(support, wind_max, *member)
            elif family == "binomial_mixture":
                law = binomial_mixture_probs(len(support), [tuple(m) for m in member])
            else:
                raise SchemaError(f"unknown wind family {family!r}")
            gens.append(density_from_law(law, probs).weights)
        gens = tuple(tuple(g) for g in gens)
    else:
        gens = tuple(tuple(float(w) for w in g) for g in gens_doc)
    return EnergyParams(
        horizon=int(_require(doc, "horizon", "energy")),
        capacity=float(_require(doc, "capacity", "energy")),
        wind_max=wind_max,
        price=float(_require(doc, "price", "energy")),
        penalty=float(_require(doc, "penalty", "energy")),
        state_points=int(_require(doc, "state_points", "energy")),
        action_points=int(_require(doc, "action_points", "energy")),
        wind_support=support,
        wind_ref_probs=probs,
        wind_generators=gens,
    )
