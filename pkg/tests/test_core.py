"""Domain-type construction rules and hand-computed utility values."""

import math

import numpy as np
import pytest

from replab.core import (
    AS,
    AbsPower,
    Agent,
    Colluder,
    DimensionMismatch,
    Environment,
    ExtendedAS,
    Image,
    Linear,
    MaliciousRandom,
    MessageProfile,
    Mixed,
    Outcome,
    PR,
    Power,
    Quality,
    Truth,
    UtilitySpec,
    WeightedPR,
    ZeroTotalQuality,
    batch_true_utilities,
    centralized_solution,
    true_utility,
)
from replab.numerics import NormalParams


def _agent(i, r, kind, lam=None, p=2.0, g=None, obs=NormalParams(0.0, 0.1)):
    if lam is None:
        lam = {Truth: 1.0, Image: 0.0}.get(type(kind), 0.5)
    return Agent(
        id=i,
        quality=Quality(r),
        agent_type=kind,
        utility=UtilitySpec(f=AbsPower(p), g=g or Linear(), truth_weight=lam),
        cross_obs=obs,
    )


def _env(qualities, scheme="absolute", kinds=None, **kwargs):
    kinds = kinds or [Truth()] * len(qualities)
    agents = tuple(_agent(i, r, k) for i, (r, k) in enumerate(zip(qualities, kinds)))
    return Environment(agents=agents, index_scheme=scheme, **kwargs)


# ---------------------------------------------------------------------------
# Construction rules
# ---------------------------------------------------------------------------


def test_quality_bounds():
    assert float(Quality(0.0)) == 0.0
    assert float(Quality(1.0)) == 1.0
    for bad in (-0.01, 1.01, math.nan):
        with pytest.raises(ValueError):
            Quality(bad)


def test_utility_spec_validation():
    with pytest.raises(ValueError):
        AbsPower(0.5)
    with pytest.raises(ValueError):
        Power(0.0)
    with pytest.raises(ValueError):
        Power(1.5)
    with pytest.raises(ValueError):
        UtilitySpec(truth_weight=1.2)


def test_agent_type_weight_consistency():
    _agent(0, 0.5, Truth(), lam=1.0)
    _agent(0, 0.5, Image(), lam=0.0)
    _agent(0, 0.5, Mixed(), lam=0.3)
    with pytest.raises(ValueError):
        _agent(0, 0.5, Truth(), lam=0.9)
    with pytest.raises(ValueError):
        _agent(0, 0.5, Image(), lam=0.1)
    for lam in (0.0, 1.0):
        with pytest.raises(ValueError):
            _agent(0, 0.5, Mixed(), lam=lam)
    # behavioral types carry no weight constraint
    _agent(0, 0.5, MaliciousRandom(), lam=0.7)
    _agent(0, 0.5, Colluder(clique_id=1), lam=0.0)


def test_environment_validation():
    with pytest.raises(ValueError):
        _env([0.5])
    agents = (_agent(1, 0.2, Truth()), _agent(0, 0.4, Truth()))
    with pytest.raises(ValueError):
        Environment(agents=agents)
    with pytest.raises(ValueError):
        Environment(agents=(_agent(0, 0.2, Truth()), _agent(1, 0.4, Truth())), index_scheme="ranked")
    with pytest.raises(ZeroTotalQuality):
        _env([0.0, 0.0], scheme="relative")


def test_mechanism_spec_validation():
    AS()
    PR(a=2.25)
    with pytest.raises(ValueError):
        PR(a=0.0)
    with pytest.raises(ValueError):
        WeightedPR(a=1.0, weights=(0.5, -0.1))
    with pytest.raises(ValueError):
        ExtendedAS(layers=3)
    with pytest.raises(ValueError):
        ExtendedAS(ring=(0, 2, 2))
    with pytest.raises(ValueError):
        ExtendedAS(ring=(0, 1, 2), layers=1, second_ring=(2, 1, 0))
    ExtendedAS(ring=(2, 0, 1), layers=2, second_ring=(1, 2, 0))


def test_message_profile_shapes():
    MessageProfile(self_reports=[0.1, 0.2])
    with pytest.raises(DimensionMismatch):
        MessageProfile(self_reports=[0.1])
    with pytest.raises(DimensionMismatch):
        MessageProfile(self_reports=[0.1, 0.2], cross_reports=np.zeros((3, 3)))
    prof = MessageProfile(self_reports=[0.1, 1.2])
    with pytest.raises(ValueError):
        prof.validate_unit_range()
    MessageProfile(self_reports=[0.1, 0.9], cross_reports=np.full((2, 2), 0.5)).validate_unit_range()


def test_outcome_shapes_and_budget():
    with pytest.raises(DimensionMismatch):
        Outcome(reputations=[0.1, 0.2], taxes=[0.0])
    out = Outcome(reputations=[0.1, 0.2, 0.3], taxes=[0.25, -0.15, -0.1])
    assert out.budget == pytest.approx(0.0, abs=1e-15)


# ---------------------------------------------------------------------------
# Image payoff edge behavior
# ---------------------------------------------------------------------------


def test_linear_g_exact_on_reals():
    g = Linear()
    assert g(-0.2) == -0.2
    assert g.derivative(0.9) == 1.0


def test_power_g_truncates_negatives():
    g = Power(0.5)
    assert g(0.25) == pytest.approx(0.5)
    assert g(-0.3) == 0.0
    arr = g(np.array([-1.0, 0.0, 0.04]))
    assert arr == pytest.approx([0.0, 0.0, 0.2])
    assert g.derivative(0.25) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Targets and utilities (hand-computed vectors)
# ---------------------------------------------------------------------------


def test_centralized_solution_schemes():
    env = _env([0.2, 0.5, 0.9])
    assert centralized_solution(env) == pytest.approx([0.2, 0.5, 0.9])
    env = _env([0.2, 0.5, 0.9], scheme="relative")
    assert centralized_solution(env) == pytest.approx([0.125, 0.3125, 0.5625])


def test_true_utility_hand_computed():
    agents = (
        _agent(0, 0.2, Truth(), lam=1.0),
        _agent(1, 0.5, Image(), lam=0.0),
        _agent(2, 0.9, Mixed(), lam=0.6),
    )
    env = Environment(agents=agents)
    out = Outcome(reputations=[0.3, 0.5, 0.8], taxes=[0.01, -0.02, 0.01])
    # errors: (0.1, 0.0, 0.1) against targets (0.2, 0.5, 0.9)
    assert true_utility(agents[0], out, env) == pytest.approx(-(0.0 + 0.01) - 0.01)
    assert true_utility(agents[1], out, env) == pytest.approx(0.5 + 0.02)
    assert true_utility(agents[2], out, env) == pytest.approx(
        -0.6 * (0.01 + 0.0) + 0.4 * 0.8 - 0.01
    )


def test_true_utility_dimension_guard():
    env = _env([0.2, 0.5, 0.9])
    out = Outcome(reputations=[0.1, 0.2], taxes=[0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        true_utility(env.agents[0], out, env)


def test_batch_utilities_match_scalar():
    agents = (
        _agent(0, 0.2, Truth(), lam=1.0, p=1.0),
        _agent(1, 0.5, Image(), lam=0.0, g=Power(0.5)),
        _agent(2, 0.9, Mixed(), lam=0.25, p=2.0),
    )
    env = Environment(agents=agents)
    rng = np.random.default_rng(7)
    reps = rng.uniform(-0.2, 1.2, size=(40, 3))
    taxes = rng.normal(0.0, 0.05, size=(40, 3))
    batch = batch_true_utilities(reps, taxes, env)
    for t in (0, 13, 39):
        out = Outcome(reputations=reps[t], taxes=taxes[t])
        for i, agent in enumerate(env.agents):
            assert batch[t, i] == pytest.approx(true_utility(agent, out, env), abs=1e-12)
    with pytest.raises(DimensionMismatch):
        batch_true_utilities(reps[:, :2], taxes[:, :2], env)
