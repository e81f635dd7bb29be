"""Seeded Monte Carlo engine for configured reporting scenarios.

Trials are processed in fixed batches of 1024.  Batch ``b`` draws from
``Generator(Philox(SeedSequence(entropy=seed, spawn_key=(b,))))`` and its
draw order is fixed: system observations, then cross observations, then
per-agent message randomness in agent order, then any scenario extras
(validation rings, one layer at a time).  Worker threads may compute
batches in any order; partial sums are reduced in batch order with
compensated summation, so results are byte-identical for any worker count.

Strategy constants are resolved once per scenario (they depend on the
observation distributions, not on samples); only uniform-random reporters
draw fresh messages each trial.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .analysis import pr_mae
from .core import (
    AS,
    Colluder,
    Environment,
    ExtendedAS,
    Image,
    MaliciousRandom,
    MechanismSpec,
    PR,
    Truth,
    WeightedPR,
    batch_true_utilities,
    centralized_solution,
)
from .numerics import NormalParams
from .mechanisms import TooFewAgents, _extended_as_per_trial_rings, run_batch
from .strategies import (
    UnsupportedCombination,
    _equilibrium_self_report,
    aggregate_sigma_prime,
    build_messages,
    expected_pr_reputation,
    pr_optimal_self_report,
    sample_observations,
)

__all__ = [
    "CliqueTooLarge",
    "UnsupportedCombination",
    "ScenarioConfig",
    "SimStats",
    "run_trials",
    "sweep",
    "run_collusion_scenario",
    "run_malicious_scenario",
]

BATCH_TRIALS = 1024

SWEEP_PARAMETERS = ("pr_a", "sigma", "rho")


class CliqueTooLarge(ValueError):
    """Raised when a clique leaves fewer than two honest outsiders."""


# ---------------------------------------------------------------------------
# Configuration and aggregates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    """One fully specified simulation scenario.

    ``strategy_mode`` is either the string ``"equilibrium"`` (every agent
    plays its analytical strategy; unsupported type/mechanism pairs raise
    UnsupportedCombination up front) or a mapping from agent id to a
    constant self-report, which overrides the equilibrium constant for the
    listed agents and leaves everyone else on their type strategy.
    """

    env: Environment
    mechanism: MechanismSpec
    strategy_mode: str | Mapping[int, float] = "equilibrium"
    trials: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.strategy_mode, str):
            if self.strategy_mode != "equilibrium":
                raise ValueError(
                    f"strategy_mode must be 'equilibrium' or a mapping, "
                    f"got {self.strategy_mode!r}"
                )
        else:
            ids = {agent.id for agent in self.env.agents}
            unknown = set(self.strategy_mode) - ids
            if unknown:
                raise ValueError(f"strategy profile names unknown agents {sorted(unknown)}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True, eq=False)
class SimStats:
    """Aggregates over all trials of one scenario."""

    mae_mean: float
    mae_stderr: float
    per_agent_reputation_mean: np.ndarray
    per_agent_utility_mean: np.ndarray
    budget_mean: float
    budget_max_abs: float
    trials: int

    def __post_init__(self) -> None:
        if self.mae_stderr < 0.0:
            raise ValueError("stderr must be nonnegative")


# ---------------------------------------------------------------------------
# Deterministic batching helpers
# ---------------------------------------------------------------------------


def _batch_plan(trials: int) -> list[tuple[int, int]]:
    """(batch index, batch size) pairs covering ``trials``."""
    plan = []
    done = 0
    index = 0
    while done < trials:
        size = min(BATCH_TRIALS, trials - done)
        plan.append((index, size))
        done += size
        index += 1
    return plan


def _batch_rng(seed: int, batch_index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(batch_index,)))
    )


def _map_batches(worker, plan, workers: int) -> list:
    """Evaluate ``worker(batch_index, size)`` for every planned batch.

    Results are returned in batch order regardless of scheduling, so any
    downstream reduction is deterministic.
    """
    if workers <= 1 or len(plan) == 1:
        return [worker(b, size) for b, size in plan]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(worker, b, size) for b, size in plan]
        return [f.result() for f in futures]


def _column_sums(partials: list[dict], key: str) -> np.ndarray:
    """fsum per component over a list of per-batch vectors, in batch order."""
    stacked = np.stack([p[key] for p in partials])
    return np.array(
        [math.fsum(stacked[:, j].tolist()) for j in range(stacked.shape[1])]
    )


def _resolve_strategy_overrides(
    env: Environment,
    mechanism: MechanismSpec,
    sigma_prime: float,
    strategy_mode: str | Mapping[int, float],
) -> dict[int, float]:
    """Constant self-reports for every non-random agent, resolved up front.

    Raises UnsupportedCombination immediately when an agent's equilibrium
    strategy is undefined under the mechanism and no custom constant covers
    that agent.  Uniform-random reporters stay unlisted; they draw fresh
    reports every trial.
    """
    custom: dict[int, float] = (
        {} if isinstance(strategy_mode, str) else dict(strategy_mode)
    )
    overrides: dict[int, float] = {}
    for agent in env.agents:
        if agent.id in custom:
            overrides[agent.id] = float(custom[agent.id])
            continue
        value = _equilibrium_self_report(agent, mechanism, sigma_prime)
        if value is not None:
            overrides[agent.id] = float(value)
    return overrides


# ---------------------------------------------------------------------------
# Core scenario runner
# ---------------------------------------------------------------------------


def run_trials(config: ScenarioConfig, workers: int = 1) -> SimStats:
    """Simulate the configured scenario and aggregate outcome statistics.

    Deterministic for a fixed config: the per-batch substream split makes
    the worker count irrelevant to the result.
    """
    env, mechanism = config.env, config.mechanism
    sigma_prime = aggregate_sigma_prime(env)
    overrides = _resolve_strategy_overrides(
        env, mechanism, sigma_prime, config.strategy_mode
    )
    targets = centralized_solution(env)

    def one_batch(batch_index: int, size: int) -> dict:
        rng = _batch_rng(config.seed, batch_index)
        system_obs, cross_obs = sample_observations(env, rng, size)
        selfs, cross = build_messages(
            env, mechanism, cross_obs, rng, sigma_prime, self_overrides=overrides
        )
        reps, taxes = run_batch(mechanism, selfs, cross, system_obs, sigma_prime)
        mae = np.abs(reps - targets[None, :]).sum(axis=1)
        budgets = taxes.sum(axis=1)
        utilities = batch_true_utilities(reps, taxes, env)
        return {
            "mae_sum": float(mae.sum()),
            "mae_sq_sum": float((mae * mae).sum()),
            "rep_sums": reps.sum(axis=0),
            "util_sums": utilities.sum(axis=0),
            "budget_sum": float(budgets.sum()),
            "budget_max_abs": float(np.abs(budgets).max()),
        }

    partials = _map_batches(one_batch, _batch_plan(config.trials), workers)
    t = config.trials
    mae_sum = math.fsum(p["mae_sum"] for p in partials)
    mae_sq_sum = math.fsum(p["mae_sq_sum"] for p in partials)
    mae_mean = mae_sum / t
    if t > 1:
        variance = max(0.0, (mae_sq_sum - t * mae_mean * mae_mean) / (t - 1))
        mae_stderr = math.sqrt(variance / t)
    else:
        mae_stderr = 0.0
    return SimStats(
        mae_mean=mae_mean,
        mae_stderr=mae_stderr,
        per_agent_reputation_mean=_column_sums(partials, "rep_sums") / t,
        per_agent_utility_mean=_column_sums(partials, "util_sums") / t,
        budget_mean=math.fsum(p["budget_sum"] for p in partials) / t,
        budget_max_abs=max(p["budget_max_abs"] for p in partials),
        trials=t,
    )


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------


def _with_pr_a(config: ScenarioConfig, a: float) -> ScenarioConfig:
    if not isinstance(config.mechanism, (PR, WeightedPR)):
        raise ValueError("pr_a sweeps require a punish-reward mechanism")
    return dataclasses.replace(
        config, mechanism=dataclasses.replace(config.mechanism, a=a)
    )


def _with_sigma(config: ScenarioConfig, sigma: float) -> ScenarioConfig:
    """Homogeneous observation-noise level: every channel gets std sigma."""
    if sigma < 0.0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    env = config.env
    agents = tuple(
        dataclasses.replace(agent, cross_obs=NormalParams(agent.cross_obs.mean, sigma))
        for agent in env.agents
    )
    new_env = dataclasses.replace(
        env,
        agents=agents,
        system_obs=NormalParams(env.system_obs.mean, sigma),
    )
    return dataclasses.replace(config, env=new_env)


def _with_rho(config: ScenarioConfig, rho: float) -> ScenarioConfig:
    """Image-driven fraction: the last round(rho*(K-1)) agents become
    image-driven (truth weight 0), everyone else truth-driven."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    env = config.env
    n_image = round(rho * (env.k - 1))
    agents = []
    for i, agent in enumerate(env.agents):
        if i >= env.k - n_image:
            agents.append(
                dataclasses.replace(
                    agent,
                    agent_type=Image(),
                    utility=dataclasses.replace(agent.utility, truth_weight=0.0),
                )
            )
        else:
            agents.append(
                dataclasses.replace(
                    agent,
                    agent_type=Truth(),
                    utility=dataclasses.replace(agent.utility, truth_weight=1.0),
                )
            )
    return dataclasses.replace(
        config, env=dataclasses.replace(env, agents=tuple(agents))
    )


def sweep(config: ScenarioConfig, parameter: str, grid, workers: int = 1) -> list[dict]:
    """Run the scenario across a parameter grid, one stats row per point.

    ``parameter`` is one of ``pr_a`` (punish-reward band multiplier),
    ``sigma`` (homogeneous observation noise), or ``rho`` (image-driven
    fraction).  Rows carry the simulated aggregates plus, for ``pr_a``,
    the closed-form columns ``y`` (band offset), ``e_m`` (expected
    mechanism error), and ``expected_reputation`` (published reputation of
    a representative sender at the optimal self-report); ``averaging_mae``
    gives the simple-averaging error for the row's noise level.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(
            f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}"
        )
    values = [float(v) for v in np.asarray(grid, dtype=float).ravel()]
    if not values:
        raise ValueError("sweep grid must be nonempty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("sweep grid must be strictly increasing")

    rows = []
    for value in values:
        if parameter == "pr_a":
            point = _with_pr_a(config, value)
        elif parameter == "sigma":
            point = _with_sigma(config, value)
        else:
            point = _with_rho(config, value)
        stats = run_trials(point, workers=workers)
        sigma_prime = aggregate_sigma_prime(point.env)
        row = {
            "parameter": parameter,
            "value": value,
            "mae_mean": stats.mae_mean,
            "mae_stderr": stats.mae_stderr,
            "budget_mean": stats.budget_mean,
            "budget_max_abs": stats.budget_max_abs,
            "trials": stats.trials,
            "averaging_mae": math.sqrt(2.0 / math.pi) * sigma_prime,
        }
        if parameter == "pr_a":
            r_bar = float(point.env.qualities.mean())
            eq = pr_optimal_self_report(r_bar, sigma_prime, value)
            row["y"] = eq.y
            row["e_m"] = pr_mae(value, sigma_prime)
            row["expected_reputation"] = expected_pr_reputation(
                eq.x_star, r_bar, sigma_prime, value * sigma_prime
            )
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Collusion scenario
# ---------------------------------------------------------------------------


def _retype_clique(env: Environment, clique: set[int], honest: bool) -> Environment:
    """Clique members become mutual inflaters (or truth-tellers when honest)."""
    fresh_id = (
        max(
            (
                agent.agent_type.clique_id
                for agent in env.agents
                if isinstance(agent.agent_type, Colluder)
            ),
            default=-1,
        )
        + 1
    )
    agents = []
    for agent in env.agents:
        if agent.id in clique:
            if honest:
                agents.append(
                    dataclasses.replace(
                        agent,
                        agent_type=Truth(),
                        utility=dataclasses.replace(agent.utility, truth_weight=1.0),
                    )
                )
            elif isinstance(agent.agent_type, Colluder):
                agents.append(agent)
            else:
                agents.append(
                    dataclasses.replace(
                        agent, agent_type=Colluder(clique_id=fresh_id, inflate=1.0)
                    )
                )
        else:
            agents.append(agent)
    return dataclasses.replace(env, agents=tuple(agents))


def _run_ring_arm(
    env: Environment,
    clique: set[int],
    layers: int,
    trials: int,
    seed: int,
    workers: int,
) -> dict:
    """One treatment arm under ring validation with per-trial secret rings."""
    mechanism = ExtendedAS(layers=layers)
    sigma_prime = aggregate_sigma_prime(env)
    overrides = _resolve_strategy_overrides(env, mechanism, sigma_prime, "equilibrium")
    targets = centralized_solution(env)
    outsiders = np.array(
        [i for i, agent in enumerate(env.agents) if agent.id not in clique], dtype=int
    )
    members = np.array(
        [i for i, agent in enumerate(env.agents) if agent.id in clique], dtype=int
    )
    base = np.arange(env.k)

    def one_batch(batch_index: int, size: int) -> dict:
        rng = _batch_rng(seed, batch_index)
        _, cross_obs = sample_observations(env, rng, size)
        selfs, cross = build_messages(
            env, mechanism, cross_obs, rng, sigma_prime, self_overrides=overrides
        )
        rings1 = rng.permuted(np.broadcast_to(base, (size, env.k)), axis=1)
        rings2 = (
            rng.permuted(np.broadcast_to(base, (size, env.k)), axis=1)
            if layers == 2
            else None
        )
        reps, taxes = _extended_as_per_trial_rings(selfs, cross, rings1, rings2, layers)
        utilities = batch_true_utilities(reps, taxes, env)
        mae = np.abs(reps - targets[None, :]).sum(axis=1)
        outsider_mae = np.abs(reps[:, outsiders] - targets[None, outsiders]).sum(axis=1)
        budgets = taxes.sum(axis=1)
        return {
            "mae_sum": float(mae.sum()),
            "outsider_mae_sum": float(outsider_mae.sum()),
            "clique_util_sum": float(utilities[:, members].sum()),
            "clique_tax_sum": float(taxes[:, members].sum()),
            "budget_max_abs": float(np.abs(budgets).max()),
        }

    partials = _map_batches(one_batch, _batch_plan(trials), workers)
    n_members = len(members)
    return {
        "layers": layers,
        "mae": math.fsum(p["mae_sum"] for p in partials) / trials,
        "outsider_mae": math.fsum(p["outsider_mae_sum"] for p in partials) / trials,
        "clique_utility": (
            math.fsum(p["clique_util_sum"] for p in partials) / (trials * n_members)
            if n_members
            else None
        ),
        "clique_tax": (
            math.fsum(p["clique_tax_sum"] for p in partials) / (trials * n_members)
            if n_members
            else None
        ),
        "budget_max_abs": max(p["budget_max_abs"] for p in partials),
    }


def run_collusion_scenario(
    env: Environment,
    clique: set[int],
    layers: int,
    trials: int,
    seed: int,
    workers: int = 1,
) -> dict:
    """Compare ring-validation layer counts against a mutually inflating clique.

    Clique members report 1.0 for each other (self-reports included) while
    outsiders play truthfully; honest baselines replace the clique with
    truth-tellers under the same seed, so every difference is attributable
    to the manipulation.  Rings are redrawn secretly every trial.  The
    record carries both the 1-layer and 2-layer arms regardless of
    ``layers``, which only selects the headline arm.
    """
    if layers not in (1, 2):
        raise ValueError(f"layers must be 1 or 2, got {layers}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    ids = {agent.id for agent in env.agents}
    clique = set(clique)
    unknown = clique - ids
    if unknown:
        raise ValueError(f"clique names unknown agents {sorted(unknown)}")
    if len(clique) >= env.k - 1:
        raise CliqueTooLarge(
            f"a clique of {len(clique)} in a population of {env.k} leaves "
            "fewer than two honest outsiders to validate against"
        )
    if env.k < 3:
        raise TooFewAgents(f"ring validation needs at least 3 agents, got {env.k}")

    manipulated = _retype_clique(env, clique, honest=False)
    honest = _retype_clique(env, clique, honest=True)
    record = {
        "clique": sorted(clique),
        "layers": layers,
        "trials": trials,
        "seed": seed,
    }
    for n_layers, key in ((1, "one_layer"), (2, "two_layer")):
        record[key] = _run_ring_arm(manipulated, clique, n_layers, trials, seed, workers)
        record[key + "_honest"] = _run_ring_arm(
            honest, clique, n_layers, trials, seed, workers
        )
    return record


# ---------------------------------------------------------------------------
# Malicious-reporting scenario
# ---------------------------------------------------------------------------


def _retype_slots(env: Environment, slots: set[int], kind: str) -> Environment:
    agents = []
    for agent in env.agents:
        if agent.id not in slots:
            agents.append(agent)
        elif kind == "malicious":
            if isinstance(agent.agent_type, MaliciousRandom):
                agents.append(agent)
            else:
                agents.append(
                    dataclasses.replace(agent, agent_type=MaliciousRandom(0.0, 1.0))
                )
        else:
            agents.append(
                dataclasses.replace(
                    agent,
                    agent_type=Image(),
                    utility=dataclasses.replace(agent.utility, truth_weight=0.0),
                )
            )
    return dataclasses.replace(env, agents=tuple(agents))


def _run_as_arm(
    env: Environment, charge_slots: np.ndarray, trials: int, seed: int, workers: int
) -> tuple[float, float | None]:
    """Scoring-mechanism arm: (mae_mean, mean own charge over charge_slots)."""
    mechanism = AS()
    sigma_prime = aggregate_sigma_prime(env)
    overrides = _resolve_strategy_overrides(env, mechanism, sigma_prime, "equilibrium")
    targets = centralized_solution(env)

    def one_batch(batch_index: int, size: int) -> dict:
        rng = _batch_rng(seed, batch_index)
        system_obs, cross_obs = sample_observations(env, rng, size)
        selfs, cross = build_messages(
            env, mechanism, cross_obs, rng, sigma_prime, self_overrides=overrides
        )
        reps, taxes = run_batch(mechanism, selfs, cross, system_obs, sigma_prime)
        mae = np.abs(reps - targets[None, :]).sum(axis=1)
        charges = (
            float(((selfs[:, charge_slots] - system_obs[:, charge_slots]) ** 2).sum())
            if charge_slots.size
            else 0.0
        )
        return {"mae_sum": float(mae.sum()), "charge_sum": charges}

    partials = _map_batches(one_batch, _batch_plan(trials), workers)
    mae_mean = math.fsum(p["mae_sum"] for p in partials) / trials
    own_charge = (
        math.fsum(p["charge_sum"] for p in partials) / (trials * charge_slots.size)
        if charge_slots.size
        else None
    )
    return mae_mean, own_charge


def run_malicious_scenario(
    env: Environment,
    malicious: set[int],
    trials: int,
    seed: int,
    workers: int = 1,
) -> dict:
    """Compare uniform-random reporters against image-driven ones.

    The listed slots are occupied by uniform-random reporters in one arm
    and image-driven inflaters in the other (same seed, scoring
    mechanism); the baseline runs the environment as given.  The record
    also carries the malicious agents' mean own validation charge
    (self-report versus the system observation, before redistribution).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    ids = {agent.id for agent in env.agents}
    malicious = set(malicious)
    unknown = malicious - ids
    if unknown:
        raise ValueError(f"malicious set names unknown agents {sorted(unknown)}")

    slot_idx = np.array(
        [i for i, agent in enumerate(env.agents) if agent.id in malicious], dtype=int
    )
    malicious_env = _retype_slots(env, malicious, "malicious")
    image_env = _retype_slots(env, malicious, "image")

    malicious_mae, own_charge = _run_as_arm(malicious_env, slot_idx, trials, seed, workers)
    image_mae, _ = _run_as_arm(image_env, slot_idx, trials, seed, workers)
    baseline_mae, _ = _run_as_arm(env, np.array([], dtype=int), trials, seed, workers)
    return {
        "malicious": sorted(malicious),
        "trials": trials,
        "seed": seed,
        "malicious_mae": malicious_mae,
        "image_mae": image_mae,
        "baseline_mae": baseline_mae,
        "malicious_own_charge": own_charge,
    }
