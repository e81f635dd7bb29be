"""Best responses, equilibrium self-reports, and deviation oracles.

Three kinds of results live here:

1. Closed-form best responses: the punish-reward equilibrium self-report
   (``solve_y`` / ``pr_optimal_self_report``), the scoring-mechanism first-order
   condition for image-motivated agents (``image_best_response_as``), and the
   deterministic deviation payoffs under share-of-total allocation
   (``fr_deviation_loss``, ``proportional_deviation_profit``).
2. The strategy map used by the Monte Carlo driver: which self- and
   cross-reports each agent type submits under each mechanism in equilibrium
   (``equilibrium_self_reports`` / ``build_messages``).  Pairs without an
   analytical best response raise :class:`UnsupportedCombination` rather than
   inventing behavior.
3. A brute-force numerical oracle (``best_response_numeric`` /
   ``deviation_report``) that grids a deviator's report, replays the same
   sampled observations at every grid point (common random numbers), and
   returns the empirical best response; equilibrium checks compare it against
   the claimed strategy.

Aggregate noise convention: the punish-reward band is calibrated to
``sigma_prime``, the standard deviation of the averaging aggregate.  With a
common observation noise sigma it equals sigma/sqrt(K);
:func:`aggregate_sigma_prime` generalizes to per-agent noise levels by using
the root-mean-square of all K+1 noise sources (the K agents plus the system
channel), which reduces to sigma/sqrt(K) in the homogeneous case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

from .core import (
    AS,
    Agent,
    Colluder,
    DimensionMismatch,
    DirectObservation,
    Environment,
    ExtendedAS,
    FR,
    Image,
    Linear,
    MaliciousRandom,
    MechanismSpec,
    Mixed,
    PR,
    Power,
    Quality,
    SimpleAveraging,
    Truth,
    WeightedPR,
    centralized_solution,
)
from .mechanisms import run_batch
from .numerics import (
    TAIL_SIGMAS,
    NoRoot,
    erf,
    find_root,
    integrate,
    normal_cdf,
)

__all__ = [
    "UnsupportedCombination",
    "PrEquilibrium",
    "DeviationReport",
    "solve_y",
    "expected_pr_reputation",
    "expected_pr_reputation_grid",
    "pr_optimal_self_report",
    "image_best_response_as",
    "mixed_best_response_as",
    "aggregate_sigma_prime",
    "equilibrium_self_reports",
    "sample_observations",
    "build_messages",
    "best_response_numeric",
    "deviation_report",
    "bayesian_ic_violation",
    "fr_deviation_loss",
    "proportional_deviation_profit",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class UnsupportedCombination(RuntimeError):
    """No analytical equilibrium strategy exists for this (agent type, mechanism) pair."""


# ---------------------------------------------------------------------------
# Punish-reward equilibrium
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrEquilibrium:
    """Optimal self-report under the punish-reward band.

    ``y`` is the report offset in units of the band half-width:
    ``x_star = mu + a * sigma' * y`` with ``0 < y < 1`` (the sender inflates,
    but stays inside the acceptance band around its own mean).
    """

    a: float
    y: float
    x_star: float

    def __post_init__(self) -> None:
        if self.a <= 0.0:
            raise ValueError(f"band multiplier must be positive, got {self.a!r}")
        if not (0.0 < self.y < 1.0):
            raise ValueError(f"normalized offset must lie in (0, 1), got {self.y!r}")
        if not math.isfinite(self.x_star):
            raise ValueError(f"x_star must be finite, got {self.x_star!r}")


def _y_residual(y: float | np.ndarray, a: float) -> float | np.ndarray:
    """Stationarity condition for the expected published reputation.

    This is 2 * d/dx E[published reputation] evaluated at x = mu + a*sigma'*y;
    its root in (0, 1) is the optimal normalized report offset.
    """
    t1 = a * (y + 1.0) / _SQRT2
    t2 = a * (y - 1.0) / _SQRT2
    gauss = (a / _SQRT_2PI) * (np.exp(-t1 * t1) - 3.0 * np.exp(-t2 * t2))
    return gauss - 0.5 * (erf(t1) + 3.0 * erf(t2))


def solve_y(a: float) -> float:
    """Solve the band-offset equation for ``y`` in (0, 1).

    Scans for a sign change, polishes it with the safeguarded root finder, and
    verifies the residual; raises :class:`NoRoot` if the equation has no
    bracketed root in the open unit interval (it does for all moderate ``a``).
    """
    if a <= 0.0:
        raise ValueError(f"band multiplier must be positive, got {a!r}")
    ys = np.linspace(1e-9, 1.0 - 1e-9, 257)
    res = np.asarray(_y_residual(ys, a))
    sign_change = np.nonzero(np.diff(np.signbit(res)))[0]
    if sign_change.size == 0:
        raise NoRoot(f"no sign change of the offset equation in (0,1) for a={a!r}")
    lo = float(ys[sign_change[0]])
    hi = float(ys[sign_change[0] + 1])
    y = find_root(lambda t: float(_y_residual(t, a)), lo, hi, tol=1e-15)
    if abs(float(_y_residual(y, a))) > 1e-10:
        raise NoRoot(f"root polish failed for a={a!r}: residual {_y_residual(y, a):g}")
    return y


def _cdf_integral(c: float | np.ndarray, mu: float, sigma_prime: float) -> float | np.ndarray:
    """Antiderivative of the Normal cdf: integral of F from -inf to c."""
    w = (np.asarray(c, dtype=float) - mu) / sigma_prime
    phi = np.exp(-0.5 * w * w) / _SQRT_2PI
    big_phi = 0.5 * (1.0 + erf(w / _SQRT2))
    out = sigma_prime * (w * big_phi + phi)
    return float(out) if out.ndim == 0 else out


def expected_pr_reputation(x: float, mu: float, sigma_prime: float, eps: float) -> float:
    """Expected published reputation of a sender reporting ``x`` under punish-reward.

    The aggregate is Normal with mean ``mu`` and std ``sigma_prime``; ``eps``
    is the acceptance half-width.  Evaluates

        x + (eps/2) F(x+eps) - (3 eps/2) F(x-eps)
          - 1/2 * int_{x-eps}^{x+eps} F - 2 * int_{-inf}^{x-eps} F

    by adaptive quadrature on the cdf F, truncating the left tail at
    ``TAIL_SIGMAS`` standard deviations (the cdf integrand is below 1e-14
    there).  Absolute accuracy about 1e-8.
    """
    if sigma_prime <= 0.0:
        raise ValueError(f"sigma_prime must be positive, got {sigma_prime!r}")
    if eps <= 0.0:
        raise ValueError(f"band half-width must be positive, got {eps!r}")
    cdf = lambda t: float(normal_cdf(t, mu, sigma_prime))
    lo_tail = mu - TAIL_SIGMAS * sigma_prime
    band = integrate(cdf, x - eps, x + eps, tol=1e-10)
    tail = 0.0
    if x - eps > lo_tail:
        tail = integrate(cdf, lo_tail, x - eps, tol=1e-10)
    return (
        x
        + 0.5 * eps * cdf(x + eps)
        - 1.5 * eps * cdf(x - eps)
        - 0.5 * band
        - 2.0 * tail
    )


def expected_pr_reputation_grid(
    xs: np.ndarray, mu: float, sigma_prime: float, eps: float
) -> np.ndarray:
    """Vectorized closed form of :func:`expected_pr_reputation`.

    Uses the analytical antiderivative of the Normal cdf instead of
    quadrature, so dense grids are cheap; the two routes agree to ~1e-8 and
    are cross-checked in the test suite.
    """
    if sigma_prime <= 0.0:
        raise ValueError(f"sigma_prime must be positive, got {sigma_prime!r}")
    if eps <= 0.0:
        raise ValueError(f"band half-width must be positive, got {eps!r}")
    xs = np.asarray(xs, dtype=float)
    f_hi = normal_cdf(xs + eps, mu, sigma_prime)
    f_lo = normal_cdf(xs - eps, mu, sigma_prime)
    a_hi = _cdf_integral(xs + eps, mu, sigma_prime)
    a_lo = _cdf_integral(xs - eps, mu, sigma_prime)
    return xs + 0.5 * eps * f_hi - 1.5 * eps * f_lo - 0.5 * a_hi - 1.5 * a_lo


def pr_optimal_self_report(mu: float, sigma_prime: float, a: float) -> PrEquilibrium:
    """Optimal punish-reward self-report: x* = mu + a * sigma' * y.

    The sender inflates by a fraction ``y`` of the band half-width, strictly
    between staying put and hitting the band edge.
    """
    if sigma_prime <= 0.0:
        raise ValueError(f"sigma_prime must be positive, got {sigma_prime!r}")
    y = solve_y(a)
    return PrEquilibrium(a=a, y=y, x_star=mu + a * sigma_prime * y)


# ---------------------------------------------------------------------------
# Scoring-mechanism best responses
# ---------------------------------------------------------------------------


def mixed_best_response_as(
    g: Union[Linear, Power], r: float, image_weight: float
) -> float:
    """Self-report maximizing w*g(x) - E[(x - prior)^2] on [0, 1].

    ``image_weight`` w is the weight on the image element (1 - truth weight).
    The objective is strictly concave, so the first-order condition
    w * g'(x) = 2 (x - r) pins the unique interior optimum; the result is
    clamped to the message space.  For linear g this is min(r + w/2, 1),
    exactly.
    """
    if not (0.0 < image_weight <= 1.0):
        raise ValueError(f"image weight must lie in (0, 1], got {image_weight!r}")
    if isinstance(g, Linear):
        return min(r + 0.5 * image_weight, 1.0)
    foc = lambda x: image_weight * g.derivative(x) - 2.0 * (x - r)
    if foc(1.0) >= 0.0:
        return 1.0
    # g' decreasing and unbounded at 0+, so the condition brackets in (0, 1].
    return find_root(foc, 1e-12, 1.0, tol=1e-13)


def image_best_response_as(
    g: Union[Linear, Power], r: Quality | float, sigma0: float = 0.0
) -> float:
    """Best self-report of a purely image-motivated agent under scoring taxes.

    Solves g'(x) = 2 (x - r) clamped to [0, 1]; linear g gives min(r + 1/2, 1)
    exactly.  ``sigma0`` (the prior noise) shifts the expected tax by an
    additive constant only, so it does not move the optimum; the parameter is
    accepted to mirror the objective's definition.
    """
    del sigma0
    return mixed_best_response_as(g, float(r), 1.0)


# ---------------------------------------------------------------------------
# Equilibrium strategy map
# ---------------------------------------------------------------------------


def aggregate_sigma_prime(env: Environment) -> float:
    """Std of the averaging aggregate implied by the environment's noise levels.

    RMS of the K+1 observation channels (each agent's cross-report noise plus
    the system's own), divided by sqrt(K); equals sigma/sqrt(K) when all
    channels share one sigma.
    """
    variances = [env.system_obs.std**2] + [a.cross_obs.std**2 for a in env.agents]
    return math.sqrt(math.fsum(variances) / len(variances)) / math.sqrt(env.k)


def _equilibrium_self_report(
    agent: Agent, spec: MechanismSpec, sigma_prime: float
) -> float | None:
    """The agent's constant equilibrium self-report, or None when per-trial random.

    Raises :class:`UnsupportedCombination` for pairs without an analytical
    strategy (image/mixed senders under share-of-total or ring-validated
    scoring, or band mechanisms with a nonlinear image payoff).
    """
    r = agent.quality.value
    kind = agent.agent_type
    if isinstance(kind, Truth):
        return r
    if isinstance(kind, MaliciousRandom):
        return None
    if isinstance(kind, Colluder):
        return kind.inflate
    # Image or mixed sender.
    image_weight = 1.0 - agent.utility.truth_weight
    if isinstance(spec, (AS,)):
        return mixed_best_response_as(agent.utility.g, r, image_weight)
    if isinstance(spec, SimpleAveraging):
        # The self-report never enters the averaging outcome; an
        # image-motivated sender pins it at the top of the scale.
        return 1.0
    if isinstance(spec, (PR, WeightedPR)):
        if not isinstance(agent.utility.g, Linear):
            raise UnsupportedCombination(
                f"{type(kind).__name__} under {type(spec).__name__} needs a linear "
                "image payoff for the band-offset solution"
            )
        eq = pr_optimal_self_report(r, sigma_prime, spec.a)
        return min(eq.x_star, 1.0)
    if isinstance(spec, DirectObservation):
        return r  # no message is consumed; report truthfully as a placeholder
    raise UnsupportedCombination(
        f"no equilibrium self-report for {type(kind).__name__} under {type(spec).__name__}"
    )


def equilibrium_self_reports(
    env: Environment, spec: MechanismSpec, sigma_prime: float | None = None
) -> np.ndarray:
    """Per-agent equilibrium self-reports (NaN marks per-trial random senders)."""
    if sigma_prime is None:
        sigma_prime = aggregate_sigma_prime(env)
    out = np.empty(env.k)
    for i, agent in enumerate(env.agents):
        val = _equilibrium_self_report(agent, spec, sigma_prime)
        out[i] = math.nan if val is None else val
    return out


def sample_observations(
    env: Environment, rng: np.random.Generator, trials: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw system priors (trials, K) and cross observations (trials, K, K).

    ``cross[t, j, i]`` is agent j's observation of agent i in trial t, drawn
    with agent j's bias and noise level around agent i's true quality.  Draw
    order is fixed (system first, then the cross matrix) so substreams are
    reproducible.  Observations are clamped to [0, 1] only when the
    environment opts in.
    """
    truths = env.qualities
    k = env.k
    r0 = truths[None, :] + env.system_obs.mean + rng.normal(0.0, 1.0, size=(trials, k)) * env.system_obs.std
    cross = (
        truths[None, None, :]
        + env.cross_biases[None, :, None]
        + rng.normal(0.0, 1.0, size=(trials, k, k)) * env.cross_stds[None, :, None]
    )
    if env.clamp_observations:
        np.clip(r0, 0.0, 1.0, out=r0)
        np.clip(cross, 0.0, 1.0, out=cross)
    return r0, cross


def build_messages(
    env: Environment,
    spec: MechanismSpec,
    cross_obs: np.ndarray,
    rng: np.random.Generator,
    sigma_prime: float | None = None,
    self_overrides: Mapping[int, float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Equilibrium-mode messages for a batch of trials.

    Truthful senders relay their observations; image/mixed senders use their
    analytical self-reports; malicious senders draw uniform reports (self and
    cross) per trial; colluders substitute inflate/bash constants.
    ``self_overrides`` replaces individual agents' constant self-reports
    (used for custom strategy profiles).  Returns (self_reports, cross_reports)
    shaped (trials, K) and (trials, K, K).
    """
    trials, k = cross_obs.shape[0], env.k
    if sigma_prime is None:
        sigma_prime = aggregate_sigma_prime(env)
    cross = cross_obs.copy()
    selfs = np.empty((trials, k))
    clique_members: dict[int, list[int]] = {}
    for i, agent in enumerate(env.agents):
        if isinstance(agent.agent_type, Colluder):
            clique_members.setdefault(agent.agent_type.clique_id, []).append(i)
    for i, agent in enumerate(env.agents):
        if self_overrides is not None and i in self_overrides:
            selfs[:, i] = self_overrides[i]
        else:
            const = _equilibrium_self_report(agent, spec, sigma_prime)
            if const is None:
                kind = agent.agent_type
                selfs[:, i] = rng.uniform(kind.low, kind.high, size=trials)
            else:
                selfs[:, i] = const
        kind = agent.agent_type
        if isinstance(kind, MaliciousRandom):
            cross[:, i, :] = rng.uniform(kind.low, kind.high, size=(trials, k))
        elif isinstance(kind, Colluder):
            mates = clique_members[kind.clique_id]
            if kind.bash is not None:
                cross[:, i, :] = kind.bash
            else:
                cross[:, i, :] = cross_obs[:, i, :]
            cross[:, i, mates] = kind.inflate
    return selfs, cross


# ---------------------------------------------------------------------------
# Numerical best-response oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeviationReport:
    """Outcome of a gridded deviation scan for one agent.

    ``gain`` is the common-random-numbers estimate of the mean utility
    improvement of the best grid point over the claimed report;
    ``gain_stderr`` is the standard error of that paired difference.  The
    deviation counts as profitable only when it clears both the grid
    resolution and three standard errors.
    """

    agent_index: int
    claimed: float
    best: float
    claimed_mean: float
    best_mean: float
    gain: float
    gain_stderr: float
    grid_step: float

    @property
    def profitable(self) -> bool:
        return (
            abs(self.best - self.claimed) > self.grid_step + 1e-12
            and self.gain > 3.0 * self.gain_stderr
        )


def _deviator_utility(
    agent: Agent,
    reps: np.ndarray,
    taxes: np.ndarray,
    targets: np.ndarray,
) -> np.ndarray:
    """Per-trial utility of one agent given batched outcomes."""
    i = agent.id
    lam = agent.utility.truth_weight
    floss = agent.utility.f(np.abs(reps - targets[None, :]))
    accuracy = floss.sum(axis=1) - floss[:, i]
    image = agent.utility.g(reps[:, i])
    return -lam * accuracy + (1.0 - lam) * image - taxes[:, i]


def _resolve_profile(
    env: Environment,
    spec: MechanismSpec,
    others_strategy: str | Mapping[int, float],
    cross_obs: np.ndarray,
    rng: np.random.Generator,
    sigma_prime: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Message batches for a named or explicit strategy profile."""
    if isinstance(others_strategy, str):
        if others_strategy == "equilibrium":
            return build_messages(env, spec, cross_obs, rng, sigma_prime)
        if others_strategy == "truthful":
            trials = cross_obs.shape[0]
            selfs = np.tile(env.qualities, (trials, 1))
            return selfs, cross_obs.copy()
        raise ValueError(
            f"others_strategy must be 'truthful', 'equilibrium' or a mapping, got {others_strategy!r}"
        )
    return build_messages(
        env, spec, cross_obs, rng, sigma_prime, self_overrides=dict(others_strategy)
    )


def deviation_report(
    agent_index: int,
    mechanism: MechanismSpec,
    env: Environment,
    others_strategy: str | Mapping[int, float] = "truthful",
    trials: int = 20_000,
    grid: int = 201,
    seed: int = 0,
    claimed: float | None = None,
) -> DeviationReport:
    """Grid the deviator's report and measure the best deviation's payoff.

    All grid points are evaluated on the same sampled observations (common
    random numbers), so the paired gain estimate is tight.  The gridded
    channel is the self-report for every mechanism except simple averaging,
    where the self-report is outcome-irrelevant and the strategic channel is
    the cross-report: grid value c is applied as an additive bias c - 1/2 on
    the deviator's cross-reports (truthful play sits at c = 1/2).
    """
    if not (0 <= agent_index < env.k):
        raise DimensionMismatch(f"agent_index {agent_index} outside 0..{env.k - 1}")
    if trials < 1:
        raise ValueError("trials must be positive")
    if grid < 3:
        raise ValueError("grid must have at least 3 points")
    if isinstance(mechanism, DirectObservation):
        raise UnsupportedCombination("direct observation consumes no reports to deviate on")
    sigma_prime = aggregate_sigma_prime(env)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(0,))))
    r0, cross_obs = sample_observations(env, rng, trials)
    selfs, cross = _resolve_profile(env, mechanism, others_strategy, cross_obs, rng, sigma_prime)
    targets = centralized_solution(env)
    agent = env.agents[agent_index]
    cross_channel = isinstance(mechanism, SimpleAveraging)
    if claimed is None:
        claimed = 0.5 if cross_channel else float(selfs[0, agent_index])

    base_cross_row = cross[:, agent_index, :].copy()
    grid_values = np.linspace(0.0, 1.0, grid)

    def evaluate(value: float) -> np.ndarray:
        if cross_channel:
            cross[:, agent_index, :] = base_cross_row + (value - 0.5)
        else:
            selfs[:, agent_index] = value
        reps, taxes = run_batch(mechanism, selfs, cross, r0, sigma_prime)
        return _deviator_utility(agent, reps, taxes, targets)

    means = np.empty(grid)
    for idx, value in enumerate(grid_values):
        means[idx] = evaluate(float(value)).mean()
    best_idx = int(np.argmax(means))
    best = float(grid_values[best_idx])
    best_utils = evaluate(best)
    claimed_utils = evaluate(float(claimed))
    diff = best_utils - claimed_utils
    gain = float(diff.mean())
    gain_stderr = float(diff.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return DeviationReport(
        agent_index=agent_index,
        claimed=float(claimed),
        best=best,
        claimed_mean=float(claimed_utils.mean()),
        best_mean=float(best_utils.mean()),
        gain=gain,
        gain_stderr=gain_stderr,
        grid_step=float(grid_values[1] - grid_values[0]),
    )


def best_response_numeric(
    agent_index: int,
    mechanism: MechanismSpec,
    env: Environment,
    others_strategy: str | Mapping[int, float] = "truthful",
    trials: int = 20_000,
    grid: int = 201,
    seed: int = 0,
) -> float:
    """Grid point on [0, 1] maximizing the agent's Monte Carlo expected utility.

    See :func:`deviation_report` for the sampling scheme and the meaning of
    the gridded channel per mechanism.  Deterministic given ``seed``.
    """
    return deviation_report(
        agent_index, mechanism, env, others_strategy, trials, grid, seed
    ).best


# ---------------------------------------------------------------------------
# Implementability results under the share-of-total allocation
# ---------------------------------------------------------------------------


def bayesian_ic_violation(
    env: Environment, deviator: int = 0, r_prime: float | None = None
) -> float:
    """Utility gain from inflating the self-report under direct revelation.

    With everyone else truthful and published reputations equal to the
    reports (no taxes), a sender with an image element gains exactly
    g(r') - g(r) by reporting r' instead of its true r: its own entry does
    not appear in its accuracy element, so nothing offsets the image gain.
    A strictly positive value certifies that truthful revelation is not
    incentive compatible without transfers.
    """
    if env.index_scheme != "absolute":
        raise ValueError("direct-revelation gain is defined for the absolute scheme")
    agent = env.agents[deviator]
    r = agent.quality.value
    if r_prime is None:
        r_prime = min(r + 0.1, 1.0)
    if agent.utility.truth_weight >= 1.0:
        return 0.0
    g = agent.utility.g
    return float(g(r_prime)) - float(g(r))


def fr_deviation_loss(deviator: int, x: float, env: Environment) -> float:
    """Utility change of a truth-motivated sender deviating under share-of-total.

    Others report truthfully, the deviator reports ``x``; reputations are the
    shares of the reported total.  The loss is

        - sum_{j != deviator} f(r_j |x - r_i| / ((x + S') S))

    with S' the others' total and S the full total -- never positive, zero
    only at the truthful report (when some co-truth is positive).
    """
    if env.index_scheme != "relative":
        raise ValueError("share-of-total deviations need the relative scheme")
    r = env.qualities
    i = deviator
    s_total = float(r.sum())
    s_others = s_total - r[i]
    f = env.agents[i].utility.f
    denom = (x + s_others) * s_total
    if denom <= 0.0:
        raise ValueError("degenerate report total: shares undefined")
    loss = 0.0
    for j in range(env.k):
        if j == i or r[j] == 0.0:
            continue
        loss -= float(f(r[j] * abs(x - r[i]) / denom))
    return loss


def proportional_deviation_profit(
    deviator: int,
    x: float,
    env: Environment,
    tax: str | None = "as",
) -> tuple[float, float, float]:
    """Decompose a sender's deviation payoff under share-of-total allocation.

    Returns ``(accuracy_loss, image_gain, tax_delta)`` whose sum is the net
    deviation profit:

    - ``accuracy_loss``: the (never positive) damage the deviation does to
      everyone else's published shares, through the sender's own f;
    - ``image_gain``: g of the own share after vs. before deviating (sign of
      x - r);
    - ``tax_delta``: the signed tax contribution.  ``tax="as"`` applies the
      scoring tax against a noiseless prior, contributing -(x - r)^2;
      ``tax=None`` means no transfers (contributes 0).
    """
    if env.index_scheme != "relative":
        raise ValueError("share-of-total deviations need the relative scheme")
    if tax not in ("as", None):
        raise ValueError(f"tax must be 'as' or None, got {tax!r}")
    r = env.qualities
    i = deviator
    s_total = float(r.sum())
    s_others = s_total - r[i]
    if s_others <= 0.0:
        raise ValueError("deviation decomposition needs positive co-truth mass")
    util = env.agents[i].utility
    denom = (x + s_others) * s_total
    accuracy_loss = 0.0
    for j in range(env.k):
        if j == i or r[j] == 0.0:
            continue
        accuracy_loss -= float(util.f(r[j] * abs(x - r[i]) / denom))
    image_gain = float(util.g(x / (x + s_others))) - float(util.g(r[i] / s_total))
    tax_delta = -((x - r[i]) ** 2) if tax == "as" else 0.0
    return accuracy_loss, image_gain, tax_delta
