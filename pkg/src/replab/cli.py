"""Command-line front end: config files in, CSV/JSON tables out.

Configs are sectioned key-value files ([environment], [agents],
[mechanism], [simulation]); a JSON mirror with the same section names is
accepted for programmatic use.  Every file-writing command also emits a
manifest recording the canonical-config digest, so identical manifests
imply identical outputs.  Numeric output uses 12 significant digits, '.'
decimals, and LF line endings regardless of locale.

Exit codes: 0 success, 2 invalid config, 3 runtime/solver failure,
4 profitable deviation found by check-equilibrium.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import (
    hetero_image_participation,
    hetero_system_gain,
    hetero_truth_participation,
    pr_mae,
)
from .core import (
    AS,
    AbsPower,
    Agent,
    Colluder,
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
    UtilitySpec,
    WeightedPR,
)
from .numerics import NormalParams
from .simulator import (
    ScenarioConfig,
    SWEEP_PARAMETERS,
    _resolve_strategy_overrides,
    run_trials,
    sweep as run_sweep,
)
from .strategies import (
    aggregate_sigma_prime,
    deviation_report,
    expected_pr_reputation,
    pr_optimal_self_report,
    solve_y,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_DEVIATION = 4


class ConfigError(ValueError):
    """Invalid configuration file; the message carries a location anchor."""


# ---------------------------------------------------------------------------
# Formatting helpers
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    """12-significant-digit, locale-independent number rendering."""
    return f"{float(value):.12g}"


def _round12(value):
    """Round floats to 12 significant digits for JSON payloads."""
    if isinstance(value, float):
        return float(_fmt(value))
    if isinstance(value, dict):
        return {k: _round12(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round12(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_round12(float(v)) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return _round12(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _write_json(path: Path, payload) -> None:
    text = json.dumps(_round12(payload), indent=2, sort_keys=True) + "\n"
    path.write_text(text, encoding="ascii", newline="\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row)
        )
    path.write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def _write_schema(csv_path: Path, columns: dict[str, str]) -> Path:
    schema_path = csv_path.with_suffix(".schema.json")
    _write_json(
        schema_path,
        {
            "file": csv_path.name,
            "columns": [{"name": k, "description": v} for k, v in columns.items()],
        },
    )
    return schema_path


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Provenance record written beside every file-producing command."""

    command: str
    config_digest: str
    seed: int
    tool_version: str
    output_paths: list[str]


def _digest(canonical: dict) -> str:
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("ascii")).hexdigest()


def _write_manifest(
    out_dir: Path, command: str, canonical: dict, seed: int, paths: list[Path]
) -> None:
    manifest = RunManifest(
        command=command,
        config_digest=_digest(canonical),
        seed=seed,
        tool_version=__version__,
        output_paths=sorted(p.name for p in paths),
    )
    _write_json(out_dir / "manifest.json", dataclasses.asdict(manifest))


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

_AGENT_TYPES = ("truth", "image", "mixed", "malicious", "colluder")
_MECHANISMS = (
    "as",
    "extended_as",
    "fr",
    "simple_averaging",
    "pr",
    "weighted_pr",
    "direct",
)


@dataclass(frozen=True)
class ParsedConfig:
    env: Environment
    mechanism: MechanismSpec
    strategy_mode: str | dict[int, float]
    trials: int
    seed: int
    canonical: dict


def _coerce(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(
            f"[{section}] {key}: expected {kind.__name__}, got {raw!r}"
        ) from None


def _parse_agent_spec(
    section: str, key: str, tokens: dict[str, str], defaults: dict
) -> dict:
    """Normalize one agent's key=value tokens into a canonical dict."""
    where = f"[{section}] {key}"
    if "quality" not in tokens:
        raise ConfigError(f"{where}: missing required field 'quality'")
    kind = tokens.pop("type", "truth").lower()
    if kind not in _AGENT_TYPES:
        raise ConfigError(
            f"{where}: unknown type {kind!r}; expected one of {_AGENT_TYPES}"
        )
    out = {"type": kind}
    common = {"quality", "weight", "sigma", "bias", "p", "g"}
    extras = {
        "malicious": {"low", "high"},
        "colluder": {"clique", "inflate", "bash"},
    }.get(kind, set())
    int_fields = {"clique"}
    for field, raw in tokens.items():
        if field not in common | extras:
            raise ConfigError(
                f"{where}: field {field!r} not valid for type {kind!r}"
            )
        if field == "g":
            out[field] = raw.strip().lower()
        elif field in int_fields:
            out[field] = _coerce(section, f"{key}.{field}", raw, int)
        else:
            out[field] = _coerce(section, f"{key}.{field}", raw, float)
    out.setdefault("sigma", defaults["cross_std"])
    out.setdefault("bias", defaults["cross_mean"])
    out.setdefault("p", 2.0)
    out.setdefault("g", "linear")
    if kind == "truth":
        if out.setdefault("weight", 1.0) != 1.0:
            raise ConfigError(f"{where}: truth agents fix weight = 1")
    elif kind == "image":
        if out.setdefault("weight", 0.0) != 0.0:
            raise ConfigError(f"{where}: image agents fix weight = 0")
    else:
        out.setdefault("weight", 1.0)
    if kind == "malicious":
        out.setdefault("low", 0.0)
        out.setdefault("high", 1.0)
    elif kind == "colluder":
        out.setdefault("clique", 0)
        out.setdefault("inflate", 1.0)
    return out


def _build_payoff(section: str, key: str, g_text: str):
    if g_text == "linear":
        return Linear()
    if g_text.startswith("power:"):
        return Power(q=_coerce(section, f"{key}.g", g_text.split(":", 1)[1], float))
    raise ConfigError(
        f"[{section}] {key}: image payoff must be 'linear' or 'power:<q>', got {g_text!r}"
    )


def _build_agent(index: int, spec: dict) -> Agent:
    section, key = "agents", f"agent{index}"
    kind_name = spec["type"]
    if kind_name == "truth":
        agent_type, weight = Truth(), 1.0
    elif kind_name == "image":
        agent_type, weight = Image(), 0.0
    elif kind_name == "mixed":
        if "weight" not in spec or not 0.0 < spec["weight"] < 1.0:
            raise ConfigError(
                f"[{section}] {key}: mixed agents need weight strictly between 0 and 1"
            )
        agent_type, weight = Mixed(), spec["weight"]
    elif kind_name == "malicious":
        agent_type = MaliciousRandom(
            low=spec.get("low", 0.0), high=spec.get("high", 1.0)
        )
        weight = spec.get("weight", 1.0)
    else:
        agent_type = Colluder(
            clique_id=spec.get("clique", 0),
            inflate=spec.get("inflate", 1.0),
            bash=spec.get("bash"),
        )
        weight = spec.get("weight", 1.0)
    try:
        return Agent(
            id=index,
            quality=Quality(spec["quality"]),
            agent_type=agent_type,
            utility=UtilitySpec(
                f=AbsPower(spec["p"]),
                g=_build_payoff(section, key, spec["g"]),
                truth_weight=weight,
            ),
            cross_obs=NormalParams(spec["bias"], spec["sigma"]),
        )
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


_MECHANISM_FIELDS = {
    "as": set(),
    "extended_as": {"ring", "layers", "second_ring"},
    "fr": set(),
    "simple_averaging": set(),
    "pr": {"a"},
    "weighted_pr": {"a", "weights"},
    "direct": set(),
}


def _build_mechanism(spec: dict) -> MechanismSpec:
    kind = str(spec.get("kind", "as")).lower()
    if kind not in _MECHANISMS:
        raise ConfigError(
            f"[mechanism] kind: unknown mechanism {kind!r}; expected one of {_MECHANISMS}"
        )
    unknown = set(spec) - {"kind"} - _MECHANISM_FIELDS[kind]
    if unknown:
        raise ConfigError(
            f"[mechanism]: keys {sorted(unknown)} not valid for kind {kind!r}"
        )
    try:
        if kind == "as":
            return AS()
        if kind == "fr":
            return FR()
        if kind == "simple_averaging":
            return SimpleAveraging()
        if kind == "direct":
            return DirectObservation()
        if kind == "pr":
            return PR(a=float(spec.get("a", 2.0)))
        if kind == "weighted_pr":
            weights = spec.get("weights")
            if weights is None:
                raise ConfigError("[mechanism] weights: required for weighted_pr")
            return WeightedPR(a=float(spec.get("a", 2.0)), weights=tuple(weights))
        ring = tuple(spec["ring"]) if spec.get("ring") is not None else None
        second = (
            tuple(spec["second_ring"]) if spec.get("second_ring") is not None else None
        )
        return ExtendedAS(
            ring=ring, layers=int(spec.get("layers", 1)), second_ring=second
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[mechanism]: {exc}") from None


def _int_list(section: str, key: str, raw: str) -> list[int]:
    try:
        return [int(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected integers, got {raw!r}") from None


def _float_list(section: str, key: str, raw: str) -> list[float]:
    try:
        return [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected numbers, got {raw!r}") from None


def _sections_from_ini(path: Path) -> dict:
    parser = configparser.ConfigParser()
    try:
        with path.open(encoding="utf-8") as handle:
            parser.read_file(handle, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None

    env_sec = dict(parser.items("environment")) if parser.has_section("environment") else {}
    sections: dict = {"environment": env_sec}

    agents = []
    if parser.has_section("agents"):
        keys = sorted(
            parser.options("agents"),
            key=lambda name: (len(name), name),
        )
        expected = [f"agent{i}" for i in range(len(keys))]
        if keys != expected:
            raise ConfigError(
                "[agents]: entries must be named agent0, agent1, ... without gaps; "
                f"got {keys}"
            )
        for key in keys:
            tokens = {}
            for token in parser.get("agents", key).split():
                if "=" not in token:
                    raise ConfigError(
                        f"[agents] {key}: malformed token {token!r}; expected field=value"
                    )
                field, raw = token.split("=", 1)
                tokens[field.strip().lower()] = raw.strip()
            agents.append(tokens)
    sections["agents"] = agents

    mech: dict = {}
    if parser.has_section("mechanism"):
        for key, raw in parser.items("mechanism"):
            if key in ("ring", "second_ring"):
                mech[key] = _int_list("mechanism", key, raw)
            elif key == "weights":
                mech[key] = _float_list("mechanism", key, raw)
            elif key == "layers":
                mech[key] = _coerce("mechanism", key, raw, int)
            elif key == "a":
                mech[key] = _coerce("mechanism", key, raw, float)
            else:
                mech[key] = raw.strip()
    sections["mechanism"] = mech

    sim: dict = {}
    if parser.has_section("simulation"):
        overrides = {}
        for key, raw in parser.items("simulation"):
            if key.startswith("override"):
                suffix = key[len("override") :]
                if not suffix.isdigit():
                    raise ConfigError(
                        f"[simulation] {key}: overrides must be named override<agent-id>"
                    )
                overrides[int(suffix)] = _coerce("simulation", key, raw, float)
            elif key in ("trials", "seed"):
                sim[key] = _coerce("simulation", key, raw, int)
            else:
                sim[key] = raw.strip()
        if overrides:
            sim["overrides"] = overrides
    sections["simulation"] = sim
    return sections


def _sections_from_json(path: Path) -> dict:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path.name}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(payload, dict):
        raise ConfigError(f"{path.name}: top level must be an object of sections")
    agents = payload.get("agents", [])
    if not isinstance(agents, list):
        raise ConfigError("[agents]: must be a list of agent objects")
    sim = dict(payload.get("simulation", {}))
    overrides = sim.get("overrides")
    if overrides is not None:
        try:
            sim["overrides"] = {int(k): float(v) for k, v in dict(overrides).items()}
        except (TypeError, ValueError):
            raise ConfigError(
                "[simulation] overrides: expected an object of agent-id -> report"
            ) from None
    return {
        "environment": dict(payload.get("environment", {})),
        "agents": [
            {str(k).lower(): v for k, v in dict(entry).items()} for entry in agents
        ],
        "mechanism": dict(payload.get("mechanism", {})),
        "simulation": sim,
    }


def parse_config(
    path: str | Path, seed: int | None = None, trials: int | None = None
) -> ParsedConfig:
    """Parse, validate, and canonicalize a scenario config.

    ``seed``/``trials`` are command-line overrides applied before the
    canonical form (and therefore the digest) is computed.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    sections = (
        _sections_from_json(path)
        if path.suffix.lower() == ".json"
        else _sections_from_ini(path)
    )

    env_sec = sections["environment"]
    unknown = set(env_sec) - {
        "index_scheme",
        "system_mean",
        "system_std",
        "cross_mean",
        "cross_std",
        "clamp",
    }
    if unknown:
        raise ConfigError(f"[environment]: unknown keys {sorted(unknown)}")

    def env_float(key: str, default: float) -> float:
        raw = env_sec.get(key, default)
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return float(raw)
        return _coerce("environment", key, str(raw), float)

    env_defaults = {
        "index_scheme": str(env_sec.get("index_scheme", "absolute")).lower(),
        "system_mean": env_float("system_mean", 0.0),
        "system_std": env_float("system_std", 0.1),
        "cross_mean": env_float("cross_mean", 0.0),
        "cross_std": env_float("cross_std", 0.1),
        "clamp": (
            env_sec["clamp"]
            if isinstance(env_sec.get("clamp"), bool)
            else _coerce("environment", "clamp", str(env_sec.get("clamp", "false")), bool)
        ),
    }

    raw_agents = sections["agents"]
    if not raw_agents:
        raise ConfigError("[agents]: at least two agents are required (K >= 2)")
    agent_specs = []
    for i, entry in enumerate(raw_agents):
        tokens = {k: str(v) for k, v in entry.items()}
        agent_specs.append(_parse_agent_spec("agents", f"agent{i}", tokens, env_defaults))
    agents = tuple(_build_agent(i, spec) for i, spec in enumerate(agent_specs))

    try:
        env = Environment(
            agents=agents,
            system_obs=NormalParams(
                env_defaults["system_mean"], env_defaults["system_std"]
            ),
            index_scheme=env_defaults["index_scheme"],
            clamp_observations=env_defaults["clamp"],
        )
    except ValueError as exc:
        raise ConfigError(f"[agents]: {exc}") from None

    mechanism = _build_mechanism(sections["mechanism"])

    sim = sections["simulation"]
    unknown = set(sim) - {"trials", "seed", "strategy", "overrides"}
    if unknown:
        raise ConfigError(f"[simulation]: unknown keys {sorted(unknown)}")
    strategy = str(sim.get("strategy", "equilibrium")).lower()
    overrides = sim.get("overrides", {})
    if strategy == "equilibrium":
        if overrides:
            raise ConfigError(
                "[simulation]: overrides require strategy = custom"
            )
        strategy_mode: str | dict[int, float] = "equilibrium"
    elif strategy == "custom":
        strategy_mode = dict(overrides)
    else:
        raise ConfigError(
            f"[simulation] strategy: expected 'equilibrium' or 'custom', got {strategy!r}"
        )
    resolved_trials = trials if trials is not None else int(sim.get("trials", 10_000))
    resolved_seed = seed if seed is not None else int(sim.get("seed", 0))

    canonical = {
        "environment": env_defaults,
        "agents": agent_specs,
        "mechanism": {
            "kind": str(sections["mechanism"].get("kind", "as")).lower(),
            **{
                k: (list(v) if isinstance(v, (list, tuple)) else v)
                for k, v in sections["mechanism"].items()
                if k != "kind"
            },
        },
        "simulation": {
            "trials": resolved_trials,
            "seed": resolved_seed,
            "strategy": strategy,
            "overrides": {str(k): v for k, v in overrides.items()},
        },
    }

    try:
        scenario = ScenarioConfig(
            env=env,
            mechanism=mechanism,
            strategy_mode=strategy_mode,
            trials=resolved_trials,
            seed=resolved_seed,
        )
    except ValueError as exc:
        raise ConfigError(f"[simulation]: {exc}") from None
    return ParsedConfig(
        env=scenario.env,
        mechanism=scenario.mechanism,
        strategy_mode=scenario.strategy_mode,
        trials=scenario.trials,
        seed=scenario.seed,
        canonical=canonical,
    )


def _parse_grid(text: str) -> list[float]:
    """Grid syntax: 'lo:hi:n' for n evenly spaced points, or 'a,b,c'."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid {text!r}: expected lo:hi:count")
        try:
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError(f"grid {text!r}: expected lo:hi:count") from None
        if count < 1:
            raise ConfigError(f"grid {text!r}: count must be >= 1")
        return [float(v) for v in np.linspace(lo, hi, count)]
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"grid {text!r}: expected numbers") from None


# ---------------------------------------------------------------------------
# Command plumbing
# ---------------------------------------------------------------------------


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    """Map exception families onto the exit-code contract."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except ValueError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except RuntimeError as exc:
            _fail(EXIT_RUNTIME, str(exc))

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@click.group()
@click.version_option(version=__version__, prog_name="replab")
def main() -> None:
    """Reputation-mechanism laboratory: simulate, sweep, and audit."""


@main.command("run")
@click.argument("config_path", type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--trials", type=int, default=None, help="Override the config trial count.")
@click.option("--workers", type=int, default=1, show_default=True, help="Worker threads.")
@_guarded
def cmd_run(config_path, out_dir, seed, trials, workers):
    """Simulate one scenario; write stats.json and per_agent.csv."""
    parsed = parse_config(config_path, seed=seed, trials=trials)
    config = ScenarioConfig(
        env=parsed.env,
        mechanism=parsed.mechanism,
        strategy_mode=parsed.strategy_mode,
        trials=parsed.trials,
        seed=parsed.seed,
    )
    stats = run_trials(config, workers=workers)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats_path = out / "stats.json"
    _write_json(
        stats_path,
        {
            "mae_mean": stats.mae_mean,
            "mae_stderr": stats.mae_stderr,
            "budget_mean": stats.budget_mean,
            "budget_max_abs": stats.budget_max_abs,
            "trials": stats.trials,
            "per_agent_reputation_mean": stats.per_agent_reputation_mean,
            "per_agent_utility_mean": stats.per_agent_utility_mean,
        },
    )
    agent_csv = out / "per_agent.csv"
    _write_csv(
        agent_csv,
        ["agent_id", "quality", "reputation_mean", "utility_mean"],
        [
            [
                agent.id,
                float(agent.quality),
                stats.per_agent_reputation_mean[i],
                stats.per_agent_utility_mean[i],
            ]
            for i, agent in enumerate(parsed.env.agents)
        ],
    )
    schema = _write_schema(
        agent_csv,
        {
            "agent_id": "Agent identifier (row order matches the config)",
            "quality": "True quality from the config",
            "reputation_mean": "Mean published reputation over all trials",
            "utility_mean": "Mean realized utility over all trials",
        },
    )
    _write_manifest(
        out, "run", parsed.canonical, parsed.seed, [stats_path, agent_csv, schema]
    )
    click.echo(f"wrote {stats_path} ({stats.trials} trials, mae {_fmt(stats.mae_mean)})")


@main.command("sweep")
@click.argument("config_path", type=click.Path())
@click.option("--parameter", required=True, type=click.Choice(SWEEP_PARAMETERS))
@click.option("--grid", "grid_text", required=True, help="lo:hi:count or comma list.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@_guarded
def cmd_sweep(config_path, parameter, grid_text, out_dir, seed, trials, workers):
    """Run a scenario across a parameter grid; write sweep.csv."""
    parsed = parse_config(config_path, seed=seed, trials=trials)
    grid = _parse_grid(grid_text)
    config = ScenarioConfig(
        env=parsed.env,
        mechanism=parsed.mechanism,
        strategy_mode=parsed.strategy_mode,
        trials=parsed.trials,
        seed=parsed.seed,
    )
    rows = run_sweep(config, parameter, grid, workers=workers)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = [key for key in rows[0] if key != "parameter"]
    csv_path = out / "sweep.csv"
    _write_csv(csv_path, columns, [[row[c] for c in columns] for row in rows])
    descriptions = {
        "value": f"Swept value of {parameter}",
        "mae_mean": "Mean total absolute error across trials",
        "mae_stderr": "Standard error of the total absolute error",
        "budget_mean": "Mean net tax across trials",
        "budget_max_abs": "Largest per-trial absolute net tax",
        "trials": "Trial count per grid point",
        "averaging_mae": "Closed-form simple-averaging error at this noise level",
        "y": "Closed-form band offset solving the first-order condition",
        "e_m": "Closed-form expected mechanism error per agent",
        "expected_reputation": "Closed-form mean published reputation of the representative sender",
    }
    schema = _write_schema(csv_path, {c: descriptions[c] for c in columns})
    canonical = {**parsed.canonical, "sweep": {"parameter": parameter, "grid": grid}}
    _write_manifest(out, "sweep", canonical, parsed.seed, [csv_path, schema])
    click.echo(f"wrote {csv_path} ({len(rows)} grid points)")


@main.command("figures")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--sigma-prime", type=float, default=0.1, show_default=True)
@click.option("--quality", "r_value", type=float, default=0.5, show_default=True)
@click.option("--points", type=int, default=50, show_default=True)
@_guarded
def cmd_figures(out_dir, sigma_prime, r_value, points):
    """Emit the band-mechanism design curves as CSV tables.

    fig1: band offset y versus the band multiplier a.
    fig2: expected mechanism error versus a, against plain averaging.
    fig3: expected published reputation versus a, against the true quality.
    """
    if sigma_prime <= 0.0:
        raise ConfigError(f"--sigma-prime must be positive, got {sigma_prime}")
    if not 0.0 <= r_value <= 1.0:
        raise ConfigError(f"--quality must lie in [0, 1], got {r_value}")
    if points < 2:
        raise ConfigError(f"--points must be >= 2, got {points}")
    grid = [float(a) for a in np.linspace(0.5, 5.0, points)]
    averaging = math.sqrt(2.0 / math.pi) * sigma_prime

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    fig1_rows, fig2_rows, fig3_rows = [], [], []
    for a in grid:
        y = solve_y(a)
        fig1_rows.append([a, y])
        fig2_rows.append([a, pr_mae(a, sigma_prime), averaging])
        eq = pr_optimal_self_report(r_value, sigma_prime, a)
        fig3_rows.append(
            [
                a,
                expected_pr_reputation(eq.x_star, r_value, sigma_prime, a * sigma_prime),
                r_value,
            ]
        )

    fig1 = out / "fig1.csv"
    _write_csv(fig1, ["a", "y"], fig1_rows)
    paths.append(fig1)
    paths.append(
        _write_schema(
            fig1,
            {
                "a": "Band multiplier (tolerance = a * sigma')",
                "y": "Equilibrium band offset in units of a * sigma'",
            },
        )
    )
    fig2 = out / "fig2.csv"
    _write_csv(fig2, ["a", "e_m", "averaging_mae"], fig2_rows)
    paths.append(fig2)
    paths.append(
        _write_schema(
            fig2,
            {
                "a": "Band multiplier",
                "e_m": "Expected mechanism error per agent at the optimal self-report",
                "averaging_mae": "Simple-averaging error sqrt(2/pi) * sigma'",
            },
        )
    )
    fig3 = out / "fig3.csv"
    _write_csv(fig3, ["a", "expected_reputation", "baseline_r"], fig3_rows)
    paths.append(fig3)
    paths.append(
        _write_schema(
            fig3,
            {
                "a": "Band multiplier",
                "expected_reputation": "Mean published reputation at the optimal self-report",
                "baseline_r": "True quality of the representative sender",
            },
        )
    )
    canonical = {
        "figures": {"sigma_prime": sigma_prime, "quality": r_value, "grid": grid}
    }
    _write_manifest(out, "figures", canonical, 0, paths)
    click.echo(f"wrote fig1.csv fig2.csv fig3.csv in {out}")


@main.command("check-equilibrium")
@click.argument("config_path", type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--trials", type=int, default=100_000, show_default=True)
@click.option("--grid", "grid_points", type=int, default=201, show_default=True)
@_guarded
def cmd_check_equilibrium(config_path, seed, trials, grid_points):
    """Audit the configured strategy profile for profitable deviations.

    Each agent's claimed report is scanned against a deviation grid under
    common random numbers; exit code 4 flags a deviation that clears both
    the grid resolution and three standard errors.
    """
    parsed = parse_config(config_path, seed=seed)
    env, mechanism = parsed.env, parsed.mechanism
    sigma_prime = aggregate_sigma_prime(env)
    profile = _resolve_strategy_overrides(
        env, mechanism, sigma_prime, parsed.strategy_mode
    )
    cross_channel = isinstance(mechanism, SimpleAveraging)

    any_profitable = False
    click.echo("agent  claimed    best       gain         stderr       verdict")
    for i, agent in enumerate(env.agents):
        if isinstance(agent.agent_type, (MaliciousRandom, Colluder)):
            click.echo(f"{i:<6d} skipped (randomized/colluding reporter)")
            continue
        claimed = None if cross_channel else profile.get(agent.id)
        report = deviation_report(
            i,
            mechanism,
            env,
            others_strategy=profile,
            trials=trials,
            grid=grid_points,
            seed=parsed.seed,
            claimed=claimed,
        )
        verdict = "DEVIATES" if report.profitable else "ok"
        any_profitable = any_profitable or report.profitable
        click.echo(
            f"{i:<6d} {_fmt(report.claimed):<10s} {_fmt(report.best):<10s} "
            f"{_fmt(report.gain):<12s} {_fmt(report.gain_stderr):<12s} {verdict}"
        )
    if any_profitable:
        click.echo("profitable deviation found", err=True)
        sys.exit(EXIT_DEVIATION)
    click.echo("no profitable deviation")


@main.command("report")
@click.argument("config_path", type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--trials", type=int, default=20_000, show_default=True)
@_guarded
def cmd_report(config_path, seed, trials):
    """Participation thresholds per agent plus the system-gain verdict."""
    parsed = parse_config(config_path, seed=seed)
    env = parsed.env
    k = env.k

    click.echo("agent  type       quality  u_in(closed)  u_out(closed)  joins  u_in(mc)     u_out(mc)    joins  threshold")
    for i, agent in enumerate(env.agents):
        kind = type(agent.agent_type).__name__
        r = float(agent.quality)
        if isinstance(agent.agent_type, Truth):
            closed = hetero_truth_participation(
                env, focal=agent.id, trials=trials, seed=parsed.seed, method="auto"
            )
            mc = hetero_truth_participation(
                env, focal=agent.id, trials=trials, seed=parsed.seed, method="mc"
            )
            sigma = agent.cross_obs.std
            threshold = (
                f"rho {_fmt(closed.rho)} <= 4*sigma^2 {_fmt(4 * sigma * sigma)}: "
                f"{'yes' if closed.rho <= 4 * sigma * sigma else 'no'}"
            )
        elif agent.utility.truth_weight < 1.0 and not isinstance(
            agent.agent_type, (MaliciousRandom, Colluder)
        ):
            closed = hetero_image_participation(
                agent, env, trials=trials, seed=parsed.seed, method="auto"
            )
            mc = hetero_image_participation(
                agent, env, trials=trials, seed=parsed.seed, method="mc"
            )
            bound = 4.0 * (1.0 - r)
            threshold = (
                f"gamma {_fmt(closed.gamma)} <= 4(1-r) {_fmt(bound)}: "
                f"{'yes' if closed.gamma <= bound else 'no'}"
            )
        else:
            click.echo(f"{i:<6d} {kind:<10s} {_fmt(r):<8s} randomized reporter, no participation model")
            continue
        click.echo(
            f"{i:<6d} {kind:<10s} {_fmt(r):<8s} "
            f"{_fmt(closed.u_in):<13s} {_fmt(closed.u_out):<14s} "
            f"{'yes' if closed.participates else 'no':<6s} "
            f"{_fmt(mc.u_in):<12s} {_fmt(mc.u_out):<12s} "
            f"{'yes' if mc.participates else 'no':<6s} {threshold}"
        )

    gains = hetero_system_gain(env)
    image_count = sum(1 for ag in env.agents if ag.utility.truth_weight < 1.0)
    rho = image_count / (k - 1)
    budget = 2.0 * math.sqrt(2.0 / math.pi) * env.system_obs.std
    click.echo(
        f"system gain: {'yes' if gains else 'no'} "
        f"(rho {_fmt(rho)} vs 2*sqrt(2/pi)*sigma {_fmt(budget)})"
    )


if __name__ == "__main__":
    main()
