"""Command-line front end: batch runs, config files, caching, reports.

Subcommands: basis, bound, seesaw, sweep, presets.  Exit status is 0 when
every solve finished, 1 on usage/config errors, 2 when any solve Failed.
"""
from __future__ import annotations

import hashlib
import os
import sys
import time
from pathlib import Path
from typing import Optional

import click

from . import __version__
from .presets import Preset, preset, preset_names
from .sampling import Field
from .sdp import (
    LinearFunctional,
    SolveStatus,
    SolverSettings,
    assemble_hybrid_tripartite,
    assemble_relaxation,
    dump_problem,
    rank_sweep,
    upper_bound,
)
from .seesaw import seesaw
from .span import load_basis, sample_span, save_basis
from .words import (
    BellScenario,
    HybridScenario,
    Measurement,
    OperatorSymbol,
    Party,
    RankVector,
    Scenario,
    TracialScenario,
    balanced_ranks,
    validate_ranks,
)
from .words import Kind

# spec'd exit codes: 1 for usage errors (click's default is 2, which we
# reserve for failed solves)
click.UsageError.exit_code = 1

_PARTY_LETTERS = {"E": 0, "F": 1, "G": 2, "H": 3}


class ConfigError(click.ClickException):
    exit_code = 1

    def __init__(self, path, line, col, message):
        super().__init__(f"{path}:{line}:{col}: {message}")


# -- scenario config files -----------------------------------------------


def parse_scenario(path) -> tuple[Scenario, LinearFunctional, dict]:
    """Parse a scenario config file.

    Three sections: [scenario], [functional], [solver].  Scenario keys are
    either `preset = NAME` (plus optional dim/level/field overrides) or an
    explicit description (type, settings, outcomes, dim, field, level).
    Functional rows are either `name = X` or term rows `E:x,a F:y,b coeff`
    (letters E..H are the parties of a Bell scenario; P:x and M:y,b the
    preparations and measurements of a tracial one).  Unknown keys are
    rejected.
    """
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise click.UsageError(f"cannot read {path}: {err}")
    for ln, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if line.strip().startswith("["):
            name = line.strip()
            if not name.endswith("]"):
                raise ConfigError(path, ln, len(line), "unterminated section header")
            current = name[1:-1]
            if current not in ("scenario", "functional", "solver"):
                raise ConfigError(path, ln, 2, f"unknown section [{current}]")
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ConfigError(path, ln, 1, "content before any [section]")
        sections[current].append((ln, line.strip()))
    if "scenario" not in sections:
        raise ConfigError(path, 1, 1, "missing [scenario] section")

    scen_kv = _key_values(path, sections["scenario"])
    solver_kv = _key_values(path, sections.get("solver", []))
    scenario, functional = _build_scenario(path, scen_kv, sections.get("functional", []))
    overrides = _solver_overrides(path, solver_kv)
    if "ranks" in scen_kv:
        ln, text = scen_kv["ranks"]
        try:
            rv = RankVector.parse(text)
            validate_ranks(scenario, rv)
        except ValueError as err:
            raise ConfigError(path, ln, 1, f"ranks: {err}")
        overrides["ranks"] = rv
    return scenario, functional, overrides


def _key_values(path, rows):
    out = {}
    for ln, line in rows:
        if "=" not in line:
            raise ConfigError(path, ln, 1, f"expected key = value, got {line!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(path, ln, 1, f"duplicate key {key!r}")
        out[key] = (ln, val.strip().strip('"'))
    return out


_SCENARIO_KEYS = {
    "preset", "type", "settings", "outcomes", "preparations",
    "dim", "field", "level", "ranks",
}


def _build_scenario(path, kv, functional_rows):
    for key, (ln, _) in kv.items():
        if key not in _SCENARIO_KEYS:
            raise ConfigError(path, ln, 1, f"unknown scenario key {key!r}")

    def get(key, default=None):
        return kv[key][1] if key in kv else default

    def ints(key, default=None):
        raw = get(key, default)
        try:
            return _parse_ints(raw)
        except ValueError:
            raise ConfigError(
                path, kv[key][0], 1, f"{key}: expected comma-separated integers, got {raw!r}"
            )

    def num(key, default):
        raw = get(key, default)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(path, kv[key][0], 1, f"{key}: expected an integer, got {raw!r}")

    field = _parse_field(get("field", "complex"))
    level = num("level", "2")
    if "preset" in kv:
        p = _load_preset(get("preset"))
        dims = ints("dim") if "dim" in kv else None
        scenario = p.scenario(dims=dims, level=num("level", str(p.default_level)), field=field)
        functional = p.functional
        if functional_rows and any("=" not in r for _, r in functional_rows):
            ln = functional_rows[0][0]
            raise ConfigError(path, ln, 1, "term rows not allowed with a preset scenario")
        return scenario, functional

    kind = get("type", "bell")
    dims = ints("dim", "2")
    if kind == "bell":
        settings = ints("settings", "2,2")
        outcomes = ints("outcomes", "2")
        if len(outcomes) == 1:
            outcomes = outcomes * len(settings)
        if len(dims) == 1:
            dims = dims * len(settings)
        if not (len(settings) == len(outcomes) == len(dims)):
            ln = kv.get("settings", kv.get("dim", ("?", "")))[0]
            raise ConfigError(path, ln, 1, "settings/outcomes/dim: per-party counts disagree")
        names = "ABCD"
        parties = tuple(
            Party(names[i], dims[i], tuple(Measurement(outcomes[i]) for _ in range(settings[i])))
            for i in range(len(settings))
        )
        scenario = BellScenario(field=field, parties=parties, level=level)
    elif kind == "tracial":
        scenario = TracialScenario(
            field=field,
            preparations=num("preparations", "2"),
            settings=tuple(
                Measurement(o) for o in ints("outcomes", "2") * num("settings", "1")
            )[: num("settings", "1")],
            dim=dims[0],
            level=level,
        )
    else:
        ln = kv["type"][0]
        raise ConfigError(path, ln, 1, f"unknown scenario type {kind!r}")

    functional = _parse_functional(path, scenario, functional_rows)
    return scenario, functional


def _parse_functional(path, scenario, rows) -> LinearFunctional:
    name = "custom"
    terms = []
    for ln, line in rows:
        if "=" in line and line.split("=", 1)[0].strip() == "name":
            name = line.split("=", 1)[1].strip().strip('"')
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise ConfigError(path, ln, 1, "term row needs factors and a coefficient")
        try:
            coeff = float(tokens[-1])
        except ValueError:
            raise ConfigError(path, ln, line.rfind(tokens[-1]) + 1,
                              f"coefficient {tokens[-1]!r} is not a number")
        syms = [_parse_factor(path, ln, line, tok, scenario) for tok in tokens[:-1]]
        terms.append(((syms[0],), tuple(syms[1:]), coeff))
    if not terms:
        raise ConfigError(path, rows[0][0] if rows else 1, 1, "functional has no terms")
    return LinearFunctional(name, tuple(terms))


def _parse_factor(path, ln, line, tok, scenario) -> OperatorSymbol:
    col = line.find(tok) + 1
    head, _, rest = tok.partition(":")
    nums = rest.split(",") if rest else []
    try:
        nums = [int(x) for x in nums]
    except ValueError:
        raise ConfigError(path, ln, col, f"bad factor {tok!r}")
    if isinstance(scenario, TracialScenario):
        if head == "P" and len(nums) == 1:
            if not 0 <= nums[0] < scenario.preparations:
                raise ConfigError(path, ln, col, f"preparation {nums[0]} out of range")
            return OperatorSymbol("T", nums[0], 0, Kind.STATE_PREP)
        if head == "M" and len(nums) == 2:
            y, b = nums
            if not 0 <= y < len(scenario.settings) or not 0 <= b < scenario.settings[y].outcomes:
                raise ConfigError(path, ln, col, f"measurement {tok!r} out of range")
            return OperatorSymbol("T", y, b)
        raise ConfigError(path, ln, col, f"expected P:x or M:y,b, got {tok!r}")
    if head in _PARTY_LETTERS and len(nums) == 2:
        idx = _PARTY_LETTERS[head]
        if idx >= len(scenario.parties):
            raise ConfigError(path, ln, col, f"party {head} not in scenario")
        party = scenario.parties[idx]
        x, a = nums
        if not 0 <= x < len(party.settings) or not 0 <= a < party.settings[x].outcomes:
            raise ConfigError(path, ln, col, f"factor {tok!r} out of range")
        return OperatorSymbol(party.name, x, a)
    raise ConfigError(path, ln, col, f"expected LETTER:setting,outcome, got {tok!r}")


def _solver_overrides(path, kv):
    out = {}
    known = {"seed": int, "tol": float, "stall": int, "jobs": int}
    for key, (ln, val) in kv.items():
        if key not in known:
            raise ConfigError(path, ln, 1, f"unknown solver key {key!r}")
        try:
            out[key] = known[key](val)
        except ValueError:
            raise ConfigError(path, ln, 1, f"{key}: bad value {val!r}")
    return out


# -- option plumbing -----------------------------------------------------


def _parse_ints(text) -> tuple[int, ...]:
    return tuple(int(x) for x in str(text).split(","))


def _parse_field(text) -> Field:
    try:
        return {"complex": Field.COMPLEX, "real": Field.REAL}[text.lower()]
    except KeyError:
        raise click.UsageError(f"--field must be complex or real, got {text!r}")


def _load_preset(name) -> Preset:
    try:
        return preset(name)
    except KeyError as err:
        raise click.UsageError(str(err.args[0]))


def shared_options(fn):
    opts = [
        click.option("--preset", "preset_name", default=None, help="named scenario from the registry"),
        click.option("--scenario", "scenario_file", default=None, type=click.Path(), help="scenario config file"),
        click.option("--dim", default=None, help="dimension(s), N or N,N"),
        click.option("--level", default=None, type=int, help="hierarchy level (word-length truncation)"),
        click.option("--field", default="complex", help="complex|real"),
        click.option("--ranks", "ranks_spec", default=None, help="rank vector r,r;r,r;... or 'all'"),
        click.option("--seed", default=0, type=int, show_default=True),
        click.option("--tol", default=1e-8, type=float, show_default=True, help="span extraction tolerance"),
        click.option("--stall", default=8, type=int, show_default=True, help="dependent samples before the span is declared complete"),
        click.option("--cache", "cache_dir", default=None, type=click.Path(), help="basis cache directory (or $DIMCERT_CACHE)"),
        click.option("--out", "out_file", default=None, type=click.Path(), help="write the report here as well"),
        click.option("--jobs", default=1, type=int, show_default=True, help="parallel solve jobs for sweeps"),
        click.option("--dump-sdp", is_flag=True, help="emit the sparse standard-form SDP"),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _resolve(preset_name, scenario_file, dim, level, field) -> tuple[Scenario, LinearFunctional, dict]:
    if (preset_name is None) == (scenario_file is None):
        raise click.UsageError("exactly one of --preset or --scenario is required")
    if scenario_file is not None:
        scenario, functional, overrides = parse_scenario(scenario_file)
        return scenario, functional, overrides
    p = _load_preset(preset_name)
    dims = _parse_ints(dim) if dim else None
    try:
        scenario = p.scenario(dims=dims, level=level, field=_parse_field(field))
    except ValueError as err:
        raise click.UsageError(str(err))
    return scenario, p.functional, {}


def _cache_dir(cache_dir) -> Optional[Path]:
    path = cache_dir or os.environ.get("DIMCERT_CACHE")
    if not path:
        return None
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cache_key(scenario, ranks, seed, tol, stall) -> str:
    text = f"{scenario.content_hash()}|{ranks}|{seed}|{tol}|{stall}"
    return hashlib.sha256(text.encode()).hexdigest()[:20]


def _cached_span(scenario, ranks, seed, tol, stall, cache):
    """sample_span with an optional on-disk cache keyed by all inputs."""
    hermitian = isinstance(scenario, HybridScenario)
    if cache is not None:
        path = cache / f"{_cache_key(scenario, ranks, seed, tol, stall)}.basis"
        if path.exists():
            return load_basis(path, scenario), True
    basis = sample_span(scenario, ranks, seed=seed, tol=tol, stall=stall, hermitian=hermitian)
    if cache is not None:
        save_basis(path, basis)
    return basis, False


def _pick_ranks(scenario, ranks_spec) -> RankVector:
    if ranks_spec is None:
        return balanced_ranks(scenario)
    if ranks_spec == "all":
        raise click.UsageError("--ranks all only makes sense for `dimcert sweep`")
    try:
        rv = RankVector.parse(ranks_spec)
        validate_ranks(scenario, rv)
    except ValueError as err:
        raise click.UsageError(f"--ranks: {err}")
    return rv


# -- reports -------------------------------------------------------------


def _report_header(command, scenario, functional, seed) -> list[str]:
    return [
        "dimcert-report v1",
        f"tool_version: {__version__}",
        f"command: {command}",
        f"scenario: {scenario.describe()}",
        f"scenario_hash: {scenario.content_hash()}",
        f"functional: {functional.name}",
        f"seed: {seed}",
    ]


def _rank_table(rows) -> list[str]:
    header = f"{'ranks':<24} {'value':>16} {'status':<10} {'gap':>9} {'span':>5} {'time_s':>7}"
    out = ["[results]", header]
    for ranks, res, span, dt in rows:
        val = f"{res.value:.9f}" if res.value == res.value else "nan"
        out.append(
            f"{str(ranks):<24} {val:>16} {res.status.name:<10} "
            f"{res.duality_gap:>9.1e} {span:>5} {dt:>7.1f}"
        )
    return out


def _emit(lines, out_file):
    text = "\n".join(lines) + "\n"
    click.echo(text, nl=False)
    if out_file:
        Path(out_file).write_text(text)


def _exit_for(failed: bool):
    sys.exit(2 if failed else 0)


# -- commands ------------------------------------------------------------


@click.group()
@click.version_option(__version__)
def main():
    """Certified dimension-bounded upper bounds and see-saw lower bounds."""


@main.command()
@shared_options
def basis(preset_name, scenario_file, dim, level, field, ranks_spec, seed, tol,
          stall, cache_dir, out_file, jobs, dump_sdp):
    """Sample the moment-matrix span and report (and cache) its basis."""
    scenario, functional, overrides = _resolve(preset_name, scenario_file, dim, level, field)
    seed = overrides.get("seed", seed)
    tol = overrides.get("tol", tol)
    stall = overrides.get("stall", stall)
    ranks = overrides.get("ranks") or _pick_ranks(scenario, ranks_spec)
    cache = _cache_dir(cache_dir)
    t0 = time.perf_counter()
    b, hit = _cached_span(scenario, ranks, seed, tol, stall, cache)
    dt = time.perf_counter() - t0
    lines = _report_header("basis", scenario, functional, seed) + [
        f"ranks: {ranks}",
        f"span_dimension: {b.n}",
        f"samples_used: {b.sample_count}",
        f"cache: {'hit' if hit else ('stored' if cache else 'off')}",
        f"time_s: {dt:.2f}",
    ]
    _emit(lines, out_file)
    _exit_for(False)


@main.command()
@shared_options
def bound(preset_name, scenario_file, dim, level, field, ranks_spec, seed, tol,
          stall, cache_dir, out_file, jobs, dump_sdp):
    """Upper bound at one rank vector, sandwiched by a see-saw lower bound."""
    scenario, functional, overrides = _resolve(preset_name, scenario_file, dim, level, field)
    seed = overrides.get("seed", seed)
    tol = overrides.get("tol", tol)
    stall = overrides.get("stall", stall)
    ranks = overrides.get("ranks") or _pick_ranks(scenario, ranks_spec)
    cache = _cache_dir(cache_dir)

    t0 = time.perf_counter()
    if isinstance(scenario, HybridScenario):
        problem = assemble_hybrid_tripartite(scenario, functional, ranks, seed=seed, tol=tol, stall=stall)
        span_dim = problem.basis.n if problem.basis is not None else 0
    else:
        b, _ = _cached_span(scenario, ranks, seed, tol, stall, cache)
        problem = assemble_relaxation(functional, b, scenario.normalization, label=str(ranks))
        span_dim = b.n
    if dump_sdp:
        dump_problem(problem, sys.stdout)
    from .sdp import solve

    res = solve(problem)
    t1 = time.perf_counter()
    point = seesaw(scenario, functional, seed=seed, restarts=10)
    t2 = time.perf_counter()

    lines = _report_header("bound", scenario, functional, seed)
    lines += _rank_table([(ranks, res, span_dim, t1 - t0)])
    lines += [
        "[summary]",
        f"upper_bound: {res.value:.9f}",
        f"lower_bound: {point.value:.9f}",
        f"seesaw_restart: {point.restart}",
        f"seesaw_time_s: {t2 - t1:.1f}",
    ]
    if point.value > res.value + 1e-6:
        lines.append("warning: numerical paradox, lower bound exceeds upper bound")
    _emit(lines, out_file)
    _exit_for(res.status == SolveStatus.FAILED)


@main.command("seesaw")
@shared_options
@click.option("--restarts", default=20, type=int, show_default=True)
def seesaw_cmd(preset_name, scenario_file, dim, level, field, ranks_spec, seed,
               tol, stall, cache_dir, out_file, jobs, dump_sdp, restarts):
    """See-saw lower bound from explicit finite-dimensional realizations."""
    scenario, functional, overrides = _resolve(preset_name, scenario_file, dim, level, field)
    seed = overrides.get("seed", seed)
    t0 = time.perf_counter()
    point = seesaw(scenario, functional, seed=seed, restarts=restarts)
    dt = time.perf_counter() - t0
    lines = _report_header("seesaw", scenario, functional, seed) + [
        f"lower_bound: {point.value:.9f}",
        f"restarts: {restarts}",
        f"best_restart: {point.restart}",
        f"rounds: {point.rounds}",
        f"time_s: {dt:.1f}",
    ]
    _emit(lines, out_file)
    _exit_for(False)


@main.command()
@shared_options
def sweep(preset_name, scenario_file, dim, level, field, ranks_spec, seed, tol,
          stall, cache_dir, out_file, jobs, dump_sdp):
    """Upper bound maximized over all rank strata, plus see-saw lower bound."""
    scenario, functional, overrides = _resolve(preset_name, scenario_file, dim, level, field)
    seed = overrides.get("seed", seed)
    tol = overrides.get("tol", tol)
    stall = overrides.get("stall", stall)
    jobs = overrides.get("jobs", jobs)
    vectors = None
    if ranks_spec not in (None, "all"):
        rv = _pick_ranks(scenario, ranks_spec)
        vectors = [rv]

    t0 = time.perf_counter()
    report = rank_sweep(scenario, functional, seed=seed, tol=tol, stall=stall,
                        jobs=jobs, rank_vectors=vectors)
    t1 = time.perf_counter()
    point = seesaw(scenario, functional, seed=seed, restarts=10)
    t2 = time.perf_counter()

    lines = _report_header("sweep", scenario, functional, seed)
    lines += _rank_table(
        [(r.ranks, r.result, r.span_dim, 0.0) for r in report.per_rank]
    )
    best = report.best
    lines += [
        "[summary]",
        f"upper_bound: {report.value:.9f}",
        f"best_ranks: {best.ranks if best else 'none'}",
        f"lower_bound: {point.value:.9f}",
        f"combinations: {len(report.per_rank)}",
        f"failed_solves: {sum(1 for r in report.per_rank if r.result.status == SolveStatus.FAILED)}",
        f"sweep_time_s: {t1 - t0:.1f}",
        f"seesaw_time_s: {t2 - t1:.1f}",
    ]
    if report.any_inaccurate:
        lines.append("warning: some strata solved to reduced accuracy")
    if point.value > report.value + 1e-6:
        lines.append("warning: numerical paradox, lower bound exceeds upper bound")
    _emit(lines, out_file)
    _exit_for(report.any_failed)


@main.command("presets")
def presets_cmd():
    """List the registered scenarios."""
    for name in preset_names():
        p = preset(name)
        click.echo(f"{name:<12} {p.description}")
        click.echo(f"{'':<12} dims={','.join(map(str, p.default_dims))} "
                   f"level={p.default_level} classical={p.classical_bound}")
        for ref in p.reference_values:
            click.echo(f"{'':<12} {ref.label}: {ref.value} (+/- {ref.tolerance}, {ref.provenance})")
    sys.exit(0)


if __name__ == "__main__":
    main()
