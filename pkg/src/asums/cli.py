"""Command-line front door.

Exit codes: 0 on success, 2 on a usage or input error, 3 when a resource
cap or sample budget is hit.
"""

from __future__ import annotations

import json
import logging
import math
import sys
import time
from pathlib import Path

import click
import numpy as np

from .asum_oracle import PROFILES, ASumSpec, asum_exact_pmf, random_spec
from .dist_core import Dist, ResourceError, dist_from_json_obj, empirical, kl_divergence, kolmogorov_distance, tv_distance
from .hard_instances import (
    DEFAULT_C,
    DEFAULT_C5,
    DEFAULT_K_CONST,
    build_fib_family,
    build_mod_family,
    default_t_range,
    family_diagnostics,
    violating_fraction,
)
from .harness import ALGOS, dump_json, rows_to_csv, run_experiment, run_learner, stream
from .learners import Hypothesis, LearnerConfig, SampleSource, Trace

EXIT_USAGE = 2
EXIT_RESOURCE = 3

log = logging.getLogger("asums")


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise click.UsageError(f"{path}: not valid JSON ({e})") from e


def read_samples(path: str) -> np.ndarray:
    """One integer per line; blank lines are skipped."""
    out = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(int(line))
        except ValueError as e:
            raise click.UsageError(f"{path}:{ln}: expected one integer per line") from e
    return np.asarray(out, dtype=np.int64)


def load_law(path: str) -> Dist:
    """A distribution, hypothesis, spec (via the exact oracle) or samples file."""
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        return empirical(read_samples(path))
    if "family" in obj:
        return Hypothesis.from_json_obj(obj).law()
    if "rows" in obj and "support" in obj:
        return asum_exact_pmf(ASumSpec.from_json_obj(obj))
    return dist_from_json_obj(obj)


def _write(path: str | Path, text: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose: bool) -> None:
    """Learn sums of independent integer variables and probe their lower bounds."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@cli.command()
@click.option("--k", "k", type=int, required=True)
@click.option("--n", "n", type=int, required=True)
@click.option("--amax", type=int, required=True)
@click.option("--profile", type=click.Choice(PROFILES), default="uniform", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--support", default=None, help="Comma-separated support; random when omitted.")
@click.option("--templates", type=int, default=None, help="Draw rows from this many distinct patterns.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen(k, n, amax, profile, seed, support, templates, out) -> None:
    """Write a random spec as JSON."""
    sup = _parse_support(support)
    spec = random_spec(k, n, amax, profile, stream(seed, "gen"), support=sup, templates=templates)
    _write(out, spec.to_json() + "\n")


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def truth(spec_path, out) -> None:
    """Write the exact law of a spec as JSON."""
    spec = ASumSpec.from_json_obj(_read_json(spec_path))
    _write(out, json.dumps(asum_exact_pmf(spec).to_json_obj()) + "\n")


def _parse_support(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError as e:
        raise click.BadParameter(f"bad support {text!r}") from e


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--samples", "samples_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--algo", type=click.Choice(ALGOS), required=True)
@click.option("--eps", type=float, default=None, help="Overrides the config value (default 0.1).")
@click.option("--delta", type=float, default=None, help="Overrides the config value (default 0.1).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--support", default=None, help="Known support, comma-separated; defaults to the spec's.")
@click.option("--amax", type=int, default=None, help="Support bound for the unknown-support learners.")
@click.option("--k", "k", type=int, default=None, help="Support size for --algo unknownk.")
@click.option("--n", "n", type=int, default=None, help="Number of summands; defaults to the spec's.")
@click.option("--timings/--no-timings", default=False, help="Record wall time in the run log.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def learn(spec_path, samples_path, algo, eps, delta, seed, config_path, support, amax, k, n, timings, out) -> None:
    """Learn from a spec's sampler or a samples file; write hypothesis and run log.

    The run log goes next to OUT with the suffix .runlog.json.
    """
    if (spec_path is None) == (samples_path is None):
        raise click.UsageError("give exactly one of --spec and --samples")
    cfg_obj = _read_json(config_path) if config_path else {}
    cfg_obj = {**cfg_obj, "seed": seed}
    if eps is not None:
        cfg_obj["eps"] = eps
    if delta is not None:
        cfg_obj["delta"] = delta
    cfg = LearnerConfig.from_json_obj(cfg_obj)
    sup = _parse_support(support)
    if spec_path is not None:
        spec = ASumSpec.from_json_obj(_read_json(spec_path))
        src = SampleSource.from_dist(asum_exact_pmf(spec, cfg.max_cells), stream(seed, "learn/target"), cfg.max_draws)
        sup = sup or spec.support
        n = spec.n if n is None else n
        k = spec.k if k is None else k
        if amax is None:
            amax = spec.support[-1]
    else:
        src = SampleSource.from_array(read_samples(samples_path), cfg.max_draws)
    trace = Trace()
    t0 = time.perf_counter()
    h = run_learner(algo, src, cfg, stream(seed, "learn/learner"), trace, support=sup, n=n or 0, amax=amax, k=k)
    wall = (time.perf_counter() - t0) * 1000
    _write(out, h.to_json() + "\n")
    runlog = {
        "algo": algo,
        "config": cfg.to_json_obj(),
        "samples_used": src.draws,
        "sampler_calls": src.calls,
        "hypothesis_family": h.family,
        "wall_ms": round(wall) if timings else 0,
        "trace": trace.to_json_obj(),
    }
    _write(str(out) + ".runlog.json", dump_json(runlog))
    log.info("learned %s with %d draws", h, src.draws)


@cli.command()
@click.option("--a", "a_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--b", "b_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--metric", type=click.Choice(["tv", "kl", "kolmogorov"]), default="tv", show_default=True)
def dist(a_path, b_path, metric) -> None:
    """Print the distance between two laws."""
    a, b = load_law(a_path), load_law(b_path)
    fn = {"tv": tv_distance, "kl": kl_divergence, "kolmogorov": kolmogorov_distance}[metric]
    v = fn(a, b)
    click.echo("inf" if math.isinf(v) else f"{float(v):.17g}")


@cli.command()
@click.option("--family", type=click.Choice(["fib", "mod"]), required=True)
@click.option("--L", "L", type=int, default=12, show_default=True, help="fib: p = f_L, q = f_{L+1}.")
@click.option("--t-lo", type=int, default=None, help="fib: first index; default floor(L^(1/4)).")
@click.option("--t-hi", type=int, default=None, help="fib: last index; default floor(L^(1/2)).")
@click.option("--c5", type=int, default=DEFAULT_C5, show_default=True)
@click.option("--amax", type=int, default=499, show_default=True, help="mod: a3 is the largest prime <= amax.")
@click.option("--kconst", type=int, default=DEFAULT_K_CONST, show_default=True)
@click.option("--c", "c", type=float, default=DEFAULT_C, show_default=True)
@click.option("--count", type=int, default=8, show_default=True, help="mod: number of multipliers.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--diagnose", is_flag=True, help="Also write the pairwise report.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
def hardfam(family, L, t_lo, t_hi, c5, amax, kconst, c, count, seed, diagnose, out) -> None:
    """Build a lower-bound family; with --diagnose, write report.csv and summary.json."""
    outdir = Path(out)
    if family == "fib":
        lo, hi = default_t_range(L)
        fam = build_fib_family(L, t_lo if t_lo is not None else lo, t_hi if t_hi is not None else hi, c5)
    else:
        fam = build_mod_family(amax, kconst, c, count, seed)
    _write(outdir / "family.json", dump_json(fam.to_json_obj()))
    if diagnose:
        rep = family_diagnostics(fam)
        summary = rep.summary()
        if family == "mod":
            bad, frac = violating_fraction(fam.a3, fam.X)
            summary.update(violating_multipliers=bad, violating_fraction=frac)
        _write(outdir / "report.csv", rep.to_csv())
        _write(outdir / "summary.json", dump_json(summary))


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def experiment(config_path, out) -> None:
    """Run seeded trials; write results.csv and details.json."""
    obj = _read_json(config_path)
    rows, details = run_experiment(obj, progress=log.info)
    outdir = Path(out)
    _write(outdir / "results.csv", rows_to_csv(rows))
    _write(outdir / "details.json", dump_json(details))


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="asums", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE if isinstance(e, click.UsageError) else e.exit_code
    except ResourceError as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_RESOURCE
    except (ValueError, KeyError, FileNotFoundError) as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
