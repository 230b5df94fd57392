"""Command-line interface: ``delaynet simulate | analyze | structural | atfm | selftest``.

Exit codes: 0 success / controllable, 1 input error, 2 negative verdict,
3 inconclusive, 4 numerical failure.
"""
from __future__ import annotations

import os
import sys
from pathlib import Path

import click
import numpy as np
import scipy

from . import __version__
from .acceptance import run_all
from .controllability import X_vs_history_controllability, approx_controllability, atfm_operator, kalman_matrix, rank_with_tolerance
from .errors import DelayNetError
from .graph import travel_times
from .io import (
    config_hash,
    control_from_scenario,
    initial_from_scenario,
    parse_graph_spec,
    trace_rows,
    write_csv,
    write_report,
)
from .solver import Scenario, solve
from .structural import generic_rank, has_form_t, read_pattern, structural_controllability

OUT_ENV = "DELAYNET_OUT"
EXIT_OK, EXIT_INPUT, EXIT_NEGATIVE, EXIT_INCONCLUSIVE, EXIT_NUMERICAL = 0, 1, 2, 3, 4
VERDICT_EXIT = {"controllable": EXIT_OK, "not-controllable": EXIT_NEGATIVE, "inconclusive": EXIT_INCONCLUSIVE}


def parse_complex(text):
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise click.BadParameter(f"not a complex number: {text!r}") from None


def _out_dir(out):
    path = Path(out or os.environ.get(OUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _provenance(config, seed=None):
    return {
        "config_hash": config_hash(config),
        "delaynet": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": "none" if seed is None else int(seed),
    }


def _emit(summary):
    for line in summary:
        click.echo(line)


@click.group()
@click.version_option(__version__, prog_name="delaynet")
def cli():
    """Transport networks with vertex delays: simulation and controllability analysis."""


@cli.command()
@click.argument("graph", type=click.Path(dir_okay=False))
@click.option("--T", "horizon", type=float, help="Final time (default: [scenario].T or 10 transit times).")
@click.option("--dt", type=float, help="Time step (must be below the shortest transit time).")
@click.option("--nx", type=click.IntRange(min=2), help="Spatial samples per edge.")
@click.option("--out", type=click.Path(file_okay=False), help=f"Output directory (default ${OUT_ENV} or .).")
def simulate(graph, horizon, dt, nx, out):
    """Integrate the network and write boundary traces as CSV."""
    gf = parse_graph_spec(graph)
    g, sc_spec = gf.graph, gf.scenario
    nx = nx or int(sc_spec.get("nx", 256))
    T = horizon if horizon is not None else float(sc_spec.get("T", 10.0 * travel_times(g).max()))
    dt = dt if dt is not None else sc_spec.get("dt")
    sc = Scenario(
        graph=g,
        horizon=T,
        delays=gf.delays,
        initial_profile=initial_from_scenario(g, sc_spec, nx),
        control=control_from_scenario(sc_spec, g.n_inputs),
        dt=dt,
        nx=nx,
    )
    rec = solve(sc)
    od = _out_dir(out)
    stem = Path(graph).stem
    csv_path = write_csv(od / f"{stem}.traces.csv", ["t", "edge", "z(t,1)", "z(t,0)"], trace_rows(rec, g.edge_ids))
    config = {"command": "simulate", "graph": Path(graph).name, "T": T, "dt": sc.dt, "nx": nx}
    tree = {
        "command": "simulate",
        "graph": Path(graph).name,
        "result": {
            "steps": rec.metadata["steps"],
            "dt": sc.dt,
            "nx": nx,
            "horizon": rec.metadata["horizon"],
            "mass_initial": float(np.real(rec.mass[0])),
            "mass_final": float(np.real(rec.mass[-1])),
            "traces": csv_path.name,
        },
        "provenance": _provenance(config),
    }
    summary = [
        f"simulated {g.m} edges to t={rec.metadata['horizon']:.6g} in {rec.metadata['steps']} steps (dt={sc.dt:.6g})",
        f"traces written to {csv_path.name}",
    ]
    write_report(od / f"{stem}.simulate.report", tree, summary)
    _emit(summary)
    return EXIT_OK


@cli.command()
@click.argument("graph", type=click.Path(dir_okay=False))
@click.option("--lambda", "lambdas", multiple=True, help="Frequency sample, e.g. 2 or 1.5+1i (repeatable).")
@click.option("--depth", type=click.IntRange(min=1), help="Kalman depth (default m).")
@click.option("--threshold", type=float, default=1e-8, show_default=True, help="Relative singular-value cutoff.")
@click.option("--allow-below-mu0", is_flag=True, help="Accept samples left of mu0 (direct resolvent solve).")
@click.option("--out", type=click.Path(file_okay=False))
def analyze(graph, lambdas, depth, threshold, allow_below_mu0, out):
    """Kalman-type approximate-controllability test."""
    gf = parse_graph_spec(graph)
    g = gf.graph
    samples = [parse_complex(s) for s in lambdas] or None
    rep = approx_controllability(g, gf.delays, None, samples, threshold, depth, allow_below_mu0)
    rep = X_vs_history_controllability(rep, gf.delays)
    od = _out_dir(out)
    stem = Path(graph).stem
    rows = []
    for s in rep.samples:
        for k, sv in enumerate(s.singular_values):
            rows.append((s.lam.real, s.lam.imag, k, float(sv)))
    sv_path = write_csv(od / f"{stem}.singular_values.csv", ["lambda_re", "lambda_im", "index", "sigma"], rows)
    config = {
        "command": "analyze",
        "graph": Path(graph).name,
        "lambdas": [complex(x) for x in (samples or [])],
        "depth": depth,
        "threshold": threshold,
    }
    result = {
        "verdict": rep.verdict,
        "history_verdict": rep.history_verdict,
        "m": rep.m,
        "mu0": rep.mu0,
        "depth": rep.depth,
        "lambdas": rep.lambdas,
        "ranks": rep.ranks,
        "norm1": [s.norm1 for s in rep.samples],
        "skipped": rep.skipped,
        "singular_values": sv_path.name,
        "notes": rep.notes,
    }
    if rep.witness is not None:
        result["witness"] = {"lambda": rep.witness_lambda, "g_star": rep.witness, "residual": rep.witness_residual}
    tree = {"command": "analyze", "graph": Path(graph).name, "result": result, "provenance": _provenance(config)}
    summary = [
        f"verdict: {rep.verdict} (m={rep.m}, mu0={rep.mu0:.6g}, ranks {rep.ranks})",
    ]
    if rep.witness is not None:
        summary.append(f"dual witness g* = {np.round(rep.witness, 8).tolist()} at lambda={rep.witness_lambda}")
    write_report(od / f"{stem}.analyze.report", tree, summary)
    _emit(summary)
    return VERDICT_EXIT[rep.verdict]


@cli.command()
@click.argument("pattern", type=click.Path(dir_okay=False))
@click.option("--t", "t", type=int, help="Run the form-(t) test on PATTERN.")
@click.option("--k-pattern", type=click.Path(dir_okay=False), help="Input pattern: test (PATTERN, K) for structural controllability.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trials", type=click.IntRange(min=0), default=200, show_default=True)
@click.option("--out", type=click.Path(file_okay=False))
def structural(pattern, t, k_pattern, seed, trials, out):
    """Form-(t) test or structural controllability of zero/nonzero patterns."""
    S = read_pattern(pattern)
    od = _out_dir(out)
    stem = Path(pattern).stem
    config = {"command": "structural", "pattern": Path(pattern).name, "t": t, "k_pattern": k_pattern, "trials": trials}
    if k_pattern is None:
        if t is None:
            raise click.UsageError("give --t for a form test or --k-pattern for a controllability test")
        form, wit = has_form_t(S, t)
        result = {"t": t, "form": form, "generic_rank": generic_rank(S)}
        if form:
            result["witness"] = {"k": wit.k, "rows": [i + 1 for i in wit.rows], "cols": [j + 1 for j in wit.cols]}
            summary = [f"form ({t}), k={wit.k}: zero block rows {result['witness']['rows']} x cols {result['witness']['cols']}"]
        else:
            summary = [f"not of form ({t}); generic rank {result['generic_rank']}"]
        code = EXIT_OK
    else:
        K = read_pattern(k_pattern)
        rep = structural_controllability(S, K, trials=trials, seed=seed)
        result = {
            "verdict": rep.verdict,
            "target": rep.target,
            "extended_generic_rank": rep.extended_generic_rank,
            "zero_rows": [i + 1 for i in rep.zero_rows],
            "oracle_max_kalman_rank": rep.oracle_max_kalman_rank,
            "oracle_agrees": rep.oracle_agrees,
            "notes": rep.notes,
        }
        if rep.witness is not None:
            result["witness"] = {"k": rep.witness.k, "rows": [i + 1 for i in rep.witness.rows], "cols": [j + 1 for j in rep.witness.cols]}
        summary = [f"{rep.verdict}: extended matrix generic rank {rep.extended_generic_rank} of {rep.target}"]
        if rep.zero_rows:
            summary.append(f"rows of [A K] with no free entry: {result['zero_rows']}")
        code = EXIT_OK if rep.controllable else EXIT_NEGATIVE
    tree = {"command": "structural", "pattern": Path(pattern).name, "result": result, "provenance": _provenance(config, seed)}
    write_report(od / f"{stem}.structural.report", tree, summary)
    _emit(summary)
    return code


@cli.command()
@click.argument("graph", type=click.Path(dir_okay=False))
@click.option("--r", "r", type=float, required=True, help="Airborne delay.")
@click.option("--mu", "mu", default="1", show_default=True, help="Frequency (complex allowed).")
@click.option("--threshold", type=float, default=1e-8, show_default=True)
@click.option("--out", type=click.Path(file_okay=False))
def atfm(graph, r, mu, threshold, out):
    """Eulerian air-traffic operator and its Kalman rank at one frequency."""
    gf = parse_graph_spec(graph)
    g = gf.graph
    mu_c = parse_complex(mu)
    op = atfm_operator(g, r, mu_c)
    K = g.control / g.c1[:, None]
    rank, sv = rank_with_tolerance(_unit_columns(kalman_matrix(op, K)), threshold)
    verdict = "controllable" if rank == g.m else "not-controllable"
    od = _out_dir(out)
    stem = Path(graph).stem
    config = {"command": "atfm", "graph": Path(graph).name, "r": r, "mu": mu_c, "threshold": threshold}
    tree = {
        "command": "atfm",
        "graph": Path(graph).name,
        "result": {"mu": mu_c, "r": r, "A": op.A_matrix, "norm1": op.norm1, "rank": rank, "singular_values": sv, "verdict": verdict},
        "provenance": _provenance(config),
    }
    summary = [f"{verdict}: Kalman rank {rank} of {g.m} at mu={mu_c}, ||A_mu||_1 = {op.norm1:.6g}"]
    write_report(od / f"{stem}.atfm.report", tree, summary)
    _emit(summary)
    return VERDICT_EXIT[verdict]


def _unit_columns(M):
    n = np.linalg.norm(M, axis=0)
    return M[:, n > 0] / n[n > 0]


@cli.command()
@click.option("--filter", "filter_", help="Run only criteria whose name contains this text.")
def selftest(filter_):
    """Run the bundled acceptance suite and print a pass/fail table."""
    results = run_all(filter_)
    if not results:
        raise click.UsageError(f"no criterion matches {filter_!r}")
    for res in results:
        click.echo(res.line())
    failed = [r for r in results if not r.passed]
    click.echo(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_NEGATIVE if failed else EXIT_OK


def main(argv=None):
    try:
        code = cli.main(args=argv, prog_name="delaynet", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_INPUT
    except click.Abort:
        return EXIT_INPUT
    except DelayNetError as exc:
        rule = getattr(exc, "rule", None)
        click.echo(f"error{f' [{rule}]' if rule else ''}: {exc}", err=True)
        return exc.exit_code
    return EXIT_OK if code is None else int(code)


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
