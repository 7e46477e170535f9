"""``synthnet`` command line.

Exit codes: 0 success, 1 generation/validation failure, 2 usage error,
3 unreadable or invalid input file.
"""
from __future__ import annotations

import csv
import json
import sys

import click

from . import harness
from .metrics import rent_by_partitioning, rent_by_traversal

INPUT_ERRORS = {"spec", "lef", "netlist"}


def _fail(exc: harness.HarnessError):
    click.echo(f"error [{exc.category}]: {exc}", err=True)
    sys.exit(3 if exc.category in INPUT_ERRORS else 1)


def _echo_json(obj):
    click.echo(harness._dump(obj), nl=False)


@click.group()
@click.version_option(package_name="synthnet")
def main():
    """Synthetic gate-level netlist generator and analysis tools."""


@main.command()
@click.option("--spec", "spec", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--lef", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Cell library; the bundled mini library when omitted.")
@click.option("--seed", type=int, default=None, help="Overrides the spec seed.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--flat", is_flag=True, help="Write a single flat module.")
def generate(spec, lef, seed, out, flat):
    """Generate a netlist; writes OUT and OUT.json."""
    try:
        report = harness.generate(spec, lef, seed, out, flat)
    except harness.HarnessError as exc:
        _fail(exc)
    click.echo(f"wrote {out}: {report['n_inst']} instances, "
               f"{report['n_pi']} PIs, {report['n_po']} POs")


@main.command()
@click.option("--netlist", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--lef", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0)
def extract(netlist, lef, out, seed):
    """Measure a netlist and write the matching SpecFile."""
    try:
        spec = harness.extract(netlist, lef, out, seed)
    except harness.HarnessError as exc:
        _fail(exc)
    click.echo(f"wrote {out}: n_inst={spec.n_inst} p={spec.p:.4f} s_ratio={spec.s_ratio:.4f}")


@main.command()
@click.option("--netlist", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--lef", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--method", type=click.Choice(["partition", "bfs"]), multiple=True,
              default=("partition",), show_default=True)
@click.option("--pin-type", type=click.Choice(["1", "2", "3"]), multiple=True,
              default=("2",), show_default=True)
@click.option("--mean", type=click.Choice(["arith", "geom"]), multiple=True,
              default=("arith",), show_default=True)
@click.option("--r-ratio", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Also write one row per method x pin type x mean.")
def analyze(netlist, lef, method, pin_type, mean, r_ratio, seed, csv_path):
    """Fit Rent's rule; options may be repeated to fit several variants."""
    try:
        nl = harness.load_netlist(netlist, harness.load_library(lef))
    except harness.HarnessError as exc:
        _fail(exc)
    fits = []
    for m in method:
        for t in pin_type:
            for a in mean:
                if m == "partition":
                    fit = rent_by_partitioning(nl, int(t), a, r_ratio, seed)
                else:
                    fit = rent_by_traversal(nl, int(t), a, r_ratio, seed=seed)
                fits.append(fit)
    _echo_json({"netlist": netlist, "fits": [f.as_dict() for f in fits]})
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "pin_type", "mean", "k", "p", "residual", "low_confidence"])
            for f in fits:
                w.writerow([f.method, f.pin_model, f.mean, f.k, f.p, f.residual,
                            int(f.low_confidence)])


@main.command()
@click.option("--spec", "spec", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--lef", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--tol", type=float, default=0.01, show_default=True)
@click.option("--max-iter", type=click.IntRange(1, 50), default=50, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the trace as JSON here instead of stdout.")
def converge(spec, lef, tol, max_iter, out):
    """Iterate generate -> extract until the tracked parameters settle."""
    try:
        trace = harness.converge(spec, lef, tol, max_iter)
    except harness.HarnessError as exc:
        _fail(exc)
    text = harness._dump(trace.as_dict())
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)
    if trace.error:
        click.echo(f"error [generate]: {trace.error}", err=True)
        sys.exit(1)
    click.echo(f"converged={trace.converged} after {trace.n_iter} iterations", err=True)


@main.command()
@click.option("--grid", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--jobs", type=click.IntRange(1), default=1, show_default=True)
@click.option("--lef", type=click.Path(exists=True, dir_okay=False), default=None)
def sweep(grid, out, jobs, lef):
    """Generate and measure every point of a JSON grid; writes a CSV."""
    try:
        report = harness.sweep(grid, out, jobs, lef)
    except (OSError, ValueError, KeyError) as exc:
        click.echo(f"error [grid]: {exc}", err=True)
        sys.exit(3)
    _echo_json(report.summary)


@main.command()
@click.option("--a", "path_a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--lef", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, default=0)
def compare(path_a, path_b, lef, seed):
    """Side-by-side parameters, cell cosine similarity and Rent fits."""
    try:
        library = harness.load_library(lef)
        a = harness.load_netlist(path_a, library)
        b = harness.load_netlist(path_b, library)
    except harness.HarnessError as exc:
        _fail(exc)
    _echo_json(harness.compare(a, b, seed))


if __name__ == "__main__":
    main()
