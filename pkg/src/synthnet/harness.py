"""Experiment loops on top of the generator: single runs, the convergence
loop, parameter-space sweeps and netlist comparisons.

Grid configs are JSON::

    {"seed": 7,
     "base": {"d_max": 40},
     "axes": {"insts": {"values": [10000, 20000, 50000]},
              "s_ratio": {"min": 0.1, "max": 0.3, "step": 0.1},
              "p": {"min": 0.45, "max": 0.65, "step": 0.1, "lo": 0.4, "hi": 0.7}}}

An axis lists its points either as ``values`` or as ``min``/``max``/``step``.
``lo``/``hi`` are the exclusion bounds; by default they sit half a grid
step outside the first and last point.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

from ._random import derive_seed
from .generator import generate_netlist
from .metrics import ExtractedParams, cell_cosine_similarity, extract_params, rent_by_partitioning
from .netgen import resolve_counts, resolve_params
from .netlist import Netlist, validate
from .specio import CellLibrary, SpecParams, parse_specfile, write_specfile
from .verilog import read_verilog, write_verilog

TRACKED = ("n_inst", "p", "s_ratio", "n_ports")
CONVERGE_RENT = ("bfs", 2, "arith")
SWEEP_AXES = ("insts", "s_ratio", "p")


class HarnessError(RuntimeError):
    """Failure inside an experiment; ``category`` names the stage."""

    def __init__(self, category: str, message: str):
        super().__init__(f"{category}: {message}")
        self.category = category


def load_library(lef=None) -> CellLibrary:
    if lef is None:
        return CellLibrary.default()
    try:
        return CellLibrary.from_lef(Path(lef).read_text())
    except (OSError, ValueError) as exc:
        raise HarnessError("lef", str(exc)) from exc


def load_spec(spec) -> SpecParams:
    if isinstance(spec, SpecParams):
        return spec
    try:
        return parse_specfile(Path(spec).read_text())
    except (OSError, ValueError) as exc:
        raise HarnessError("spec", str(exc)) from exc


def load_netlist(path, library: CellLibrary) -> Netlist:
    try:
        return read_verilog(Path(path).read_text(), library)
    except (OSError, ValueError) as exc:
        raise HarnessError("netlist", f"{path}: {exc}") from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if hasattr(x, "as_dict"):
        return x.as_dict()
    if hasattr(x, "item"):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


# -- generate ----------------------------------------------------------------

def generate(spec, lef=None, seed: int | None = None, out=None, flat: bool = False) -> dict:
    """Generate, validate and (optionally) write ``out`` plus ``out.json``.

    Raises :class:`HarnessError` when any stage fails, including a netlist
    that does not pass validation.
    """
    params = load_spec(spec)
    library = load_library(lef)
    try:
        nl, report = generate_netlist(params, library, seed)
    except (ValueError, RuntimeError) as exc:
        raise HarnessError("generate", str(exc)) from exc
    bad = validate(nl)
    report["violations"] = len(bad)
    if bad:
        raise HarnessError("validate", f"{len(bad)} violations, first: {bad[0]}")
    ex = extract_params(nl, check=False)
    report["extracted"] = {k: v for k, v in ex.as_dict().items() if k not in ("rent", "cell_counts")}
    if out is not None:
        out = Path(out)
        out.write_text(write_verilog(nl, flat=flat))
        Path(f"{out}.json").write_text(_dump(report))
    return report


# -- convergence -------------------------------------------------------------

def tracked_values(params: SpecParams, ex: ExtractedParams | None = None, p=None):
    if ex is None:
        return (params.n_inst, params.p, params.s_ratio, params.n_pi + params.n_po)
    return (ex.n_inst, p, ex.s_ratio, ex.n_pi + ex.n_po)


def relative_errors(inp, out) -> list[float]:
    errs = []
    for a, b in zip(inp, out):
        if a == 0:
            errs.append(0.0 if b == 0 else math.inf)
        else:
            errs.append(abs(b - a) / abs(a))
    return errs


@dataclass
class ConvergenceTrace:
    """One row per iteration: ``(input spec, extracted params, max rel. error)``."""

    iterations: list = field(default_factory=list)
    converged: bool = False
    tol: float = 0.01
    error: str | None = None

    @property
    def n_iter(self) -> int:
        return len(self.iterations)

    @property
    def max_errors(self) -> list[float]:
        return [e for _, _, e in self.iterations]

    def values(self) -> list[dict]:
        """Tracked inputs and outputs per iteration, for plotting bands."""
        rows = []
        for i, (sp, ex, err) in enumerate(self.iterations):
            p_out = ex.rent["/".join((CONVERGE_RENT[0], f"type{CONVERGE_RENT[1]}", CONVERGE_RENT[2]))].p
            rows.append({
                "iteration": i,
                **{f"in_{k}": v for k, v in zip(TRACKED, tracked_values(sp))},
                **{f"out_{k}": v for k, v in zip(TRACKED, tracked_values(sp, ex, p_out))},
                "max_rel_error": err,
            })
        return rows

    def as_dict(self) -> dict:
        return {"converged": self.converged, "tol": self.tol, "iterations": self.n_iter,
                "error": self.error, "trace": self.values()}


def converge(spec, lef=None, tol: float = 0.01, max_iter: int = 50,
             library: CellLibrary | None = None) -> ConvergenceTrace:
    """Feed extracted parameters back as inputs until they reproduce themselves.

    Tracks instance count, traversal Rent exponent (type2, arithmetic),
    sequential ratio and total port count.  Stops once every tracked value
    is within ``tol`` (relative) of its input or after ``max_iter`` rounds.
    """
    if max_iter > 50:
        raise ValueError("max_iter is capped at 50")
    library = library or load_library(lef)
    try:
        cur = resolve_params(load_spec(spec), library)
    except ValueError as exc:
        raise HarnessError("spec", str(exc)) from exc
    trace = ConvergenceTrace(tol=tol)
    key = f"{CONVERGE_RENT[0]}/type{CONVERGE_RENT[1]}/{CONVERGE_RENT[2]}"
    for _ in range(max_iter):
        try:
            nl, _ = generate_netlist(cur, library)
            ex = extract_params(nl, rent=(CONVERGE_RENT,), r_ratio=cur.r_ratio, seed=cur.seed)
        except (ValueError, RuntimeError) as exc:
            trace.error = f"iteration {trace.n_iter}: {exc}"
            break
        p_out = ex.rent[key].p
        err = max(relative_errors(tracked_values(cur), tracked_values(cur, ex, p_out)))
        trace.iterations.append((cur, ex, err))
        if err < tol:
            trace.converged = True
            break
        p_next = p_out if math.isfinite(p_out) else cur.p
        cur = cur.replace(
            n_inst=ex.n_inst,
            p=min(max(p_next, 0.01), 0.99),
            s_ratio=ex.s_ratio,
            n_pi=ex.n_pi,
            n_po=ex.n_po,
            submodules=[],
            inventory_mode="weights",
        )
    return trace


# -- sweep -----------------------------------------------------------------------

EXCLUSION_AXES = tuple(f"{a}{s}" for a in ("s_ratio", "p", "insts") for s in ("<min", ">max"))


@dataclass
class Axis:
    name: str
    values: list
    lo: float
    hi: float

    @classmethod
    def from_config(cls, name: str, cfg: dict) -> "Axis":
        if "values" in cfg:
            vals = sorted(cfg["values"])
            if not vals:
                raise ValueError(f"axis {name}: empty value list")
            lo_gap = (vals[1] - vals[0]) / 2 if len(vals) > 1 else 0
            hi_gap = (vals[-1] - vals[-2]) / 2 if len(vals) > 1 else 0
        else:
            lo_v, hi_v, step = cfg["min"], cfg["max"], cfg["step"]
            if step <= 0 or hi_v < lo_v:
                raise ValueError(f"axis {name}: need step > 0 and max >= min")
            n = int(math.floor((hi_v - lo_v) / step + 1e-9)) + 1
            vals = [round(lo_v + i * step, 10) for i in range(n)]
            lo_gap = hi_gap = step / 2
        if name == "insts":
            vals = [int(v) for v in vals]
        return cls(name, vals, cfg.get("lo", vals[0] - lo_gap), cfg.get("hi", vals[-1] + hi_gap))


@dataclass
class SweepPoint:
    index: int
    insts: int
    s_ratio: float
    p: float
    seed: int
    outcome: str = "ok"
    excluded: list = field(default_factory=list)
    measured: dict = field(default_factory=dict)
    reason: str = ""


@dataclass
class SweepReport:
    points: list
    axes: dict

    @property
    def summary(self) -> dict:
        out = {"points": len(self.points),
               "ok": sum(pt.outcome == "ok" for pt in self.points),
               "excluded": sum(pt.outcome != "ok" for pt in self.points),
               "failed": sum(pt.outcome == "failed" for pt in self.points)}
        for ax in EXCLUSION_AXES:
            out[ax] = sum(ax in pt.excluded for pt in self.points)
        return out

    def rows(self) -> list[dict]:
        rows = []
        for pt in self.points:
            row = {"index": pt.index, "insts": pt.insts, "s_ratio": pt.s_ratio, "p": pt.p,
                   "seed": pt.seed, "outcome": pt.outcome,
                   "ok": int(pt.outcome == "ok"), "excluded": int(pt.outcome != "ok"),
                   "failed": int(pt.outcome == "failed")}
            for ax in EXCLUSION_AXES:
                row[ax] = int(ax in pt.excluded)
            for k in ("insts", "s_ratio", "p", "violations", "cosine", "n_pi", "n_po", "seconds"):
                row[f"measured_{k}"] = pt.measured.get(k, "")
            row["reason"] = pt.reason
            rows.append(row)
        return rows

    def write_csv(self, path) -> None:
        rows = self.rows()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["index"])
            w.writeheader()
            w.writerows(rows)


def _classify(axis: Axis, value: float) -> str | None:
    if value < axis.lo:
        return f"{axis.name}<min"
    if value > axis.hi:
        return f"{axis.name}>max"
    return None


def _run_point(args):
    pt, base, lef_text, axes = args
    t0 = time.perf_counter()
    try:
        library = CellLibrary.default() if lef_text is None else CellLibrary.from_lef(lef_text)
        params = SpecParams(n_inst=pt.insts, p=pt.p, s_ratio=pt.s_ratio, seed=pt.seed, **base)
        nl, rep = generate_netlist(params, library)
        bad = validate(nl)
        ex = extract_params(nl, check=False)
        fit = rent_by_partitioning(nl, 2, "arith", params.r_ratio, pt.seed)
        target = resolve_counts(params, library)
        pt.measured = {
            "insts": ex.n_inst, "s_ratio": round(ex.s_ratio, 6), "p": round(fit.p, 6),
            "violations": len(bad), "cosine": round(cell_cosine_similarity(nl, target), 6),
            "n_pi": ex.n_pi, "n_po": ex.n_po,
        }
        if bad:
            pt.outcome, pt.reason = "failed", f"{len(bad)} violations"
        else:
            for name in SWEEP_AXES:
                hit = _classify(axes[name], pt.measured[name])
                if hit:
                    pt.excluded.append(hit)
            if pt.excluded:
                pt.outcome = "excluded"
                pt.reason = ";".join(pt.excluded)
    except Exception as exc:  # a broken point must not sink the sweep
        pt.outcome, pt.reason = "failed", f"{type(exc).__name__}: {exc}"
    pt.measured["seconds"] = round(time.perf_counter() - t0, 3)
    return pt


def sweep_points(config: dict) -> tuple[list[SweepPoint], dict]:
    axes = {name: Axis.from_config(name, config["axes"][name]) for name in SWEEP_AXES}
    master = int(config.get("seed", 0))
    points = []
    for i, (n, s, p) in enumerate(product(axes["insts"].values, axes["s_ratio"].values,
                                          axes["p"].values)):
        seed = derive_seed(master, "sweep", repr(n), repr(s), repr(p))
        points.append(SweepPoint(i, n, s, p, seed))
    return points, axes


def sweep(grid, out=None, jobs: int = 1, lef=None) -> SweepReport:
    """Generate and measure every grid point; results do not depend on ``jobs``."""
    config = grid if isinstance(grid, dict) else json.loads(Path(grid).read_text())
    points, axes = sweep_points(config)
    base = dict(config.get("base", {}))
    lef = lef or config.get("lef")
    lef_text = Path(lef).read_text() if lef else None
    work = [(pt, base, lef_text, axes) for pt in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_point, work))
    else:
        done = [_run_point(w) for w in work]
    done.sort(key=lambda pt: pt.index)
    report = SweepReport(done, axes)
    if out is not None:
        report.write_csv(out)
    return report


# -- compare -------------------------------------------------------------------

COMPARED = ("n_inst", "n_net", "n_pi", "n_po", "n_macro", "n_ff", "t_avg", "s_ratio",
            "d_min", "d_max", "md_min", "md_max")


def compare(a: Netlist, b: Netlist, seed: int = 0) -> dict:
    """Parameter deltas, cell-distribution cosine and Rent fits of two netlists."""
    rent = (("partition", 2, "arith"), ("bfs", 2, "arith"))
    ea = extract_params(a, rent=rent, seed=seed)
    eb = extract_params(b, rent=rent, seed=seed)
    params = {}
    for k in COMPARED:
        va, vb = getattr(ea, k), getattr(eb, k)
        delta = None if va is None or vb is None else vb - va
        rel = None if delta is None or va == 0 else delta / va
        params[k] = {"a": va, "b": vb, "delta": delta, "rel": rel}
    fits = {}
    for key in ea.rent:
        fa, fb = ea.rent[key], eb.rent[key]
        fits[key] = {"a": {"k": fa.k, "p": fa.p}, "b": {"k": fb.k, "p": fb.p},
                     "delta_p": fb.p - fa.p}
    return {"params": params, "cosine": cell_cosine_similarity(a, b), "rent": fits}


def extracted_spec(ex: ExtractedParams, p: float, name: str = "top") -> SpecParams:
    """SpecParams that would ask the generator for ``ex`` again."""
    d_min = ex.d_min or 0
    d_max = max(ex.d_max or 0, d_min)
    return SpecParams(
        n_inst=ex.n_inst, p=min(max(p, 0.01), 0.99), n_pi=ex.n_pi, n_po=ex.n_po,
        n_macro=ex.n_macro, t_avg=ex.t_avg, s_ratio=min(ex.s_ratio, 0.999),
        d_min=d_min, d_max=d_max,
        md_min=ex.md_min if ex.md_min is not None else d_min,
        md_max=max(ex.md_max if ex.md_max is not None else d_max,
                   ex.md_min if ex.md_min is not None else d_min),
        name=name, inventory_mode="counts",
        cell_inventory=sorted(ex.cell_counts.items()),
    )


def extract(netlist_path, lef=None, out=None, seed: int = 0) -> SpecParams:
    library = load_library(lef)
    nl = load_netlist(netlist_path, library)
    ex = extract_params(nl, rent=(("partition", 2, "arith"),), seed=seed)
    spec = extracted_spec(ex, ex.rent["partition/type2/arith"].p, nl.modules[0][0])
    if out is not None:
        Path(out).write_text(write_specfile(spec))
    return spec


def default_jobs() -> int:
    return max(1, min(8, os.cpu_count() or 1))
