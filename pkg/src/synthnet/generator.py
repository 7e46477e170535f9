"""End-to-end generation: spec -> clustered, net-generated, port-matched netlist."""
from __future__ import annotations

from sklearn.base import BaseEstimator

from ._random import SeededStream, derive_seed
from .netgen import NetBuilder, budget_exponent, generate_module, resolve_params
from .netlist import Netlist
from .pipo_match import match_ports
from .specio import CellLibrary, SpecParams


def _budget_params(params: SpecParams) -> SpecParams:
    subs = [(name, _budget_params(sp)) for name, sp in params.submodules]
    return params.replace(p=budget_exponent(params.p), submodules=subs)


def generate_netlist(params: SpecParams, library: CellLibrary | None = None,
                     seed: int | None = None) -> tuple[Netlist, dict]:
    """Generate a netlist for ``params``; returns ``(netlist, report)``."""
    if library is None:
        library = CellLibrary.default()
    if params.default_ff is not None and params.default_ff != library.default_flipflop.name:
        library = CellLibrary(library.masters, library[params.default_ff])
    seed = params.seed if seed is None else seed
    params = resolve_params(params, library)
    rng = SeededStream(derive_seed(seed, "generate"))
    builder = NetBuilder(library, params.name, level_cap=params.d_max)
    res = generate_module(builder, _budget_params(params), 0, rng, (params.n_pi, params.n_po))
    nl = builder.nl
    if builder.clock_net >= 0:
        nl.add_pi("clk", net=builder.clock_net, clock=True)
    for k, pin in enumerate(res.inputs):
        nl.add_sink(nl.pi_net[nl.add_pi(f"pi_{k}")], pin)
    for k, net in enumerate(res.outputs):
        nl.add_po(f"po_{k}", net)
    provisional = (nl.n_pi, nl.n_po)
    delta = match_ports(nl, params.n_pi, params.n_po)
    report = {
        "seed": seed,
        "t_avg": params.t_avg,
        "p_budget": budget_exponent(params.p),
        "target_n_pi": params.n_pi,
        "target_n_po": params.n_po,
        "provisional_n_pi": provisional[0],
        "provisional_n_po": provisional[1],
        "n_inst": nl.n_instances,
        "n_pi": nl.n_pi,
        "n_po": nl.n_po,
        "level_max": res.level_max,
        "ports": dict(delta.__dict__),
        **builder.report.as_dict(),
    }
    report["levels"] = {str(k): v for k, v in sorted(report["levels"].items())}
    return nl, report


class NetlistGenerator(BaseEstimator):
    """Estimator-style wrapper: ``fit(spec)`` builds ``netlist_`` and ``report_``."""

    def __init__(self, library=None, seed=None):
        self.library = library
        self.seed = seed

    def fit(self, spec: SpecParams, y=None):
        if not isinstance(spec, SpecParams):
            raise TypeError(f"expected SpecParams, got {type(spec).__name__}")
        self.netlist_, self.report_ = generate_netlist(spec, self.library, self.seed)
        return self

    def transform(self, spec: SpecParams) -> Netlist:
        return self.fit(spec).netlist_
