"""SpecFile model and I/O, plus minimal LEF ingestion for cell masters.

SpecFile grammar (UTF-8, line oriented)::

    # comment
    key = value
    [cells]
    <master> <count-or-weight>
    [submodule "name"]
    key = value
    [cells]
    ...

``[cells]`` always applies to the most recent scope.  Nested submodules use
slash paths (``[submodule "alu/adder"]``) and must follow their parent.
"""
from __future__ import annotations

import dataclasses
import io
import math
import re
from dataclasses import dataclass, field
from importlib import resources

from .netlist import CLOCK, INPUT, OUTPUT, CellMaster

DEFAULT_G_AVG = 0.3
DEFAULT_ALPHA = 1.0
DEFAULT_SIGMA_G = 0.05


class SpecError(ValueError):
    """Base class for SpecFile problems."""


class SpecSyntaxError(SpecError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SpecConstraintError(SpecError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class LefError(ValueError):
    pass


@dataclass
class SpecParams:
    """Target parameter vector of one module plus generator hyperparameters.

    ``n_pi``, ``n_po`` and ``t_avg`` may be left as ``None``; the generator
    then derives them from the cell library and Rent's rule.
    """

    n_inst: int
    p: float
    n_pi: int | None = None
    n_po: int | None = None
    n_macro: int = 0
    r_ratio: float = 0.1
    t_avg: float | None = None
    s_ratio: float = 0.2
    d_min: int = 1
    d_max: int = 40
    md_min: int | None = None
    md_max: int | None = None
    sigma_p: float | None = None
    sigma_g: float = DEFAULT_SIGMA_G
    g_avg: float = DEFAULT_G_AVG
    alpha: float = DEFAULT_ALPHA
    seed: int = 0
    name: str = "top"
    default_ff: str | None = None
    inventory_mode: str = "weights"
    cell_inventory: list[tuple[str, float]] = field(default_factory=list)
    submodules: list[tuple[str, "SpecParams"]] = field(default_factory=list)

    def __post_init__(self):
        if self.sigma_p is None:
            self.sigma_p = self.p / 2
        if self.md_min is None:
            self.md_min = self.d_min
        if self.md_max is None:
            self.md_max = self.d_max
        self.validate()

    def validate(self) -> None:
        def need(cond, name, msg):
            if not cond:
                raise SpecConstraintError(name, msg)

        need(isinstance(self.n_inst, int) and self.n_inst >= 1, "n_inst", "must be a positive integer")
        need(0.0 < self.p < 1.0, "p", "must lie in (0, 1)")
        for key in ("n_pi", "n_po"):
            v = getattr(self, key)
            need(v is None or v >= 0, key, "must be non-negative")
        if self.n_pi is not None and self.n_po is not None:
            need(self.n_pi + self.n_po >= 1, "n_pi", "n_pi + n_po must be at least 1")
        need(self.n_macro >= 0, "n_macro", "must be non-negative")
        need(0.0 < self.r_ratio <= 1.0, "r_ratio", "must lie in (0, 1]")
        need(self.t_avg is None or self.t_avg > 0, "t_avg", "must be positive")
        need(0.0 <= self.s_ratio < 1.0, "s_ratio", "must lie in [0, 1)")
        need(self.d_min >= 0, "d_min", "must be non-negative")
        need(self.d_min <= self.d_max, "d_min", "must not exceed d_max")
        need(self.d_max >= 1, "d_max", "must be at least 1 when combinational logic exists")
        need(self.md_min >= 0, "md_min", "must be non-negative")
        need(self.md_min <= self.md_max, "md_min", "must not exceed md_max")
        need(self.sigma_p >= 0, "sigma_p", "must be non-negative")
        need(self.sigma_g >= 0, "sigma_g", "must be non-negative")
        need(0.0 < self.g_avg < 1.0, "g_avg", "must lie in (0, 1)")
        need(self.alpha >= 0, "alpha", "must be non-negative")
        need(self.inventory_mode in ("weights", "counts"), "inventory_mode",
             "must be 'weights' or 'counts'")
        for master, value in self.cell_inventory:
            need(value >= 0 and math.isfinite(value), "cell_inventory",
                 f"bad value {value!r} for {master}")
        sub_total = sum(sp.n_inst for _, sp in self.submodules)
        need(sub_total <= self.n_inst, "submodules",
             f"submodule instances ({sub_total}) exceed n_inst ({self.n_inst})")
        names = [n for n, _ in self.submodules]
        need(len(set(names)) == len(names), "submodules", "duplicate submodule names")
        if self.inventory_mode == "counts" and self.cell_inventory:
            total = sum(int(v) for _, v in self.cell_inventory)
            need(total == self.own_instances, "cell_inventory",
                 f"counts sum to {total}, expected {self.own_instances}")

    @property
    def own_instances(self) -> int:
        """Instances placed directly in this module (not inside submodules)."""
        return self.n_inst - sum(sp.n_inst for _, sp in self.submodules)

    def replace(self, **changes) -> "SpecParams":
        return dataclasses.replace(self, **changes)


_INT_KEYS = ("n_inst", "n_pi", "n_po", "n_macro", "d_min", "d_max", "md_min", "md_max", "seed")
_FLOAT_KEYS = ("p", "r_ratio", "t_avg", "s_ratio", "sigma_p", "sigma_g", "g_avg", "alpha")
_STR_KEYS = ("name", "default_ff", "inventory_mode")
_KEY_ORDER = ("name", "n_inst", "n_pi", "n_po", "n_macro", "r_ratio", "p", "t_avg", "s_ratio",
              "d_min", "d_max", "md_min", "md_max", "sigma_p", "sigma_g", "g_avg", "alpha",
              "seed", "default_ff", "inventory_mode")

_SECTION = re.compile(r'^\[\s*(cells|submodule\s+"([^"]+)")\s*\]$')


def _read_text(source) -> str:
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    return source


def parse_specfile(source) -> SpecParams:
    """Parse SpecFile text (str, bytes or stream) into :class:`SpecParams`."""
    text = _read_text(source)
    scopes: dict[str, dict] = {"": {"keys": {}, "cells": [], "children": [], "line": 1}}
    current = ""
    in_cells = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            m = _SECTION.match(line)
            if not m:
                raise SpecSyntaxError(f"bad section header {line!r}", lineno)
            if m.group(1) == "cells":
                in_cells = True
                continue
            path = m.group(2).strip()
            if not path or path in scopes:
                raise SpecSyntaxError(f"duplicate or empty submodule {path!r}", lineno)
            parent = path.rsplit("/", 1)[0] if "/" in path else ""
            if parent not in scopes:
                raise SpecSyntaxError(f"submodule {path!r} precedes its parent", lineno)
            scopes[path] = {"keys": {}, "cells": [], "children": [], "line": lineno}
            scopes[parent]["children"].append(path)
            current = path
            in_cells = False
            continue
        scope = scopes[current]
        if in_cells:
            parts = line.split()
            if len(parts) != 2:
                raise SpecSyntaxError(f"expected '<master> <value>', got {line!r}", lineno)
            scope["cells"].append((parts[0], _number(parts[1], lineno)))
            continue
        if "=" not in line:
            raise SpecSyntaxError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in scope["keys"]:
            raise SpecSyntaxError(f"duplicate key {key!r}", lineno)
        scope["keys"][key] = (_convert(key, value, lineno), lineno)
    return _build(scopes, "")


def _number(text: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SpecSyntaxError(f"not a number: {text!r}", lineno) from None
    return int(value) if value.is_integer() and "." not in text and "e" not in text.lower() \
        else value


def _convert(key: str, value: str, lineno: int):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise SpecSyntaxError(f"bad value for {key}: {value!r}", lineno) from None
    if key in _STR_KEYS:
        return value.strip('"')
    raise SpecSyntaxError(f"unknown key {key!r}", lineno)


def _build(scopes, path) -> SpecParams:
    scope = scopes[path]
    keys = {k: v for k, (v, _) in scope["keys"].items()}
    for req in ("n_inst", "p"):
        if req not in keys:
            where = f"submodule {path!r}" if path else "top module"
            raise SpecSyntaxError(f"missing required key {req!r} in {where}", scope["line"])
    subs = []
    for child in scope["children"]:
        subs.append((child.rsplit("/", 1)[-1], _build(scopes, child)))
    if path and "name" not in keys:
        keys["name"] = path.rsplit("/", 1)[-1]
    return SpecParams(cell_inventory=list(scope["cells"]), submodules=subs, **keys)


def write_specfile(params: SpecParams, sink=None) -> str | None:
    """Serialise ``params``; ``parse_specfile`` of the result compares equal."""
    lines: list[str] = []
    _write_scope(params, "", lines)
    text = "\n".join(lines) + "\n"
    if sink is None:
        return text
    if isinstance(sink, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(sink, "mode", ""):
        sink.write(text.encode("utf-8"))
    else:
        sink.write(text)
    return None


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_scope(params: SpecParams, path: str, lines: list[str]) -> None:
    if path:
        lines.append("")
        lines.append(f'[submodule "{path}"]')
    for key in _KEY_ORDER:
        value = getattr(params, key)
        if value is None:
            continue
        lines.append(f"{key} = {_fmt(value)}")
    if params.cell_inventory:
        lines.append("[cells]")
        for master, value in params.cell_inventory:
            lines.append(f"{master} {_fmt(value)}")
    for name, sub in params.submodules:
        _write_scope(sub, f"{path}/{name}" if path else name, lines)


# -- LEF ------------------------------------------------------------------

DEFAULT_CLOCK_NAMES = ("CLK", "CK", "clk", "clock", "CLOCK")


def parse_lef_masters(source, clock_names=DEFAULT_CLOCK_NAMES) -> list[CellMaster]:
    """Extract cell masters (name, signal pins, class) from LEF text.

    Geometry, sites, layers and power/ground pins are skipped.
    """
    text = _read_text(source)
    tokens = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        for tok in line.replace(";", " ; ").split():
            tokens.append((tok, lineno))
    masters = []
    i, n = 0, len(tokens)
    while i < n:
        tok, lineno = tokens[i]
        if tok != "MACRO":
            i += 1
            continue
        if i + 1 >= n:
            raise LefError(f"line {lineno}: MACRO without a name")
        name = tokens[i + 1][0]
        i, master = _parse_macro(tokens, i + 2, name, lineno, clock_names)
        masters.append(master)
    return masters


def _skip_statement(tokens, i):
    while i < len(tokens) and tokens[i][0] != ";":
        i += 1
    return i + 1


def _parse_macro(tokens, i, name, start_line, clock_names):
    n = len(tokens)
    macro_class = "CORE"
    pins = []
    while True:
        if i >= n:
            raise LefError(f"line {start_line}: MACRO {name} is never closed")
        tok, lineno = tokens[i]
        if tok == "END":
            if i + 1 >= n or tokens[i + 1][0] != name:
                got = tokens[i + 1][0] if i + 1 < n else "end of file"
                raise LefError(f"line {lineno}: unbalanced END in MACRO {name} (got {got})")
            i += 2
            break
        if tok == "CLASS":
            macro_class = tokens[i + 1][0]
            i = _skip_statement(tokens, i)
        elif tok == "PIN":
            pname = tokens[i + 1][0]
            i, pin = _parse_pin(tokens, i + 2, pname, name, lineno)
            if pin is not None:
                pins.append(pin)
        elif tok == "OBS":
            i = _skip_block(tokens, i + 1, name, lineno)
        else:
            i = _skip_statement(tokens, i)
    is_macro = macro_class.upper() == "BLOCK"
    resolved = []
    for pname, direction, use in pins:
        if direction == INPUT and (use == "CLOCK" or pname in clock_names):
            direction = CLOCK
        resolved.append((pname, direction))
    n_clock = sum(1 for _, d in resolved if d == CLOCK)
    is_seq = (not is_macro) and n_clock >= 1
    if is_seq and n_clock > 1:
        first = True
        fixed = []
        for pname, d in resolved:
            if d == CLOCK and not first:
                d = INPUT
            elif d == CLOCK:
                first = False
            fixed.append((pname, d))
        resolved = fixed
    if not resolved:
        raise LefError(f"line {start_line}: MACRO {name} has no signal pins")
    return i, CellMaster(name, tuple(resolved), is_sequential=is_seq, is_macro=is_macro)


def _skip_block(tokens, i, macro, start_line):
    while i < len(tokens):
        tok = tokens[i][0]
        if tok == "END" and (i + 1 >= len(tokens) or tokens[i + 1][0] in (";",) or
                             tokens[i + 1][0] in ("END", "PIN", "OBS", "PROPERTY")
                             or tokens[i + 1][0] == macro):
            return i + 1
        i += 1
    raise LefError(f"line {start_line}: unterminated block in MACRO {macro}")


def _parse_pin(tokens, i, pname, macro, start_line):
    direction = None
    use = "SIGNAL"
    n = len(tokens)
    while True:
        if i >= n:
            raise LefError(f"line {start_line}: PIN {pname} of {macro} is never closed")
        tok, lineno = tokens[i]
        if tok == "END":
            nxt = tokens[i + 1][0] if i + 1 < n else None
            if nxt == pname:
                i += 2
                break
            if nxt == macro:
                raise LefError(f"line {lineno}: unbalanced END in PIN {pname} of {macro}")
            i += 1  # closes a PORT block
            continue
        if tok == "DIRECTION":
            direction = tokens[i + 1][0].upper()
            i = _skip_statement(tokens, i)
        elif tok == "USE":
            use = tokens[i + 1][0].upper()
            i = _skip_statement(tokens, i)
        elif tok == "PORT":
            i += 1
        else:
            i = _skip_statement(tokens, i)
    if use in ("POWER", "GROUND"):
        return i, None
    if direction is None:
        raise LefError(f"line {start_line}: PIN {pname} of {macro} has no DIRECTION")
    mapped = OUTPUT if direction == "OUTPUT" else INPUT
    return i, (pname, mapped, use)


@dataclass
class CellLibrary:
    """Cell masters by name plus the flip-flop used when ``Q_seq`` runs dry."""

    masters: dict[str, CellMaster]
    default_flipflop: CellMaster

    def __post_init__(self):
        if not any(m.is_sequential for m in self.masters.values()):
            raise ValueError("library needs at least one sequential master")
        if not any(not m.is_sequential and not m.is_macro for m in self.masters.values()):
            raise ValueError("library needs at least one combinational master")
        if not self.default_flipflop.is_sequential:
            raise ValueError(f"{self.default_flipflop.name} is not sequential")

    @classmethod
    def from_masters(cls, masters, default_ff: str | None = None, inventory=None):
        by_name = {m.name: m for m in masters}
        if default_ff is not None:
            if default_ff not in by_name:
                raise ValueError(f"unknown default flip-flop {default_ff!r}")
            ff = by_name[default_ff]
        else:
            ff = _pick_default_ff(by_name, inventory or [])
        return cls(by_name, ff)

    @classmethod
    def from_lef(cls, source, default_ff: str | None = None, inventory=None):
        return cls.from_masters(parse_lef_masters(source), default_ff, inventory)

    @classmethod
    def default(cls):
        return cls.from_lef(default_lef_text())

    def __getitem__(self, name: str) -> CellMaster:
        return self.masters[name]

    def __contains__(self, name: str) -> bool:
        return name in self.masters

    def __iter__(self):
        return iter(self.masters.values())

    def combinational(self) -> list[CellMaster]:
        return [m for m in self.masters.values() if not m.is_sequential and not m.is_macro]


def _pick_default_ff(by_name, inventory):
    """Most used flip-flop in the inventory, else the simplest one in the library."""
    best = None
    for name, value in inventory:
        m = by_name.get(name)
        if m is not None and m.is_sequential and (best is None or value > best[1]):
            best = (m, value)
    if best is not None:
        return best[0]
    seqs = [m for m in by_name.values() if m.is_sequential]
    if not seqs:
        raise ValueError("library needs at least one sequential master")
    return min(seqs, key=lambda m: (len(m.pins), m.name))


def default_lef_text() -> str:
    return resources.files("synthnet").joinpath("data/asap7_mini.lef").read_text("utf-8")


# Rough instance mix of a synthesized block on the bundled library.
DEFAULT_INVENTORY = (
    ("INVx1_ASAP7_75t_R", 0.18),
    ("BUFx2_ASAP7_75t_R", 0.08),
    ("NAND2xp5_ASAP7_75t_R", 0.16),
    ("NOR2xp33_ASAP7_75t_R", 0.10),
    ("AND2x2_ASAP7_75t_R", 0.08),
    ("OR2x2_ASAP7_75t_R", 0.05),
    ("XOR2xp5_ASAP7_75t_R", 0.05),
    ("NAND3xp33_ASAP7_75t_R", 0.04),
    ("NOR3xp33_ASAP7_75t_R", 0.03),
    ("AOI21xp5_ASAP7_75t_R", 0.07),
    ("OAI21xp5_ASAP7_75t_R", 0.07),
    ("AOI22xp5_ASAP7_75t_R", 0.04),
    ("MAJIxp5_ASAP7_75t_R", 0.02),
    ("HAxp5_ASAP7_75t_R", 0.015),
    ("FAx1_ASAP7_75t_R", 0.015),
    ("DFFHQNx1_ASAP7_75t_R", 1.0),
)
