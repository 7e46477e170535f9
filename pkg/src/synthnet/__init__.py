"""Synthetic gate-level netlist generation driven by Rent's-rule parameters."""
from .generator import NetlistGenerator, generate_netlist
from .netlist import CellMaster, Netlist, NetlistError, validate
from .specio import CellLibrary, SpecParams, parse_specfile, write_specfile
from .verilog import read_verilog, write_verilog

__version__ = "0.1.0"

__all__ = [
    "CellLibrary", "CellMaster", "Netlist", "NetlistError", "NetlistGenerator",
    "SpecParams", "generate_netlist", "parse_specfile", "read_verilog",
    "validate", "write_specfile", "write_verilog",
]
