"""Verilog statement model and parser."""

from .model import (
    DesignModel,
    Instance,
    ModuleDef,
    NetDecl,
    Port,
    PortBinding,
    SignalRef,
    SourceSpan,
    Statement,
    StatementKind,
)
from .parser import (
    mask_comments,
    parse_design,
    parse_sources,
    scan_signal_names,
    statements_referencing,
)

__all__ = [
    "DesignModel",
    "Instance",
    "ModuleDef",
    "NetDecl",
    "Port",
    "PortBinding",
    "SignalRef",
    "SourceSpan",
    "Statement",
    "StatementKind",
    "mask_comments",
    "parse_design",
    "parse_sources",
    "scan_signal_names",
    "statements_referencing",
]
