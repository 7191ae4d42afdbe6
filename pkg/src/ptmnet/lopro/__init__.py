"""High-level tape programs: parser, elaborator, and lowering."""

from .elaborate import (
    HighLevelMachine,
    build_highlevel,
    bundled_source,
    compile_source,
    elaborate,
    format_highlevel,
    load_source,
    parse_highlevel,
    resolve_uses,
)
from .lower import LowerError, lower
from .parser import LoproError, Program, parse, parse_module

__all__ = [
    "HighLevelMachine",
    "LoproError",
    "LowerError",
    "Program",
    "build_highlevel",
    "bundled_source",
    "compile_source",
    "elaborate",
    "format_highlevel",
    "load_source",
    "lower",
    "parse",
    "parse_highlevel",
    "parse_module",
    "resolve_uses",
]
