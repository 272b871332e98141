"""Chain-definition language: tokenize, parse, validate, lower, interact."""
from .corpus import COMPILATION_SETS, LISTINGS, compilation_set, read_source
from .interact import MalformedInstanceLiteral, UnknownMethod, eval_interaction
from .lexer import KEYWORDS, LexError, Token, TokenKind, tokenize, untokenize
from .lower import LoweringError, compile_sources, lower_to_config
from .nodes import Program, dump
from .parser import ParseError, parse, parse_source
from .validate import Diagnostic, ValidationReport, validate_program

__all__ = [
    "KEYWORDS",
    "Token",
    "TokenKind",
    "LexError",
    "ParseError",
    "LoweringError",
    "UnknownMethod",
    "MalformedInstanceLiteral",
    "Program",
    "Diagnostic",
    "ValidationReport",
    "LISTINGS",
    "COMPILATION_SETS",
    "tokenize",
    "untokenize",
    "parse",
    "parse_source",
    "validate_program",
    "lower_to_config",
    "compile_sources",
    "eval_interaction",
    "read_source",
    "compilation_set",
    "dump",
]
