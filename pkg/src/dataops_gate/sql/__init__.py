from .ast import ColumnRef, CteDef, MacroRef, RelationRef, SelectBody, SelectItem, SqlAst, Statement
from .lexer import LexError, SqlError, Token, split_statements, tokenize
from .parser import ParseError, parse_macro, parse_model, parse_tokens, scan_macros

__all__ = [
    "ColumnRef",
    "CteDef",
    "LexError",
    "MacroRef",
    "ParseError",
    "RelationRef",
    "SelectBody",
    "SelectItem",
    "SqlAst",
    "SqlError",
    "Statement",
    "Token",
    "parse_macro",
    "parse_model",
    "parse_tokens",
    "scan_macros",
    "split_statements",
    "tokenize",
]
