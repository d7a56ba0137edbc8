"""Lossless SQL tokenizer.

Every character of the input lands in exactly one token, so joining the
token texts reproduces the source. Strings, comments, quoted identifiers and
``{{ ... }}`` template regions are single tokens; nothing inside them is ever
interpreted by later passes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

KEYWORD = "keyword"
IDENTIFIER = "identifier"
QUOTED_IDENTIFIER = "quoted_identifier"
NUMBER = "number"
STRING = "string"
OPERATOR = "operator"
COMMA = "comma"
LPAREN = "lparen"
RPAREN = "rparen"
SEMICOLON = "semicolon"
COMMENT = "comment"
WHITESPACE = "whitespace"
MACRO = "macro"

TRIVIA = frozenset({WHITESPACE, COMMENT})

# Structural words only. Function names (count, sum, coalesce, ...) are
# deliberately absent so they lex as identifiers.
KEYWORDS = frozenset(
    """
    all alter and any as asc between by case cast create cross cube current
    delete desc distinct drop else end except exists false fetch first following
    for from full group grouping having ilike in inner insert intersect interval
    into is join lateral left like limit merge minus natural not null nulls
    offset on or order outer over partition preceding qualify recursive right
    rollup select set table then top true truncate unbounded union update using
    values view when where with within
    """.split()
)

_MULTI_CHAR_OPERATORS = ("::", "<=", ">=", "<>", "!=", "||", "->>", "->", "=>", "==")
_NUMBER_RE = re.compile(r"(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_IDENT_RE = re.compile(r"[^\W\d]\w*")
_WS_RE = re.compile(r"\s+")
_DIGITS = frozenset("0123456789")
_MACRO_CLOSERS = {"{{": "}}", "{%": "%}", "{#": "#}"}
_SIMPLE = {",": COMMA, "(": LPAREN, ")": RPAREN, ";": SEMICOLON}


class SqlError(Exception):
    """A located failure while lexing or parsing SQL."""

    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f"{message} at line {line}, col {col}")
        self.message = message
        self.line = line
        self.col = col


class LexError(SqlError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int

    def is_kw(self, *words: str) -> bool:
        return self.kind == KEYWORD and self.text.lower() in words

    @property
    def end_line(self) -> int:
        return self.line + self.text.count("\n")


def _advance(line: int, col: int, text: str) -> tuple[int, int]:
    newlines = text.count("\n")
    if newlines:
        return line + newlines, len(text) - text.rfind("\n")
    return line, col + len(text)


def _scan_quoted(sql: str, start: int, quote: str) -> int:
    """Return the index just past the closing quote, or -1. Doubled quotes escape."""
    i = start + 1
    n = len(sql)
    while i < n:
        if sql[i] == quote:
            if i + 1 < n and sql[i + 1] == quote:
                i += 2
                continue
            return i + 1
        i += 1
    return -1


def tokenize(sql: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    n = len(sql)
    line, col = 1, 1

    def emit(kind: str, end: int) -> None:
        nonlocal i, line, col
        text = sql[i:end]
        tokens.append(Token(kind, text, line, col))
        line, col = _advance(line, col, text)
        i = end

    while i < n:
        ch = sql[i]
        two = sql[i : i + 2]
        if ch.isspace():
            emit(WHITESPACE, _WS_RE.match(sql, i).end())
        elif two == "--":
            end = sql.find("\n", i)
            end = n if end == -1 else end
            # trailing blanks belong to the following whitespace token
            body = sql[i:end].rstrip()
            emit(COMMENT, i + len(body))
        elif two == "/*":
            end = sql.find("*/", i + 2)
            if end == -1:
                raise LexError("unterminated block comment", line, col)
            emit(COMMENT, end + 2)
        elif two in _MACRO_CLOSERS:
            end = sql.find(_MACRO_CLOSERS[two], i + 2)
            if end == -1:
                raise LexError("unterminated template region", line, col)
            emit(MACRO, end + 2)
        elif ch == "'":
            end = _scan_quoted(sql, i, "'")
            if end == -1:
                raise LexError("unterminated string literal", line, col)
            emit(STRING, end)
        elif ch in "\"`":
            end = _scan_quoted(sql, i, ch)
            if end == -1:
                raise LexError("unterminated quoted identifier", line, col)
            emit(QUOTED_IDENTIFIER, end)
        elif ch in _SIMPLE:
            emit(_SIMPLE[ch], i + 1)
        elif ch in _DIGITS or (ch == "." and sql[i + 1 : i + 2] in _DIGITS):
            emit(NUMBER, _NUMBER_RE.match(sql, i).end())
        else:
            m = _IDENT_RE.match(sql, i)
            if m:
                word = m.group()
                emit(KEYWORD if word.lower() in KEYWORDS else IDENTIFIER, m.end())
                continue
            for op in _MULTI_CHAR_OPERATORS:
                if sql.startswith(op, i):
                    emit(OPERATOR, i + len(op))
                    break
            else:
                emit(OPERATOR, i + 1)
    return tokens


def split_statements(tokens: list[Token]) -> list[list[Token]]:
    """Split on semicolons at parenthesis depth zero.

    Slices exclude the terminating semicolon. Slices holding nothing but
    whitespace and comments are dropped.
    """
    slices: list[list[Token]] = []
    current: list[Token] = []
    depth = 0
    for tok in tokens:
        if tok.kind == LPAREN:
            depth += 1
        elif tok.kind == RPAREN:
            depth = max(depth - 1, 0)
        elif tok.kind == SEMICOLON and depth == 0:
            slices.append(current)
            current = []
            continue
        current.append(tok)
    slices.append(current)
    return [s for s in slices if any(t.kind not in TRIVIA for t in s)]


def unquote_identifier(text: str) -> str:
    quote = text[0]
    return text[1:-1].replace(quote * 2, quote)
