"""Recursive-descent parser for the SELECT subset the checks inspect.

Only query structure is modelled: WITH lists, select items, FROM/JOIN
relations, set operations and nested subqueries. Everything else is consumed
token by token without interpretation, so unknown syntax never produces
structure that a check could misread.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Optional

from .ast import ColumnRef, CteDef, MacroRef, RelationRef, SelectBody, SelectItem, SqlAst, Statement
from .lexer import (
    COMMA,
    IDENTIFIER,
    LPAREN,
    MACRO,
    NUMBER,
    OPERATOR,
    QUOTED_IDENTIFIER,
    RPAREN,
    SEMICOLON,
    STRING,
    TRIVIA,
    SqlError,
    Token,
    split_statements,
    tokenize,
    unquote_identifier,
)

MAX_DEPTH = 150

_MACRO_RE = re.compile(
    r"""^\{\{\s*(ref|source)\s*\(\s*(['"])([^'"]+)\2\s*(?:,\s*(['"])([^'"]+)\4\s*)?\)\s*\}\}$""",
    re.DOTALL,
)
_SET_OPS = ("union", "intersect", "except", "minus")
_ITEM_STOP = ("from", "where", "group", "having", "qualify", "order", "limit", "offset", "fetch", "into") + _SET_OPS
_CLAUSES = ("where", "group", "having", "qualify", "order", "limit", "offset", "fetch")
_NAME_KINDS = (IDENTIFIER, QUOTED_IDENTIFIER)
# tokens after which a trailing identifier is read as an implicit alias
_ALIASABLE_KINDS = (IDENTIFIER, QUOTED_IDENTIFIER, RPAREN, NUMBER, STRING, MACRO)
_ALIASABLE_KWS = ("end", "null", "true", "false")
_DML_KINDS = ("create", "insert", "update", "delete")


class ParseError(SqlError):
    pass


def parse_macro(tok: Token) -> Optional[MacroRef]:
    """Decode a ``{{ ref('x') }}`` / ``{{ source('a', 'b') }}`` token, else None."""
    m = _MACRO_RE.match(tok.text)
    if not m:
        return None
    kind = m.group(1)
    args = (m.group(3),) if m.group(5) is None else (m.group(3), m.group(5))
    if (kind == "ref") != (len(args) == 1):
        return None
    return MacroRef(kind, args, tok.line, tok.col)


def scan_macros(tokens: list[Token]) -> tuple[tuple[MacroRef, ...], tuple[Token, ...]]:
    refs: list[MacroRef] = []
    unsupported: list[Token] = []
    for tok in tokens:
        if tok.kind != MACRO:
            continue
        ref = parse_macro(tok)
        if ref is None:
            unsupported.append(tok)
        else:
            refs.append(ref)
    return tuple(refs), tuple(unsupported)


def _name(tok: Token) -> str:
    return unquote_identifier(tok.text) if tok.kind == QUOTED_IDENTIFIER else tok.text


@dataclass
class _Acc:
    relations: list[RelationRef] = field(default_factory=list)
    columns: list[tuple[int, ColumnRef]] = field(default_factory=list)
    subqueries: list[SelectBody] = field(default_factory=list)

    def build(self, items: list[SelectItem]) -> SelectBody:
        return SelectBody(
            select_items=tuple(items),
            from_relations=tuple(self.relations),
            referenced_columns=tuple(ref for _, ref in self.columns),
            subqueries=tuple(self.subqueries),
        )


def _with_local(body: SelectBody, ctes: tuple[CteDef, ...]) -> SelectBody:
    if not ctes:
        return body
    return replace(
        body,
        subqueries=body.subqueries + tuple(c.body for c in ctes),
        local_ctes=body.local_ctes + tuple(c.name for c in ctes),
    )


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.toks = [t for t in tokens if t.kind not in TRIVIA]
        self.i = 0
        self.depth = 0
        self.scopes: list[set[str]] = []

    # -- cursor helpers -------------------------------------------------
    def peek(self, k: int = 0) -> Optional[Token]:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def at_kw(self, *words: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.is_kw(*words)

    def at_kind(self, kind: str, k: int = 0) -> bool:
        tok = self.peek(k)
        return tok is not None and tok.kind == kind

    def at_op(self, text: str, k: int = 0) -> bool:
        tok = self.peek(k)
        return tok is not None and tok.kind == OPERATOR and tok.text == text

    def fail(self, message: str) -> ParseError:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1] if self.toks else None
            if last is None:
                return ParseError(f"{message}, found end of input", 1, 1)
            return ParseError(f"{message}, found end of input", last.end_line, last.col + len(last.text))
        return ParseError(f"{message}, found {tok.text[:20]!r}", tok.line, tok.col)

    def expect_kind(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            raise self.fail(f"expected {what}")
        self.i += 1
        return tok

    def starts_query(self, k: int = 0) -> bool:
        while self.at_kind(LPAREN, k):
            k += 1
        tok = self.peek(k)
        return tok is not None and tok.is_kw("select", "with")

    def enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise self.fail("nesting too deep")

    def is_cte(self, name: str) -> bool:
        low = name.lower()
        return any(low in scope for scope in self.scopes)

    # -- grammar --------------------------------------------------------
    def statement(self) -> Statement:
        while self.at_kind(MACRO):
            self.i += 1
        first = self.peek()
        if first is None:
            return Statement("other")
        last = self.toks[-1]
        span = (first.line, last.end_line)
        if first.is_kw("select", "with") or (first.kind == LPAREN and self.starts_query()):
            ctes, body = self.query()
            while self.at_kind(MACRO):
                self.i += 1
            if self.peek() is not None:
                raise self.fail("unexpected token after query")
            return Statement("select", ctes, body, span)
        kind = first.text.lower() if first.is_kw(*_DML_KINDS) else "other"
        return Statement(kind, span=span)

    def query(self) -> tuple[tuple[CteDef, ...], SelectBody]:
        self.enter()
        names: set[str] = set()
        self.scopes.append(names)
        ctes: list[CteDef] = []
        try:
            if self.at_kw("with"):
                self.i += 1
                if self.at_kw("recursive"):
                    self.i += 1
                while True:
                    ctes.append(self.cte(names))
                    if not self.at_kind(COMMA):
                        break
                    self.i += 1
            body = self.set_expr()
        finally:
            self.scopes.pop()
            self.depth -= 1
        return tuple(ctes), body

    def cte(self, names: set[str]) -> CteDef:
        name_tok = self.peek()
        if name_tok is None or name_tok.kind not in _NAME_KINDS:
            raise self.fail("expected CTE name")
        self.i += 1
        name = _name(name_tok)
        if self.at_kind(LPAREN):
            self.skip_group()
        if not self.at_kw("as"):
            raise self.fail(f"expected AS after CTE name {name!r}")
        self.i += 1
        if self.at_kw("not"):
            self.i += 1
        tok = self.peek()
        if tok is not None and tok.kind == IDENTIFIER and tok.text.lower() == "materialized":
            self.i += 1
        self.expect_kind(LPAREN, f"'(' opening CTE {name!r}")
        names.add(name.lower())
        inner, body = self.query()
        close = self.expect_kind(RPAREN, f"')' closing CTE {name!r}")
        return CteDef(name, _with_local(body, inner), (name_tok.line, close.line), name_tok.line, name_tok.col)

    def set_expr(self) -> SelectBody:
        arms = [self.set_arm()]
        while self.at_kw(*_SET_OPS):
            self.i += 1
            if self.at_kw("all", "distinct"):
                self.i += 1
            arms.append(self.set_arm())
        if len(arms) == 1:
            return arms[0]
        return SelectBody(
            select_items=arms[0].select_items,
            from_relations=tuple(r for a in arms for r in a.from_relations),
            referenced_columns=tuple(c for a in arms for c in a.referenced_columns),
            set_op_arms=sum(a.set_op_arms for a in arms),
            subqueries=tuple(s for a in arms for s in a.subqueries),
            local_ctes=tuple(n for a in arms for n in a.local_ctes),
        )

    def set_arm(self) -> SelectBody:
        if self.at_kind(LPAREN) and self.starts_query():
            self.i += 1
            inner, body = self.query()
            self.expect_kind(RPAREN, "')' closing parenthesized query")
            body = _with_local(body, inner)
            acc = _Acc()
            self.tail(acc)
            if acc.relations or acc.columns or acc.subqueries:
                body = replace(
                    body,
                    from_relations=body.from_relations + tuple(acc.relations),
                    referenced_columns=body.referenced_columns + tuple(c for _, c in acc.columns),
                    subqueries=body.subqueries + tuple(acc.subqueries),
                )
            return body
        return self.select_core()

    def select_core(self) -> SelectBody:
        if not self.at_kw("select"):
            raise self.fail("expected SELECT")
        self.i += 1
        acc = _Acc()
        if self.at_kw("distinct"):
            self.i += 1
            if self.at_kw("on"):
                self.i += 1
                if self.at_kind(LPAREN):
                    self.group(acc)
        elif self.at_kw("all"):
            self.i += 1
        if self.at_kw("top"):
            self.i += 1
            if self.at_kind(NUMBER):
                self.i += 1
            elif self.at_kind(LPAREN):
                self.group(acc)
        items: list[SelectItem] = []
        while True:
            start = self.i
            mark = len(acc.columns)
            self.expr(acc)
            if self.i == start:
                raise self.fail("expected a select item")
            items.append(self.make_item(start, acc, mark))
            if not self.at_kind(COMMA):
                break
            self.i += 1
        self.tail(acc)
        return acc.build(items)

    def expr(self, acc: _Acc) -> None:
        while True:
            tok = self.peek()
            if tok is None or tok.kind in (COMMA, RPAREN, SEMICOLON) or tok.is_kw(*_ITEM_STOP):
                return
            if tok.kind == LPAREN:
                self.group(acc)
            else:
                self.atom(acc)

    def tail(self, acc: _Acc) -> None:
        in_from = False
        while True:
            tok = self.peek()
            if tok is None or tok.kind in (RPAREN, SEMICOLON) or tok.is_kw(*_SET_OPS):
                return
            if tok.is_kw("from"):
                self.i += 1
                in_from = True
                self.relation(acc)
            elif tok.is_kw("join"):
                self.i += 1
                self.relation(acc)
            elif tok.kind == COMMA and in_from:
                self.i += 1
                self.relation(acc)
            elif tok.is_kw(*_CLAUSES):
                in_from = False
                self.i += 1
            elif tok.kind == LPAREN:
                self.group(acc)
            else:
                self.atom(acc)

    def group(self, acc: _Acc) -> None:
        """Consume a parenthesized group, parsing it as a subquery when it is one."""
        if self.starts_query(1):
            self.i += 1
            inner, body = self.query()
            self.expect_kind(RPAREN, "')' closing subquery")
            acc.subqueries.append(_with_local(body, inner))
            return
        self.enter()
        self.i += 1
        while not self.at_kind(RPAREN):
            if self.peek() is None:
                raise self.fail("expected ')'")
            if self.at_kind(LPAREN):
                self.group(acc)
            else:
                self.atom(acc)
        self.i += 1
        self.depth -= 1

    def skip_group(self) -> None:
        depth = 0
        while True:
            tok = self.peek()
            if tok is None:
                raise self.fail("expected ')'")
            self.i += 1
            if tok.kind == LPAREN:
                depth += 1
            elif tok.kind == RPAREN:
                depth -= 1
                if depth == 0:
                    return

    def chain(self) -> list[Token]:
        """Consume ``name(.name)*``; a trailing ``.*`` is left unconsumed."""
        parts = [self.toks[self.i]]
        self.i += 1
        while self.at_op(".") and self.peek(1) is not None and self.peek(1).kind in _NAME_KINDS:
            parts.append(self.toks[self.i + 1])
            self.i += 2
        return parts

    def atom(self, acc: _Acc) -> None:
        tok = self.peek()
        if tok.kind not in _NAME_KINDS:
            self.i += 1
            return
        start = self.i
        parts = self.chain()
        if self.at_op(".") and self.at_op("*", 1):
            self.i += 2
            return
        if self.at_kind(LPAREN):
            return  # function call; the argument group is scanned by the caller
        names = [_name(p) for p in parts]
        qualifier = ".".join(names[:-1]) or None
        acc.columns.append((start, ColumnRef(names[-1], qualifier, tok.line, tok.col)))

    def relation(self, acc: _Acc) -> None:
        while self.at_kw("lateral") or (self.at_kind(IDENTIFIER) and self.peek().text.lower() == "only"):
            self.i += 1
        tok = self.peek()
        if tok is None:
            raise self.fail("expected a relation")
        rel: Optional[RelationRef] = None
        if tok.kind == LPAREN:
            self.group(acc)  # derived table or parenthesized join
        elif tok.kind == MACRO:
            self.i += 1
            ref = parse_macro(tok)
            if ref is not None:
                rel = RelationRef(macro=ref, line=tok.line, col=tok.col)
        elif tok.kind in _NAME_KINDS:
            parts = self.chain()
            if self.at_kind(LPAREN):
                self.group(acc)  # table function
            else:
                name = ".".join(_name(p) for p in parts)
                if len(parts) == 1 and self.is_cte(name):
                    rel = RelationRef(cte=name, line=tok.line, col=tok.col)
                else:
                    rel = RelationRef(raw_table=name, line=tok.line, col=tok.col)
        else:
            raise self.fail("expected a relation")
        alias: Optional[str] = None
        if self.at_kw("as"):
            self.i += 1
            alias_tok = self.peek()
            if alias_tok is None or alias_tok.kind not in _NAME_KINDS:
                raise self.fail("expected alias after AS")
            self.i += 1
            alias = _name(alias_tok)
        elif self.at_kind(IDENTIFIER) or self.at_kind(QUOTED_IDENTIFIER):
            alias = _name(self.peek())
            self.i += 1
        if alias is not None and self.at_kind(LPAREN):
            self.skip_group()
        if rel is not None:
            acc.relations.append(replace(rel, alias=alias))

    def make_item(self, start: int, acc: _Acc, mark: int) -> SelectItem:
        toks = self.toks[start : self.i]
        if len(toks) == 1 and toks[0].kind == OPERATOR and toks[0].text == "*":
            return SelectItem(tuple(toks), is_star=True)
        if (
            len(toks) >= 3
            and toks[-1].kind == OPERATOR
            and toks[-1].text == "*"
            and toks[-2].text == "."
            and all(t.kind in _NAME_KINDS for t in toks[:-2:2])
            and all(t.text == "." for t in toks[1:-2:2])
        ):
            qualifier = ".".join(_name(t) for t in toks[:-2:2])
            return SelectItem(tuple(toks), is_star=True, star_qualifier=qualifier)
        alias_tok: Optional[Token] = None
        expr = toks
        if len(toks) >= 3 and toks[-2].is_kw("as") and toks[-1].kind in _NAME_KINDS:
            alias_tok, expr = toks[-1], toks[:-2]
        elif (
            len(toks) >= 2
            and toks[-1].kind in _NAME_KINDS
            and (toks[-2].kind in _ALIASABLE_KINDS or toks[-2].is_kw(*_ALIASABLE_KWS))
        ):
            alias_tok, expr = toks[-1], toks[:-1]
        if alias_tok is not None:
            alias_index = start + len(toks) - 1
            acc.columns[mark:] = [(i, c) for i, c in acc.columns[mark:] if i != alias_index]
        bare = None
        if (
            expr
            and len(expr) % 2 == 1
            and all(t.kind in _NAME_KINDS for t in expr[::2])
            and all(t.kind == OPERATOR and t.text == "." for t in expr[1::2])
        ):
            bare = _name(expr[-1])
        return SelectItem(
            tuple(toks),
            alias=_name(alias_tok) if alias_tok is not None else None,
            alias_token=alias_tok,
            bare_column=bare,
        )


def parse_tokens(tokens: list[Token]) -> SqlAst:
    refs, unsupported = scan_macros(tokens)
    statements = tuple(_Parser(chunk).statement() for chunk in split_statements(tokens))
    return SqlAst(statements, refs, unsupported)


def parse_model(sql: str) -> SqlAst:
    """Parse one model file. Raises LexError or ParseError, both located."""
    return parse_tokens(tokenize(sql))
