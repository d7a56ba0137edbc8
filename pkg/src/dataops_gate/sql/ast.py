from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

from .lexer import Token


@dataclass(frozen=True)
class MacroRef:
    kind: str  # "ref" | "source"
    args: tuple[str, ...]
    line: int
    col: int


@dataclass(frozen=True)
class ColumnRef:
    name: str
    qualifier: Optional[str] = None
    line: int = 0
    col: int = 0

    @property
    def qualified(self) -> str:
        return f"{self.qualifier}.{self.name}" if self.qualifier else self.name


@dataclass(frozen=True)
class RelationRef:
    """One FROM/JOIN target. Exactly one of cte, macro, raw_table is set."""

    cte: Optional[str] = None
    macro: Optional[MacroRef] = None
    raw_table: Optional[str] = None
    alias: Optional[str] = None
    line: int = 0
    col: int = 0


@dataclass(frozen=True)
class SelectItem:
    expr_tokens: tuple[Token, ...]
    alias: Optional[str] = None
    alias_token: Optional[Token] = None
    is_star: bool = False
    star_qualifier: Optional[str] = None
    bare_column: Optional[str] = None

    @property
    def output_name(self) -> Optional[str]:
        return self.alias if self.alias is not None else self.bare_column

    @property
    def line(self) -> int:
        tok = self.alias_token or (self.expr_tokens[0] if self.expr_tokens else None)
        return tok.line if tok else 0

    @property
    def col(self) -> int:
        tok = self.alias_token or (self.expr_tokens[0] if self.expr_tokens else None)
        return tok.col if tok else 0


@dataclass(frozen=True)
class SelectBody:
    select_items: tuple[SelectItem, ...]
    from_relations: tuple[RelationRef, ...] = ()
    referenced_columns: tuple[ColumnRef, ...] = ()
    set_op_arms: int = 1
    subqueries: tuple["SelectBody", ...] = ()
    # CTE names introduced by a WITH nested inside this body
    local_ctes: tuple[str, ...] = ()

    @property
    def subquery_count(self) -> int:
        return sum(1 + sub.subquery_count for sub in self.subqueries)

    def walk(self) -> Iterator["SelectBody"]:
        yield self
        for sub in self.subqueries:
            yield from sub.walk()

    def deep_relations(self) -> list[RelationRef]:
        """Relations read by this body or any nested subquery.

        References to CTEs defined by a WITH nested inside this body are
        local and left out.
        """
        out = list(self.from_relations)
        for sub in self.subqueries:
            out.extend(sub.deep_relations())
        local = {n.lower() for n in self.local_ctes}
        return [r for r in out if not (r.cte and r.cte.lower() in local)]

    def deep_columns(self) -> list[ColumnRef]:
        out = list(self.referenced_columns)
        for sub in self.subqueries:
            out.extend(sub.deep_columns())
        return out

    def deep_items(self) -> list[SelectItem]:
        return [item for body in self.walk() for item in body.select_items]


@dataclass(frozen=True)
class CteDef:
    name: str
    body: SelectBody
    span: tuple[int, int]
    line: int = 0
    col: int = 0


@dataclass(frozen=True)
class Statement:
    kind: str  # select | create | insert | update | delete | other
    ctes: tuple[CteDef, ...] = ()
    final_select: Optional[SelectBody] = None
    span: tuple[int, int] = (0, 0)

    def bodies(self) -> list[SelectBody]:
        out = [c.body for c in self.ctes]
        if self.final_select is not None:
            out.append(self.final_select)
        return out


@dataclass(frozen=True)
class SqlAst:
    statements: tuple[Statement, ...] = ()
    macro_refs: tuple[MacroRef, ...] = ()
    unsupported_macros: tuple[Token, ...] = field(default=())

    @property
    def single_select(self) -> Optional[Statement]:
        if len(self.statements) == 1 and self.statements[0].kind == "select":
            return self.statements[0]
        return None

    @property
    def primary_select(self) -> Optional[SelectBody]:
        """Final select of the first statement, used for output-column checks."""
        if self.statements and self.statements[0].final_select is not None:
            return self.statements[0].final_select
        return None
