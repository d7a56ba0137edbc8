"""Lint stage: naming convention, SQL formatting rules and tag validation."""

from __future__ import annotations

import re
from typing import Optional

from ..config import LintRuleSet, PipelineConfig
from ..findings import Finding, finding
from ..project import ModelUnit
from ..sql.ast import SqlAst
from ..sql.lexer import COMMA, COMMENT, KEYWORD, QUOTED_IDENTIFIER, WHITESPACE, LexError, Token, tokenize

SNAKE_CASE = re.compile(r"[a-z][a-z0-9_]*")
TAB_WIDTH = 4


# -- J1.1 ---------------------------------------------------------------------


def check_naming_convention(model: ModelUnit, ast: Optional[SqlAst]) -> list[Finding]:
    cid = "check_naming_convention"
    out: list[Finding] = []
    if not SNAKE_CASE.fullmatch(model.name):
        out.append(finding(cid, f"model file name {model.name!r} is not snake_case", model.name, 1, 1))
    if ast is None:
        return out
    flagged: set[tuple[int, int]] = set()
    for stmt in ast.statements:
        for body in stmt.bodies():
            for sub in body.walk():
                for item in sub.select_items:
                    if item.alias is None or SNAKE_CASE.fullmatch(item.alias):
                        continue
                    tok = item.alias_token
                    flagged.add((tok.line, tok.col))
                    out.append(
                        finding(cid, f"column alias {item.alias!r} is not snake_case", model.name, tok.line, tok.col)
                    )
                for tok in item_quoted_names(sub):
                    if (tok.line, tok.col) in flagged:
                        continue
                    flagged.add((tok.line, tok.col))
                    out.append(
                        finding(
                            cid,
                            f"quoted identifier {tok.text} contains uppercase letters",
                            model.name,
                            tok.line,
                            tok.col,
                        )
                    )
    return sorted(out, key=lambda f: (f.line or 0, f.col or 0, f.message))


def item_quoted_names(body) -> list[Token]:
    """Quoted identifiers with uppercase letters in a body's select items.

    A bare unaliased column reference passes raw source names through and is
    exempt.
    """
    out = []
    for item in body.select_items:
        if item.alias is None and item.bare_column is not None:
            continue
        for tok in item.expr_tokens:
            if tok.kind == QUOTED_IDENTIFIER and any(c.isupper() for c in tok.text):
                if tok is not item.alias_token:
                    out.append(tok)
    return out


# -- J1.2 ---------------------------------------------------------------------


def _prev_code(tokens: list[Token], i: int) -> Optional[int]:
    """Index of the nearest earlier non-whitespace token, or None."""
    j = i - 1
    while j >= 0 and tokens[j].kind == WHITESPACE:
        j -= 1
    return j if j >= 0 else None


def _next_code(tokens: list[Token], i: int) -> Optional[int]:
    j = i + 1
    while j < len(tokens) and tokens[j].kind == WHITESPACE:
        j += 1
    return j if j < len(tokens) else None


def _starts_line(tokens: list[Token], i: int) -> bool:
    return i == 0 or (tokens[i - 1].kind == WHITESPACE and "\n" in tokens[i - 1].text) or (
        i == 1 and tokens[0].kind == WHITESPACE
    )


def _ends_line(tokens: list[Token], i: int) -> bool:
    nxt = i + 1
    return nxt >= len(tokens) or (tokens[nxt].kind == WHITESPACE and "\n" in tokens[nxt].text)


def _misplaced_commas(tokens: list[Token], style: str) -> list[int]:
    """Commas that break the comma style and can be moved without crossing a comment."""
    out = []
    for i, tok in enumerate(tokens):
        if tok.kind != COMMA:
            continue
        if style == "trailing" and _starts_line(tokens, i):
            prev = _prev_code(tokens, i)
            if prev is not None and tokens[prev].kind != COMMENT:
                out.append(i)
        elif style == "leading" and _ends_line(tokens, i):
            nxt = _next_code(tokens, i)
            if nxt is not None and tokens[nxt].kind != COMMENT:
                out.append(i)
    return out


def _ws_lines(tokens: list[Token]):
    """Yield (token index, segment index, segment, line, col, is_last_segment) for whitespace."""
    for i, tok in enumerate(tokens):
        if tok.kind != WHITESPACE:
            continue
        line, col = tok.line, tok.col
        segments = tok.text.split("\n")
        for k, seg in enumerate(segments):
            yield i, k, seg, line, col, k == len(segments) - 1
            line += 1
            col = 1


def _keyword_text(tok: Token, case: str) -> str:
    return tok.text.upper() if case == "upper" else tok.text.lower()


def check_sql_lint(model: ModelUnit, rules: LintRuleSet) -> list[Finding]:
    cid = "check_sql_lint"
    name = model.name
    try:
        tokens = tokenize(model.raw_sql)
    except LexError as exc:
        return [finding(cid, f"unlexable: {exc.message}", name, exc.line, exc.col)]
    found: list[tuple[int, int, str, str]] = []
    for tok in tokens:
        if tok.kind == KEYWORD and tok.text != _keyword_text(tok, rules.keyword_case):
            found.append((tok.line, tok.col, "L1", f"keyword {tok.text!r} should be {rules.keyword_case}case"))
    last = len(tokens) - 1
    for i, k, seg, line, col, is_last in _ws_lines(tokens):
        trailing = (not is_last) or i == last
        if trailing and seg:
            found.append((line, col, "L2", "trailing whitespace"))
        if rules.forbid_tabs and "\t" in seg:
            found.append((line, col + seg.index("\t"), "L3", "tab character"))
    for i in _misplaced_commas(tokens, rules.comma_style):
        tok = tokens[i]
        where = "start" if rules.comma_style == "trailing" else "end"
        found.append((tok.line, tok.col, "L4", f"comma at line {where}; style is {rules.comma_style} commas"))
    text = model.raw_sql
    if rules.require_final_newline and text and not text.endswith("\n"):
        last_line = text.count("\n") + 1
        found.append((last_line, len(text) - text.rfind("\n"), "L5", "missing final newline"))
    for i, tok in enumerate(tokens):
        if tok.kind != WHITESPACE:
            continue
        blanks = tok.text.count("\n") - (1 if i > 0 else 0)
        if blanks > rules.max_blank_run:
            found.append(
                (tok.line + (1 if i > 0 else 0), 1, "L6", f"{blanks} consecutive blank lines (max {rules.max_blank_run})")
            )
    found.sort(key=lambda f: (f[0], f[1], f[2]))
    return [finding(cid, f"{rule} {msg}", name, line, col) for line, col, rule, msg in found]


def _normalize_whitespace(text: str, first: bool, last: bool, rules: LintRuleSet) -> str:
    if rules.forbid_tabs:
        text = text.replace("\t", " " * TAB_WIDTH)
    segments = text.split("\n")
    if len(segments) == 1:
        if last:
            return ""
        # indentation at the top of the file stays; spacing between tokens collapses
        return text if first else " "
    if last:
        return "\n"
    limit = rules.max_blank_run + (1 if not first else 0)
    if len(segments) - 1 > limit:
        segments = segments[:1] + segments[len(segments) - limit :]
    head = [""] * (len(segments) - 1)
    return "\n".join(head + [segments[-1]])


def format_sql(model: ModelUnit, rules: LintRuleSet) -> str:
    """Rewrite whitespace, keyword case and comma placement.

    String, comment, quoted-identifier and template tokens are copied through
    unchanged. Raises LexError for input that does not lex.
    """
    result = _format_pass(model.raw_sql, rules)
    # a run like ", ," moves one comma per pass, so repeat until none is misplaced
    for _ in range(result.count(",")):
        if not _misplaced_commas(tokenize(result), rules.comma_style):
            break
        result = _format_pass(result, rules)
    return result


def _format_pass(sql: str, rules: LintRuleSet) -> str:
    lexed = tokenize(sql)
    tokens = [[t.kind, t.text] for t in lexed]
    for tok in tokens:
        if tok[0] == KEYWORD:
            tok[1] = tok[1].upper() if rules.keyword_case == "upper" else tok[1].lower()

    moves = _misplaced_commas(lexed, rules.comma_style)
    for i in reversed(moves):
        if rules.comma_style == "trailing":
            prev = _prev_code(lexed, i)
            # drop the comma and the spacing that followed it on its line
            if i + 1 < len(tokens) and tokens[i + 1][0] == WHITESPACE and "\n" not in tokens[i + 1][1]:
                tokens[i + 1][1] = ""
            tokens[i][1] = ""
            tokens.insert(prev + 1, [COMMA, ","])
        else:
            nxt = _next_code(lexed, i)
            tokens.insert(nxt, [WHITESPACE, " "])
            tokens.insert(nxt, [COMMA, ","])
            tokens[i][1] = ""
    tokens = [t for t in tokens if t[1] != ""]

    # merge whitespace runs created by removals
    merged: list[list[str]] = []
    for kind, text in tokens:
        if kind == WHITESPACE and merged and merged[-1][0] == WHITESPACE:
            merged[-1][1] += text
        else:
            merged.append([kind, text])

    out = []
    n = len(merged)
    for i, (kind, text) in enumerate(merged):
        if kind == WHITESPACE:
            text = _normalize_whitespace(text, i == 0, i == n - 1, rules)
        out.append(text)
    result = "".join(out)
    if result and not result.endswith("\n"):
        result += "\n"
    if not result.strip():
        return ""
    return result


def significant_kinds(sql: str) -> list[str]:
    return [t.kind for t in tokenize(sql) if t.kind not in (WHITESPACE,)]


# -- J1.3 ---------------------------------------------------------------------


def check_tags(model: ModelUnit, cfg: PipelineConfig) -> list[Finding]:
    cid = "check_tags"
    namespaces = cfg.tags
    if not namespaces:
        return []
    tags = model.properties.tags if model.properties else frozenset()
    by_ns: dict[str, list[str]] = {}
    for tag in sorted(tags):
        ns, sep, value = tag.partition(":")
        if sep:
            by_ns.setdefault(ns, []).append(value)
    out = []
    for ns in sorted(namespaces):
        spec = namespaces[ns]
        values = by_ns.get(ns, [])
        if spec.required and not values:
            out.append(finding(cid, f"missing required tag namespace '{ns}:'", model.name))
        if spec.allowed:
            for value in values:
                if value not in spec.allowed:
                    out.append(
                        finding(
                            cid,
                            f"tag '{ns}:{value}' not allowed (expected one of {', '.join(spec.allowed)})",
                            model.name,
                        )
                    )
        if spec.single_valued and len(values) > 1:
            out.append(
                finding(cid, f"namespace '{ns}' takes one value, got {', '.join(values)}", model.name)
            )
    return out
