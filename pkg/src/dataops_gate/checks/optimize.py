"""Optimize stage: TF-IDF duplicate detection and the external advisor contract."""

from __future__ import annotations

import json
import math
import re
import subprocess
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from ..config import PipelineConfig
from ..findings import Finding, finding
from ..project import ModelUnit, ProjectSnapshot
from ..sql.lexer import (
    IDENTIFIER,
    KEYWORD,
    MACRO,
    QUOTED_IDENTIFIER,
    LexError,
    tokenize,
    unquote_identifier,
)

SIMILARITY = "check_vector_similarity"
ADVISOR = "check_ai_feedback"

_WORD_RE = re.compile(r"[a-z0-9]+")

DEFAULT_PROMPT = (
    "Review the SQL model {model} for inconsistencies in naming, joins and filters.\n"
    "Reply with notes that point at specific lines.\n\n{sql}\n"
)


# -- J2.2 ---------------------------------------------------------------------


def _words(text: str) -> list[str]:
    return [w for w in _WORD_RE.findall(text.lower()) if not w.isdigit()]


def tokenize_for_similarity(sql: str) -> list[str]:
    """Lowercased terms: keywords, identifier parts and macro arguments.

    Comments, string literals, numbers and punctuation contribute nothing.
    """
    try:
        tokens = tokenize(sql)
    except LexError:
        return []
    terms: list[str] = []
    for tok in tokens:
        if tok.kind == KEYWORD:
            terms.append(tok.text.lower())
        elif tok.kind == IDENTIFIER:
            terms.extend(_words(tok.text))
        elif tok.kind == QUOTED_IDENTIFIER:
            terms.extend(_words(unquote_identifier(tok.text)))
        elif tok.kind == MACRO:
            # strip the delimiters; quotes and parens are not word characters
            terms.extend(_words(tok.text[2:-2]))
    return terms


@dataclass(frozen=True)
class TermVector:
    weights: dict[str, float] = field(default_factory=dict)
    norm: float = 0.0

    @classmethod
    def of(cls, weights: Mapping[str, float]) -> "TermVector":
        kept = {t: w for t, w in weights.items() if w != 0.0}
        return cls(kept, math.sqrt(math.fsum(w * w for w in kept.values())))


def build_tfidf(corpus: Mapping[str, list[str]]) -> dict[str, TermVector]:
    """tf = count/|d|, idf = ln((1+N)/(1+df)) + 1, weight = tf * idf."""
    n_docs = len(corpus)
    counts = {name: Counter(terms) for name, terms in corpus.items()}
    df: Counter = Counter()
    for c in counts.values():
        df.update(c.keys())
    idf = {t: math.log((1 + n_docs) / (1 + d)) + 1.0 for t, d in df.items()}
    out = {}
    for name, terms in corpus.items():
        size = len(terms)
        if not size:
            out[name] = TermVector()
            continue
        out[name] = TermVector.of({t: (k / size) * idf[t] for t, k in counts[name].items()})
    return out


def cosine(a: TermVector, b: TermVector) -> float:
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    small, large = (a, b) if len(a.weights) <= len(b.weights) else (b, a)
    # sort terms so the summation order (and hence the float result) is symmetric
    dot = math.fsum(w * large.weights[t] for t, w in sorted(small.weights.items()) if t in large.weights)
    return min(1.0, dot / (a.norm * b.norm))


def check_vector_similarity(
    changed: Iterable[str],
    snapshot: ProjectSnapshot,
    cfg: PipelineConfig,
    vectors: Optional[Mapping[str, TermVector]] = None,
) -> list[Finding]:
    """Compare each changed model against every other model of the full corpus."""
    if vectors is None:
        vectors = build_tfidf({m.name: tokenize_for_similarity(m.raw_sql) for m in snapshot.models})
    threshold = cfg.thresholds.similarity_threshold
    changed = sorted(set(changed))
    out: list[Finding] = []
    seen: set[tuple[str, str]] = set()
    for name in changed:
        vec = vectors.get(name)
        if vec is None:
            continue
        if vec.norm == 0.0:
            out.append(finding(SIMILARITY, "unscorable: no terms to compare", name, severity="advisory"))
            continue
        for other in sorted(vectors):
            if other == name:
                continue
            pair = tuple(sorted((name, other)))
            if pair in seen:
                continue
            score = cosine(vec, vectors[other])
            if score >= threshold:
                seen.add(pair)
                out.append(
                    finding(
                        SIMILARITY,
                        f"{pair[0]} and {pair[1]} are near-duplicates (cosine {score:.3f} >= {threshold:g}); "
                        "merge them or build on the existing model instead",
                        pair[0] if pair[0] in changed else name,
                    )
                )
    return out


# -- J2.1 ---------------------------------------------------------------------


@dataclass(frozen=True)
class AdvisorNote:
    message: str
    line: Optional[int] = None


@dataclass(frozen=True)
class AdvisorVerdict:
    status: str  # ok | advisory | skipped | unavailable
    notes: tuple[AdvisorNote, ...] = ()


class _BadResponse(Exception):
    pass


def render_prompt(model: ModelUnit, cfg: PipelineConfig, root: Optional[Path] = None) -> str:
    template = DEFAULT_PROMPT
    if cfg.advisor.prompt_template:
        path = Path(cfg.advisor.prompt_template)
        if root is not None and not path.is_absolute():
            path = root / path
        template = path.read_text(encoding="utf-8")
    # plain replacement so braces inside SQL never act as format fields
    return template.replace("{model}", model.name).replace("{sql}", model.raw_sql)


def _parse_response(text: str) -> AdvisorVerdict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _BadResponse(f"response is not JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or set(doc) - {"status", "notes"}:
        raise _BadResponse("response must be an object with status and notes")
    status = doc.get("status")
    if status not in ("ok", "advisory"):
        raise _BadResponse(f"unknown status {status!r}")
    notes = []
    for note in doc.get("notes") or []:
        if not isinstance(note, dict) or not isinstance(note.get("message"), str) or not note["message"]:
            raise _BadResponse("each note needs a non-empty message")
        line = note.get("line")
        if line is not None and (isinstance(line, bool) or not isinstance(line, int) or line < 1):
            raise _BadResponse("note line must be a positive integer")
        notes.append(AdvisorNote(note["message"], line))
    if notes and status == "ok":
        status = "advisory"
    return AdvisorVerdict(status, tuple(notes))


def check_ai_feedback(
    model: ModelUnit, cfg: PipelineConfig, root: Optional[Path] = None
) -> tuple[AdvisorVerdict, list[Finding]]:
    """Send the model to the configured advisor command and relay its notes.

    The command receives ``{model, sql, prompt}`` as JSON on stdin and answers
    ``{status, notes: [{message, line?}]}`` on stdout.
    """
    settings = cfg.advisor
    if not settings.command:
        return AdvisorVerdict("skipped"), []
    try:
        request = json.dumps({"model": model.name, "sql": model.raw_sql, "prompt": render_prompt(model, cfg, root)})
    except OSError as exc:
        return _unavailable(model, f"prompt template unreadable: {exc}")
    try:
        proc = subprocess.run(
            list(settings.command),
            input=request,
            capture_output=True,
            text=True,
            timeout=settings.timeout_s,
            cwd=str(root) if root else None,
        )
    except subprocess.TimeoutExpired:
        return _unavailable(model, f"advisor timed out after {settings.timeout_s:g}s")
    except OSError as exc:
        return _unavailable(model, f"advisor could not start: {exc.strerror or exc}")
    if proc.returncode != 0:
        return _unavailable(model, f"advisor exited with status {proc.returncode}")
    try:
        verdict = _parse_response(proc.stdout)
    except _BadResponse as exc:
        return _unavailable(model, f"malformed advisor response: {exc}")
    findings = [finding(ADVISOR, note.message, model.name, note.line) for note in verdict.notes]
    return verdict, findings


def _unavailable(model: ModelUnit, message: str) -> tuple[AdvisorVerdict, list[Finding]]:
    return AdvisorVerdict("unavailable"), [finding(ADVISOR, message, model.name, severity="warning")]
