"""Multi-candidate prompt construction, response parsing, and round driving.

One generation round asks the backend for K candidate rewrites in a single
call.  The response is a JSON object whose "responses" list carries a
program body and a stated probability per candidate.  Stated probabilities
are recorded verbatim and never consulted for selection: every kept
candidate proceeds to evaluation regardless of the weight the model put on
it.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from importlib import resources

from .archive import Island, Program, sample_inspirations, sample_parent
from .backends import GeneratorBackend
from .errors import BackendUnavailable, ParseFailure
from .evaluation import BudgetLedger
from .tasks import Task

logger = logging.getLogger(__name__)

PROBABILITY_SUM_TOLERANCE = 1e-3
DEFAULT_N_INSPIRATIONS = 3
DEFAULT_MAX_REQUERIES = 1

_FENCE_RE = re.compile(r"^\s*```")


def _template() -> str:
    return (resources.files("archipelago") / "data" / "vs_prompt.txt").read_text(encoding="utf-8")


@dataclass
class VsCandidate:
    rank: int  # 1-based position in the response list
    body: str
    stated_probability: float


@dataclass
class VsPrompt:
    parent_body: str
    inspirations: list[tuple[str, float]]  # (body, score)
    k_candidates: int
    feature_dimensions: list[str]
    task_description: str

    def render(self) -> str:
        if self.inspirations:
            blocks = ["", "# Inspirations", ""]
            for i, (body, score) in enumerate(self.inspirations, start=1):
                blocks.append(f"## Inspiration {i} (score: {score:.6f})")
                blocks.append(body)
                blocks.append("")
            inspirations = "\n".join(blocks)
        else:
            inspirations = ""
        rendered = _template().format(
            parent=self.parent_body,
            inspirations=inspirations,
            k_candidates=self.k_candidates,
            feature_dimensions=", ".join(self.feature_dimensions),
        )
        return f"{self.task_description}\n\n{rendered}"


def build_vs_prompt(parent: Program, inspirations: list[Program], k: int, task: Task) -> str:
    prompt = VsPrompt(
        parent_body=parent.body,
        inspirations=[(p.body, p.score) for p in inspirations],
        k_candidates=k,
        feature_dimensions=task.feature_names,
        task_description=task.description,
    )
    return prompt.render()


def _strip_code_fences(code: str) -> str:
    lines = code.strip().splitlines()
    if lines and _FENCE_RE.match(lines[0]):
        lines = lines[1:]
    if lines and _FENCE_RE.match(lines[-1]):
        lines = lines[:-1]
    return "\n".join(lines).strip("\n")


def _extract_json_object(text: str) -> str:
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end < start:
        raise ParseFailure("no JSON object in response")
    return text[start : end + 1]


def parse_vs_response(text: str, k: int) -> list[VsCandidate]:
    """Parse a backend response into at most k candidates.

    Entries beyond k are dropped (keep-first-K).  Malformed entries are
    skipped; zero well-formed entries is a ParseFailure.  A kept list whose
    stated probabilities deviate from 1.0 by more than the tolerance only
    warns — the weights carry no selection authority anyway.
    """
    try:
        obj = json.loads(_extract_json_object(text))
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"response is not valid JSON: {exc}") from exc
    responses = obj.get("responses") if isinstance(obj, dict) else None
    if not isinstance(responses, list):
        raise ParseFailure("response lacks a 'responses' list")
    candidates: list[VsCandidate] = []
    for entry in responses[:k]:
        if not isinstance(entry, dict):
            continue
        code = entry.get("code")
        prob = entry.get("probability")
        if not isinstance(code, str) or not code.strip():
            continue
        if isinstance(prob, bool) or not isinstance(prob, (int, float)):
            continue
        candidates.append(
            VsCandidate(
                rank=len(candidates) + 1,
                body=_strip_code_fences(code),
                stated_probability=min(max(float(prob), 0.0), 1.0),
            )
        )
    if not candidates:
        raise ParseFailure("zero well-formed candidate entries")
    total = sum(c.stated_probability for c in candidates)
    if abs(total - 1.0) > PROBABILITY_SUM_TOLERANCE:
        logger.warning(
            "stated probabilities sum to %.6f over %d kept candidates (expected 1.0)",
            total,
            len(candidates),
        )
    return candidates


@dataclass
class RoundResult:
    """Everything one generation round produced, for evaluation and logging."""

    parent: Program
    inspirations: list[Program]
    candidates: list[VsCandidate]
    prompt: str
    input_tokens: int
    output_tokens: int
    requery_count: int


def generate_round(
    island: Island,
    k: int,
    backend: GeneratorBackend,
    task: Task,
    ledger: BudgetLedger | None = None,
    *,
    n_inspirations: int = DEFAULT_N_INSPIRATIONS,
    min_candidates: int | None = None,
    max_requeries: int = DEFAULT_MAX_REQUERIES,
) -> RoundResult:
    """Sample a parent and inspirations, query the backend, parse.

    When a parse yields fewer than min(k, 2) candidates the identical
    prompt is re-sent up to max_requeries times; a thin-but-nonempty parse
    at that point is accepted as-is.  Token usage is charged for every
    call, parse failures included.
    """
    parent = sample_parent(island)
    inspirations = sample_inspirations(island, n_inspirations, exclude=parent.id)
    prompt = build_vs_prompt(parent, inspirations, k, task)
    threshold = min(k, 2) if min_candidates is None else min_candidates

    best: list[VsCandidate] = []
    input_tokens = output_tokens = 0
    requeries = 0
    while True:
        try:
            reply = backend.complete(prompt)
        except BackendUnavailable as exc:
            exc.context = RoundResult(
                parent=parent,
                inspirations=inspirations,
                candidates=[],
                prompt=prompt,
                input_tokens=input_tokens,
                output_tokens=output_tokens,
                requery_count=requeries,
            )
            raise
        input_tokens += reply.input_tokens
        output_tokens += reply.output_tokens
        if ledger is not None:
            ledger.add_tokens(reply.input_tokens, reply.output_tokens)
        try:
            parsed = parse_vs_response(reply.text, k)
        except ParseFailure as exc:
            logger.info("island %d: unparseable response (%s)", island.id, exc)
            parsed = []
        if len(parsed) > len(best):
            best = parsed
        if len(best) >= threshold or requeries >= max_requeries:
            break
        requeries += 1
    return RoundResult(
        parent=parent,
        inspirations=inspirations,
        candidates=best,
        prompt=prompt,
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        requery_count=requeries,
    )
