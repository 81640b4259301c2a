"""Program evaluation and budget accounting.

Every program that enters evaluation is charged to the ledger, including
ones that fail to parse or violate task constraints: the evaluation count
measures work spent, not work that succeeded.
"""

from __future__ import annotations

import json
import logging
import math
import os
import signal
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .archive import Program
from .errors import BudgetExhausted

logger = logging.getLogger(__name__)

FAILURE_KINDS = ("ParseError", "RuntimeError", "Timeout", "ConstraintViolation")

DEFAULT_EXTERNAL_TIMEOUT = 30.0


@dataclass
class EvaluationResult:
    """Outcome of one evaluation.

    valid is true exactly when score and features are both present, which
    is exactly when failure is absent.
    """

    valid: bool
    score: float | None = None
    features: list[float] | None = None
    failure: str | None = None
    wall_time: float = 0.0
    detail: str | None = None

    def __post_init__(self):
        if self.valid:
            assert self.score is not None and self.features is not None and self.failure is None
        else:
            assert self.failure in FAILURE_KINDS


def failed(failure: str, detail: str | None = None) -> EvaluationResult:
    return EvaluationResult(valid=False, failure=failure, detail=detail)


@dataclass
class BudgetLedger:
    """Thread-safe run totals plus the caps that end a run.

    api_cost is always derived from the token totals and per-token prices,
    so recomputing it from logged token counts reproduces the ledger value
    exactly.
    """

    max_evals: int | None = None
    max_cost: float | None = None
    price_in_per_token: float = 0.0
    price_out_per_token: float = 0.0
    n_eval: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def api_cost(self) -> float:
        return self.input_tokens * self.price_in_per_token + self.output_tokens * self.price_out_per_token

    def count_eval(self) -> None:
        with self._lock:
            self.n_eval += 1

    def add_tokens(self, input_tokens: int, output_tokens: int) -> None:
        with self._lock:
            self.input_tokens += int(input_tokens)
            self.output_tokens += int(output_tokens)

    def exhausted(self) -> bool:
        if self.max_evals is not None and self.n_eval >= self.max_evals:
            return True
        if self.max_cost is not None and self.api_cost >= self.max_cost:
            return True
        return False

    def raise_if_exhausted(self) -> None:
        if self.exhausted():
            raise BudgetExhausted(
                f"budget exhausted: n_eval={self.n_eval} api_cost={self.api_cost:.6f}"
            )


Evaluator = Callable[[str], EvaluationResult]


def evaluate(
    program: Program,
    evaluator: Evaluator,
    ledger: BudgetLedger | None = None,
    *,
    enforce_budget: bool = True,
) -> EvaluationResult:
    """Run one program through the evaluator and charge the ledger.

    The evaluation is counted before execution so crashes still spend
    budget.  Orchestrated runs authorize whole rounds at the round boundary
    and pass enforce_budget=False so an in-flight round is never clipped.
    The result is also applied to the program in place.
    """
    if ledger is not None:
        if enforce_budget:
            ledger.raise_if_exhausted()
        ledger.count_eval()
    start = time.perf_counter()
    try:
        result = evaluator(program.body)
    except Exception as exc:  # evaluator crash is a task failure, not ours
        result = failed("RuntimeError", detail=repr(exc))
    result.wall_time = time.perf_counter() - start
    program.valid = result.valid
    program.score = result.score
    program.features = list(result.features) if result.features is not None else None
    return result


def _parse_external_record(stdout: str) -> EvaluationResult:
    text = stdout.strip()
    if not text:
        raise ValueError("empty stdout")
    # The contract is a single record; tolerate stray lines around it.
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end < start:
        raise ValueError("no record found")
    rec = json.loads(text[start : end + 1])
    if not isinstance(rec, dict) or "valid" not in rec:
        raise ValueError("record missing 'valid'")
    if rec["valid"]:
        score = rec["score"]
        features = rec["features"]
        if not isinstance(score, (int, float)) or not math.isfinite(score):
            raise ValueError("non-finite score")
        features = [float(f) for f in features]
        if not all(math.isfinite(f) for f in features):
            raise ValueError("non-finite feature")
        return EvaluationResult(valid=True, score=float(score), features=features)
    failure = rec.get("failure", "ConstraintViolation")
    if failure not in FAILURE_KINDS:
        failure = "RuntimeError"
    return failed(failure, detail=rec.get("detail"))


class ExternalEvaluator:
    """Adapter for `command <program-file>` evaluators.

    The command receives the candidate body via a temp file and must print
    one JSON record {valid, score, features, failure?} on stdout.  The
    process group is killed on timeout so grandchildren cannot linger.
    """

    def __init__(self, command: str, timeout: float = DEFAULT_EXTERNAL_TIMEOUT):
        self.command = command
        self.timeout = timeout

    def __call__(self, body: str) -> EvaluationResult:
        with tempfile.NamedTemporaryFile(
            "w", suffix=".candidate", delete=False, encoding="utf-8"
        ) as fh:
            fh.write(body)
            path = fh.name
        try:
            proc = subprocess.Popen(
                self.command.split() + [path],
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                start_new_session=True,
            )
            try:
                stdout, stderr = proc.communicate(timeout=self.timeout)
            except subprocess.TimeoutExpired:
                try:
                    os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
                except (ProcessLookupError, PermissionError):
                    pass
                proc.wait()
                return failed("Timeout", detail=f"exceeded {self.timeout}s")
            if proc.returncode != 0:
                return failed(
                    "RuntimeError",
                    detail=f"exit {proc.returncode}: {stderr.strip()[:500]}",
                )
            try:
                return _parse_external_record(stdout)
            except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
                logger.warning("malformed evaluator output: %s; raw=%r", exc, stdout[:500])
                return failed("RuntimeError", detail=f"malformed output: {stdout[:500]!r}")
        finally:
            Path(path).unlink(missing_ok=True)
