"""Generation backends: remote chat API, transcript replay, deterministic mock.

Every backend exposes one method, complete(prompt) -> BackendResponse.  A
TranscriptRecorder wraps any backend and appends (prompt hash, response,
token usage) records to a per-island transcript file, which is exactly what
the scripted backend consumes — so any run can be replayed bit-for-bit
without touching the original backend.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import BackendUnavailable, TranscriptExhausted, TranscriptMismatch
from .tasks import parse_circles, parse_vector, serialize_circles, serialize_vector

logger = logging.getLogger(__name__)

DEFAULT_MOCK_SIGMA = 0.02
MIN_RADIUS = 1e-6


@dataclass
class BackendResponse:
    text: str
    input_tokens: int
    output_tokens: int


class GeneratorBackend(Protocol):
    def complete(self, prompt: str) -> BackendResponse: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class RemoteBackend:
    """OpenAI-style chat-completions client with retry and a concurrency cap."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        api_key_env: str = "ARCHIPELAGO_API_KEY",
        max_in_flight: int = 4,
        max_retries: int = 3,
        request_timeout: float = 120.0,
        temperature: float | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = os.environ.get(api_key_env, "")
        self.max_retries = max_retries
        self.request_timeout = request_timeout
        self.temperature = temperature
        self._semaphore = threading.Semaphore(max_in_flight)

    def complete(self, prompt: str) -> BackendResponse:
        import requests

        payload: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(min(2.0**attempt, 30.0))
            try:
                with self._semaphore:
                    resp = requests.post(
                        self.endpoint, json=payload, headers=headers, timeout=self.request_timeout
                    )
                if resp.status_code in (429,) or resp.status_code >= 500:
                    last_error = RuntimeError(f"HTTP {resp.status_code}")
                    logger.warning("backend HTTP %d (attempt %d)", resp.status_code, attempt + 1)
                    continue
                resp.raise_for_status()
                data = resp.json()
                text = data["choices"][0]["message"]["content"]
                usage = data.get("usage", {})
                return BackendResponse(
                    text=text,
                    input_tokens=int(usage.get("prompt_tokens", 0)),
                    output_tokens=int(usage.get("completion_tokens", 0)),
                )
            except Exception as exc:  # noqa: BLE001 — every transport error retries
                last_error = exc
                logger.warning("backend call failed (attempt %d): %s", attempt + 1, exc)
        raise BackendUnavailable(f"backend unreachable after {self.max_retries + 1} attempts: {last_error}")


class ScriptedBackend:
    """Replays a recorded transcript in call order, verifying prompt hashes."""

    def __init__(self, transcript_path: str | Path, *, strict: bool = True):
        self.transcript_path = Path(transcript_path)
        self.strict = strict
        self._records: list[dict] = []
        with self.transcript_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._records.append(json.loads(line))
        self._pos = 0

    def complete(self, prompt: str) -> BackendResponse:
        if self._pos >= len(self._records):
            raise TranscriptExhausted(
                f"transcript {self.transcript_path} exhausted after {self._pos} calls"
            )
        rec = self._records[self._pos]
        self._pos += 1
        if self.strict and rec.get("prompt_hash") != prompt_hash(prompt):
            raise TranscriptMismatch(
                f"call {self._pos} in {self.transcript_path}: prompt diverged from recording"
            )
        return BackendResponse(
            text=rec["response_text"],
            input_tokens=int(rec["input_tokens"]),
            output_tokens=int(rec["output_tokens"]),
        )


class TranscriptRecorder:
    """Wraps a backend and appends every exchange to a transcript file."""

    def __init__(self, inner: GeneratorBackend, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")

    def complete(self, prompt: str) -> BackendResponse:
        reply = self.inner.complete(prompt)
        record = {
            "prompt_hash": prompt_hash(prompt),
            "response_text": reply.text,
            "input_tokens": reply.input_tokens,
            "output_tokens": reply.output_tokens,
        }
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        return reply


_K_RE = re.compile(r"Generate (\d+) candidate")
_PARENT_RE = re.compile(r"^# Current Program\s*$", re.MULTILINE)


def _extract_parent_section(prompt: str) -> str | None:
    m = _PARENT_RE.search(prompt)
    if not m:
        return None
    rest = prompt[m.end() :]
    lines = []
    for line in rest.splitlines():
        if line.startswith("# "):  # next top-level section
            break
        lines.append(line)
    section = "\n".join(lines).strip()
    return section or None


def _token_estimate(text: str) -> int:
    return max(1, len(text) // 4)


class MockMutationBackend:
    """Deterministic stand-in for a model: Gaussian jitter on JSON genomes.

    Produces a response in the exact shape the parser expects — k entries
    under "responses", uniform stated probabilities — where each candidate
    body is the parent genome plus per-coordinate noise.  Circle radii are
    re-clamped to stay positive.  An unparseable parent degrades to a
    single identity candidate.
    """

    def __init__(self, rng: np.random.Generator, sigma: float = DEFAULT_MOCK_SIGMA):
        self.rng = rng
        self.sigma = sigma

    def _perturb(self, parent_text: str) -> str | None:
        try:
            circles = parse_circles(parent_text)
        except (ValueError, TypeError, KeyError, json.JSONDecodeError):
            circles = None
        if circles is not None:
            noisy = circles + self.rng.normal(0.0, self.sigma, circles.shape)
            noisy[:, 2] = np.maximum(noisy[:, 2], MIN_RADIUS)
            return serialize_circles(noisy)
        try:
            vec = parse_vector(parent_text)
        except (ValueError, TypeError, json.JSONDecodeError):
            return None
        return serialize_vector(vec + self.rng.normal(0.0, self.sigma, vec.shape))

    def complete(self, prompt: str) -> BackendResponse:
        m = _K_RE.search(prompt)
        k = int(m.group(1)) if m else 1
        parent_text = _extract_parent_section(prompt)
        entries = []
        if parent_text is not None:
            for _ in range(k):
                body = self._perturb(parent_text)
                if body is None:
                    break
                entries.append({"code": body, "probability": 1.0 / k})
        if not entries:
            entries = [{"code": parent_text or "", "probability": 1.0}]
        text = json.dumps({"responses": entries})
        return BackendResponse(
            text=text,
            input_tokens=_token_estimate(prompt),
            output_tokens=_token_estimate(text),
        )
