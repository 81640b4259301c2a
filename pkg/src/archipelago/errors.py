"""Exception types shared across the engine."""

from __future__ import annotations


class ContractViolation(ValueError):
    """An operation was called with arguments that violate its contract."""


class EmptyArchive(RuntimeError):
    """Sampling was attempted on an archive with no occupied cells."""


class ParseFailure(ValueError):
    """A model response yielded zero well-formed candidates."""


class BackendUnavailable(RuntimeError):
    """The generation backend failed at the transport level after retries."""

    def __init__(self, message: str, *, context: object | None = None):
        super().__init__(message)
        # Partial round state (parent, inspirations, tokens) attached so the
        # caller can still log an iteration for the aborted round.
        self.context = context


class TranscriptExhausted(RuntimeError):
    """A scripted backend ran out of recorded responses."""


class TranscriptMismatch(RuntimeError):
    """A replayed prompt did not match the recorded prompt hash."""


class InsufficientSeeds(ValueError):
    """Fewer seed vectors than requested clusters."""


class BudgetExhausted(RuntimeError):
    """An evaluation or cost cap was already reached."""
