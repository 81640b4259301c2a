"""Per-island adaptive control of the per-call candidate count K.

Each island tracks archive updates over a fixed-length window of iterations.
A window that saw an update on every iteration means the search is paying
for more candidates than it needs, so K steps down; a window with zero
updates means the island is stalling and K steps up for more exploration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_K_SET = (1, 3, 5, 7)
DEFAULT_STEP = 2
DEFAULT_WINDOW = 3
DEFAULT_K_INIT = 5
DEFAULT_WARMUP = 3


def update_k(
    k: int,
    c: int,
    window_len: int,
    *,
    k_set: tuple[int, ...] = DEFAULT_K_SET,
    step: int = DEFAULT_STEP,
) -> int:
    """Window-boundary update rule.

    c == 0 (full stall) raises K by `step` capped at max(k_set); c ==
    window_len (update every iteration) lowers it by `step` floored at
    min(k_set); anything in between leaves K unchanged.
    """
    if c == 0:
        return min(max(k_set), k + step)
    if c == window_len:
        return max(min(k_set), k - step)
    return k


@dataclass
class KTransition:
    """One window-boundary decision, for the telemetry stream."""

    c: int
    k_before: int
    k_after: int


@dataclass
class SchedulerState:
    k: int = DEFAULT_K_INIT
    window_len: int = DEFAULT_WINDOW
    window_pos: int = 0
    window_updates: int = 0
    warmup_remaining: int = DEFAULT_WARMUP
    k_init: int = DEFAULT_K_INIT
    k_set: tuple[int, ...] = DEFAULT_K_SET
    step: int = DEFAULT_STEP
    transitions: int = field(default=0, repr=False)

    def __post_init__(self):
        self.k = self.k_init

    def record_iteration(self, any_replacement: bool) -> KTransition | None:
        """Fold one finished iteration into the window.

        Call exactly once per island iteration, after that round's
        insertions are done.  Warmup iterations only burn down the warmup
        counter; they feed no window statistics.  Returns the transition
        record when this iteration closed a window, else None.
        """
        if self.warmup_remaining > 0:
            self.warmup_remaining -= 1
            return None
        self.window_pos += 1
        if any_replacement:
            self.window_updates += 1
        if self.window_pos < self.window_len:
            return None
        c = self.window_updates
        k_before = self.k
        self.k = update_k(self.k, c, self.window_len, k_set=self.k_set, step=self.step)
        self.window_pos = 0
        self.window_updates = 0
        self.transitions += 1
        return KTransition(c=c, k_before=k_before, k_after=self.k)
