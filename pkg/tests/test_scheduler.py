"""Adaptive-K scheduler tests: the update rule and the windowed state machine."""

from archipelago.scheduler import (
    DEFAULT_K_INIT,
    DEFAULT_K_SET,
    DEFAULT_STEP,
    DEFAULT_WARMUP,
    DEFAULT_WINDOW,
    SchedulerState,
    update_k,
)

# Every (k, replacement-count) pair for the default ladder and window.
# c == 0 steps up, c == window steps down, anything in between holds.
RULE_TABLE = [
    (1, 0, 3), (1, 1, 1), (1, 2, 1), (1, 3, 1),
    (3, 0, 5), (3, 1, 3), (3, 2, 3), (3, 3, 1),
    (5, 0, 7), (5, 1, 5), (5, 2, 5), (5, 3, 3),
    (7, 0, 7), (7, 1, 7), (7, 2, 7), (7, 3, 5),
]


def test_update_rule_table():
    for k, c, expected in RULE_TABLE:
        got = update_k(k, c, DEFAULT_WINDOW, k_set=DEFAULT_K_SET, step=DEFAULT_STEP)
        assert got == expected, f"update_k({k}, {c}) = {got}, want {expected}"


def test_update_clamps_at_ladder_ends():
    assert update_k(7, 0, 3) == 7
    assert update_k(1, 3, 3) == 1


def test_defaults():
    state = SchedulerState()
    assert state.k == DEFAULT_K_INIT == 5
    assert DEFAULT_K_SET == (1, 3, 5, 7)
    assert DEFAULT_WINDOW == 3
    assert DEFAULT_STEP == 2
    assert DEFAULT_WARMUP == 3


def test_warmup_holds_k_and_feeds_no_window():
    state = SchedulerState()
    for _ in range(DEFAULT_WARMUP):
        assert state.record_iteration(True) is None
        assert state.k == 5
    # Warmup iterations must not have advanced the window.
    assert state.window_pos == 0


def test_window_closes_after_exactly_window_iterations():
    state = SchedulerState(warmup_remaining=0)
    assert state.record_iteration(False) is None
    assert state.record_iteration(False) is None
    transition = state.record_iteration(False)
    assert transition is not None
    assert (transition.c, transition.k_before, transition.k_after) == (0, 5, 7)
    assert state.k == 7


def test_all_stall_walk_down_then_mixed_window():
    # 0/3 windows walk 5 -> 7 (up on total stall is the c == 0 branch);
    # a full-replacement window then walks 7 -> 5.
    state = SchedulerState(warmup_remaining=0)
    for _ in range(3):
        state.record_iteration(False)
    assert state.k == 7
    for _ in range(3):
        state.record_iteration(True)
    assert state.k == 5
    # A mixed window (1 of 3) holds.
    state.record_iteration(True)
    state.record_iteration(False)
    transition = state.record_iteration(False)
    assert transition.k_after == 5
    assert state.k == 5


def test_counter_resets_between_windows():
    state = SchedulerState(warmup_remaining=0)
    state.record_iteration(True)
    state.record_iteration(True)
    state.record_iteration(True)          # window 1 closes: c=3, k 5 -> 3
    assert state.k == 3
    state.record_iteration(False)
    state.record_iteration(False)
    transition = state.record_iteration(False)   # window 2: c=0, k 3 -> 5
    assert transition.c == 0
    assert state.k == 5


def test_custom_ladder_and_step():
    state = SchedulerState(k_set=(1, 2, 3), step=1, window_len=2, warmup_remaining=0, k_init=2)
    state.record_iteration(False)
    state.record_iteration(False)
    assert state.k == 3
    state.record_iteration(False)
    state.record_iteration(False)
    assert state.k == 3          # clamped at the top of the ladder
    for _ in range(6):
        state.record_iteration(True)
    assert state.k == 1          # walked down and clamped at the bottom
