"""Interaction-willingness accumulator per tracked person.

A bounded value loads while the person's head faces the robot and unloads
more slowly while it does not, so brief distractions do not reset progress.
Reaching 1.0 latches a trigger; the latch clears only after the value drops
below a reset threshold (hysteresis).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ClockWentBackwards, NegativeDt

DEFAULT_RATE_UP = 1.0 / 3.0
DEFAULT_RATE_DOWN = 1.0 / 9.0
DEFAULT_RESET = 0.5


@dataclass(frozen=True)
class WillingnessState:
    value: float = 0.0
    rate_up: float = DEFAULT_RATE_UP
    rate_down: float = DEFAULT_RATE_DOWN
    triggered: bool = False
    last_update: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("value must stay in [0, 1]")
        if not self.rate_up > self.rate_down > 0.0:
            raise ValueError("rates must satisfy rate_up > rate_down > 0")


def update(state: WillingnessState, attending: bool, dt: float,
           reset_threshold: float = DEFAULT_RESET) -> WillingnessState:
    """Advance one interval; loads at rate_up when attending, else unloads."""
    if dt < 0:
        raise NegativeDt(f"dt = {dt}")
    rate = state.rate_up if attending else -state.rate_down
    value = min(1.0, max(0.0, state.value + rate * dt))
    triggered = state.triggered
    if value >= 1.0:
        triggered = True
    elif value < reset_threshold:
        triggered = False
    return replace(state, value=value, triggered=triggered,
                   last_update=state.last_update + dt)


class PersonWillingnessMap:
    """Per-person willingness states keyed by person track id."""

    def __init__(self, rate_up: float = DEFAULT_RATE_UP,
                 rate_down: float = DEFAULT_RATE_DOWN,
                 reset_threshold: float = DEFAULT_RESET):
        self.rate_up = rate_up
        self.rate_down = rate_down
        self.reset_threshold = reset_threshold
        self.states: dict[int, WillingnessState] = {}

    def step_frame(self, observations, t_now: float) -> list[int]:
        """Update every known person; returns ids that triggered this step.

        `observations` lists (person_track_id, attending). Known persons not
        listed are treated as not attending. Unknown listed persons are
        created at value 0.
        """
        attending_by_id = dict(observations)
        for pid in attending_by_id:
            if pid not in self.states:
                self.states[pid] = WillingnessState(
                    rate_up=self.rate_up, rate_down=self.rate_down,
                    last_update=t_now)
        triggers = []
        for pid, state in self.states.items():
            if t_now < state.last_update:
                raise ClockWentBackwards(
                    f"t={t_now} before last update {state.last_update}")
            dt = t_now - state.last_update
            new = update(state, attending_by_id.get(pid, False), dt,
                         self.reset_threshold)
            if new.triggered and not state.triggered:
                triggers.append(pid)
            self.states[pid] = new
        return triggers

    def prune(self, live_ids):
        """Drop states for person tracks that no longer exist."""
        live = set(live_ids)
        self.states = {pid: s for pid, s in self.states.items() if pid in live}
