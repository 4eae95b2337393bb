"""Frame-feeding optimiser: decides which camera frames reach the detector.

The skip interval ``p`` starts at its maximum ``q = 2**k`` (the smallest power
of two not below the camera rate). A frame is forwarded once the counter ``n``
exceeds ``p``, so one frame in every ``p + 1`` is processed. Every processed
frame with a detection halves ``p`` (down to 1); every empty one doubles it
(up to ``q``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .errors import EmptyTrace, InvalidFps


@dataclass
class FeederState:
    k: int
    q: int
    p: int
    n: int = 0

    def __post_init__(self):
        self.check()

    def check(self) -> None:
        if self.q != 2 ** self.k:
            raise ValueError(f"q={self.q} is not 2**{self.k}")
        if not (1 <= self.p <= self.q) or self.p & (self.p - 1):
            raise ValueError(f"p={self.p} must be a power of two in [1, {self.q}]")
        if not 0 <= self.n <= self.p:
            raise ValueError(f"n={self.n} outside [0, {self.p}]")

    def snapshot(self) -> FeederState:
        return replace(self)


@dataclass(frozen=True)
class FeedDecision:
    process: bool
    state_after: FeederState


def feeder_init(camera_fps: float) -> FeederState:
    if not camera_fps >= 1:
        raise InvalidFps(f"camera fps must be >= 1, got {camera_fps}")
    k = max(0, math.ceil(math.log2(camera_fps)))
    # log2 rounding can land one off near exact powers of two
    while 2 ** k < camera_fps:
        k += 1
    while k > 0 and 2 ** (k - 1) >= camera_fps:
        k -= 1
    q = 2 ** k
    return FeederState(k=k, q=q, p=q, n=0)


def on_frame(state: FeederState) -> FeedDecision:
    state.n += 1
    if state.n > state.p:
        state.n = 0
        return FeedDecision(True, state.snapshot())
    return FeedDecision(False, state.snapshot())


def on_detection_result(state: FeederState, hazmat_found: bool) -> FeederState:
    if hazmat_found:
        if state.p > 1:
            state.p //= 2
    elif state.p < state.q:
        state.p *= 2
    # a shrinking p may leave the counter past it; the next frame then fires
    state.n = min(state.n, state.p)
    return state


@dataclass
class FeedTrace:
    """Per-frame outcome of a feeder run.

    ``p`` and ``n`` hold the state after each frame (result applied);
    ``p_at_processed`` holds the interval that was in force when each
    processed frame was selected.
    """

    processed: list[bool] = field(default_factory=list)
    p: list[int] = field(default_factory=list)
    n: list[int] = field(default_factory=list)
    hazmat_found: list[bool | None] = field(default_factory=list)
    p_at_processed: list[int] = field(default_factory=list)

    def record(self, decision: FeedDecision, state: FeederState,
               found: bool | None, p_before: int) -> None:
        self.processed.append(decision.process)
        self.p.append(state.p)
        self.n.append(state.n)
        self.hazmat_found.append(found)
        if decision.process:
            self.p_at_processed.append(p_before)

    def __len__(self) -> int:
        return len(self.processed)

    @property
    def processed_count(self) -> int:
        return sum(self.processed)

    @property
    def processed_fraction(self) -> float:
        return self.processed_count / len(self) if self.processed else 0.0

    def processed_indices(self) -> list[int]:
        return [i for i, flag in enumerate(self.processed) if flag]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame_index", "processed", "p", "n", "hazmat_found"])
            for i in range(len(self)):
                found = self.hazmat_found[i]
                w.writerow([
                    i,
                    int(self.processed[i]),
                    self.p[i],
                    self.n[i],
                    "" if found is None else int(found),
                ])


def simulate_feed(trace: Sequence[bool], camera_fps: float) -> FeedTrace:
    """Run the feeder over a per-frame hazmat-presence trace.

    The presence flag is only consulted on frames the feeder forwards, which
    is exactly what a real detector would observe.
    """
    if len(trace) == 0:
        raise EmptyTrace("trace has no frames")
    state = feeder_init(camera_fps)
    out = FeedTrace()
    for present in trace:
        p_before = state.p
        decision = on_frame(state)
        found = None
        if decision.process:
            found = bool(present)
            on_detection_result(state, found)
        out.record(decision, state, found, p_before)
    return out


def read_trace(path: str | Path) -> list[bool]:
    """Read a presence trace: one ``0``/``1`` per line, blank lines ignored."""
    flags = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.strip()
            if not tok:
                continue
            if tok not in ("0", "1"):
                raise ValueError(f"line {lineno}: expected 0 or 1, got {tok!r}")
            flags.append(tok == "1")
    return flags

