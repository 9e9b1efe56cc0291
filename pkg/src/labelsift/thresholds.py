"""Filtering-threshold policies: fixed value, per-batch percentile (top-R),
and its sliding-window smoothed variant."""

from collections import deque
import math


def batch_percentile(probs, rate):
    """Nearest-rank percentile: the element at index ceil(rate/100 * n) - 1
    of the ascending sort, clamped into range.  rate = 0 gives the minimum."""
    if len(probs) == 0:
        raise ValueError("percentile of an empty batch")
    if not 0.0 <= rate <= 100.0:
        raise ValueError("rate must be in [0, 100]")
    ranked = sorted(probs)
    idx = math.ceil(rate / 100.0 * len(ranked)) - 1
    idx = min(max(idx, 0), len(ranked) - 1)
    return ranked[idx]


class ThresholdPolicy:
    """Per-batch threshold m for the keep-if-above filter test.

    kind "fixed" returns the configured constant; "trm" returns the batch's
    rate-th percentile; "strm" averages that percentile over the last tau
    batches (fewer while the window is filling).
    """

    KINDS = ("fixed", "trm", "strm")

    def __init__(self, kind, fixed_m=0.3, rate=50.0, tau=10):
        if kind not in self.KINDS:
            raise ValueError(f"unknown threshold kind: {kind!r}")
        if kind == "strm" and tau < 1:
            raise ValueError("window tau must be >= 1")
        if not 0.0 <= rate <= 100.0:
            raise ValueError("filter rate must be in [0, 100]")
        self.kind = kind
        self.fixed_m = fixed_m
        self.rate = rate
        self.tau = tau
        self.history = deque(maxlen=tau)

    def compute_threshold(self, probs):
        if len(probs) == 0:
            raise ValueError("threshold of an empty batch")
        if self.kind == "fixed":
            return self.fixed_m
        q = batch_percentile(probs, self.rate)
        if self.kind == "trm":
            return q
        self.history.append(q)
        return sum(self.history) / len(self.history)
