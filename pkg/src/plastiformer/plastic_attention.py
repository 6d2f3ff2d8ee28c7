"""Self-attention realized as plastic connections with FIFO slot reuse.

The key cache is a two-factor connection (pre trace x1 carries the encoded
key, post spike y0 loads it into one slot row); the value cache is a
three-factor connection (post traces y2/y3 carry the value's positive and
negative parts, pre spike x0 loads them into one slot column). A sliding
window of W slots is reused first-in first-out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .numerics import QuantSpec
from .plasticity import GradedSpike, GradedSpikeConfig, LearningConnection
from .rulelang import parse_rule

KEYS_RULE_TEXT = "2 * y0 * (x1 - 64) - y0 * w"
VALUES_RULE_TEXT = "x0 * y2 - x0 * y3 - x0 * y1 * w"

TRACE_ZERO_POINT = 64  # the additive offset baked into the keys rule


class SchedulerError(RuntimeError):
    """Token index disagrees with the slot scheduler's clock."""


@dataclass
class SlotScheduler:
    """FIFO slot assignment over a window of W cache slots."""

    window: int
    t: int = 0

    @property
    def next_slot(self) -> int:
        return self.t % self.window

    @property
    def filled(self) -> int:
        return min(self.t, self.window)

    def advance(self):
        self.t += 1


def slot_mask(scheduler: SlotScheduler, t: int):
    """Filled slot indices in temporal (oldest first) order after token t."""
    if t != scheduler.t:
        raise SchedulerError(f"token index {t} != scheduler clock {scheduler.t}")
    w = scheduler.window
    n = min(t + 1, w)
    return [(t + 1 - n + i) % w for i in range(n)]


def encode_signed_trace(k, trace_spec: QuantSpec | None = None):
    """Map a signed key component onto the unsigned trace u = k/2 + 64.

    The rule's `2 * (x1 - 64)` decodes it back. Float values encode exactly;
    integers are pre-rounded to even (the halving drops the low bit) and
    saturate at the trace range boundaries.

    Returns (encoded, saturated_count).
    """
    if trace_spec is None:
        return np.asarray(k, dtype=np.float64) / 2.0 + TRACE_ZERO_POINT, 0
    k_even = np.rint(np.asarray(k, dtype=np.float64) / 2.0).astype(np.int64)
    u = k_even + TRACE_ZERO_POINT
    clamped = np.clip(u, trace_spec.code_min, trace_spec.code_max)
    return clamped, int(np.count_nonzero(clamped != u))


def decode_trace(u):
    return 2 * (u - TRACE_ZERO_POINT)


class PlasticAttentionHead:
    """One head's key and value caches as learning connections."""

    def __init__(
        self,
        head_dim: int,
        window: int,
        weight_spec: QuantSpec | None = None,
        trace_spec: QuantSpec | None = None,
    ):
        self.head_dim = head_dim
        self.window = window
        self.trace_spec = trace_spec
        self.saturated_encodings = 0
        self.keys_conn = LearningConnection(
            n_pre=head_dim,
            n_post=window,
            rule=parse_rule(KEYS_RULE_TEXT),
            spike_cfg=GradedSpikeConfig.OVERWRITE,
            weight_spec=weight_spec,
            trace_spec=trace_spec,
        )
        self.values_conn = LearningConnection(
            n_pre=window,
            n_post=head_dim,
            rule=parse_rule(VALUES_RULE_TEXT),
            spike_cfg=GradedSpikeConfig.OVERWRITE,
            weight_spec=weight_spec,
            trace_spec=trace_spec,
        )

    def write_key(self, k: np.ndarray, slot: int):
        encoded, sat = encode_signed_trace(k, self.trace_spec)
        self.saturated_encodings += sat
        spikes = [GradedSpike(j, encoded[j]) for j in range(self.head_dim)]
        self.keys_conn.write_pre_trace(spikes, "x1")
        self.keys_conn.trigger_post(slot)

    def scores(self, q: np.ndarray) -> np.ndarray:
        spikes = [GradedSpike(j, q[j]) for j in range(self.head_dim)]
        return self.keys_conn.propagate(spikes)

    def write_value(self, v: np.ndarray, slot: int):
        ones = np.ones(self.head_dim, dtype=self.values_conn.weights.dtype)
        self.values_conn.write_post_trace(np.maximum(v, 0), "y2")
        self.values_conn.write_post_trace(np.maximum(-v, 0), "y3")
        self.values_conn.write_post_trace(ones, "y1")
        self.values_conn.trigger_pre(slot)

    def read_value(self, probs: np.ndarray, slots) -> np.ndarray:
        spikes = [GradedSpike(slot, p) for slot, p in zip(slots, probs)]
        return self.values_conn.propagate(spikes)

    def key_row(self, slot: int) -> np.ndarray:
        return self.keys_conn.weights[slot, :]

    def value_column(self, slot: int) -> np.ndarray:
        return self.values_conn.weights[:, slot]


class PlasticAttentionLayer:
    """Multi-head attention where the KV-cache lives in plastic weights."""

    def __init__(
        self,
        wq: np.ndarray,
        wk: np.ndarray,
        wv: np.ndarray,
        wo: np.ndarray,
        bo: np.ndarray,
        norm_gain: np.ndarray,
        n_heads: int,
        window: int,
        eps: float = 1e-6,
        scaled: bool = False,
    ):
        d = wq.shape[1]
        if d % n_heads != 0:
            raise ValueError(f"embed dim {d} not divisible by {n_heads} heads")
        self.d_model = d
        self.n_heads = n_heads
        self.head_dim = d // n_heads
        self.window = window
        self.eps = eps
        self.scaled = scaled
        self.wq, self.wk, self.wv, self.wo, self.bo = wq, wk, wv, wo, bo
        self.norm_gain = norm_gain
        self.scheduler = SlotScheduler(window)
        self.heads = [PlasticAttentionHead(self.head_dim, window) for _ in range(n_heads)]

    def attend_step(self, x_t: np.ndarray, t: int | None = None) -> np.ndarray:
        if x_t.shape != (self.d_model,):
            raise numerics.ShapeError(f"expected input of dim {self.d_model}")
        if t is None:
            t = self.scheduler.t
        if t != self.scheduler.t:
            raise SchedulerError(f"token index {t} != scheduler clock {self.scheduler.t}")
        xn = numerics.rmsnorm(x_t, self.norm_gain, self.eps)
        q = self.wq @ xn
        k = self.wk @ xn
        v = self.wv @ xn
        slot = self.scheduler.next_slot
        slots = slot_mask(self.scheduler, t)
        dh = self.head_dim
        y = np.empty(self.d_model)
        for h, head in enumerate(self.heads):
            sl = slice(h * dh, (h + 1) * dh)
            # write-then-read: the current token's key takes part in its own
            # attention scores
            head.write_key(k[sl], slot)
            a = head.scores(q[sl])[slots]
            if self.scaled:
                a = a / np.sqrt(dh)
            p = numerics.softmax(a)
            head.write_value(v[sl], slot)
            y[sl] = head.read_value(p, slots)
        self.scheduler.advance()
        return self.wo @ y + self.bo

    def reset(self):
        self.scheduler = SlotScheduler(self.window)
        for head in self.heads:
            head.keys_conn.weights[:] = 0
            head.values_conn.weights[:] = 0
            for tr in head.keys_conn.traces.values():
                tr[:] = 0
            for tr in head.values_conn.traces.values():
                tr[:] = 0

    def state_dump(self) -> dict:
        return {
            "t": self.scheduler.t,
            "heads": [
                {
                    "keys": h.keys_conn.state_dump(),
                    "values": h.values_conn.state_dump(),
                }
                for h in self.heads
            ],
        }
