"""Plastic dense connections driven by graded spikes and local rules.

A `LearningConnection` owns a (posts x pres) weight matrix, per-neuron trace
arrays and a parsed rule. In integer mode (a weight spec is given) traces are
unsigned, weights saturate to their spec's code range and rule arithmetic is
exact int64; in float mode the same machinery runs on float64 without
clamping, which is what lets the plastic attention path match the dense
oracle bit-for-bit in spirit and to 1e-5 in practice.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .numerics import QuantSpec
from .rulelang import RuleExpr, evaluate_rule


class GradedSpikeConfig(enum.Enum):
    OVERWRITE = "overwrite"
    ACCUMULATE = "accumulate"


@dataclass(frozen=True)
class GradedSpike:
    neuron_index: int
    payload: object  # int in integer mode, float in float mode


PRE_TRACES = ("x1", "x2")
POST_TRACES = ("y1", "y2", "y3")


class LearningConnection:
    def __init__(
        self,
        n_pre: int,
        n_post: int,
        rule: RuleExpr,
        spike_cfg: GradedSpikeConfig = GradedSpikeConfig.OVERWRITE,
        weight_spec: QuantSpec | None = None,
        trace_spec: QuantSpec | None = None,
    ):
        self.n_pre = n_pre
        self.n_post = n_post
        self.rule = rule
        self.spike_cfg = spike_cfg
        self.weight_spec = weight_spec
        self.trace_spec = trace_spec
        self.saturation_events = 0
        dtype = np.int64 if weight_spec is not None else np.float64
        self.weights = np.zeros((n_post, n_pre), dtype=dtype)
        self.traces = {name: np.zeros(n_pre, dtype=dtype) for name in PRE_TRACES}
        self.traces.update({name: np.zeros(n_post, dtype=dtype) for name in POST_TRACES})

    @property
    def integer_mode(self) -> bool:
        return self.weight_spec is not None

    def _check_pre(self, index: int):
        if not 0 <= index < self.n_pre:
            raise IndexError(f"pre index {index} out of range [0, {self.n_pre})")

    def _check_post(self, index: int):
        if not 0 <= index < self.n_post:
            raise IndexError(f"post index {index} out of range [0, {self.n_post})")

    def _clamp_trace(self, values):
        if self.trace_spec is None:
            return values
        lo, hi = self.trace_spec.code_min, self.trace_spec.code_max
        clamped = np.clip(values, lo, hi)
        self.saturation_events += int(np.count_nonzero(clamped != values))
        return clamped

    def _clamp_weights(self, values):
        if self.weight_spec is None:
            return values
        lo, hi = self.weight_spec.code_min, self.weight_spec.code_max
        clamped = np.clip(values, lo, hi)
        self.saturation_events += int(np.count_nonzero(clamped != values))
        return clamped

    def propagate(self, spikes) -> np.ndarray:
        """weights @ dense(spikes); silent pre-neurons contribute zero."""
        vec = np.zeros(self.n_pre, dtype=self.weights.dtype)
        for s in spikes:
            self._check_pre(s.neuron_index)
            vec[s.neuron_index] += s.payload
        return self.weights @ vec

    def write_pre_trace(self, spikes, trace_id: str = "x1"):
        if trace_id not in PRE_TRACES:
            raise ValueError(f"unknown pre trace {trace_id!r}")
        trace = self.traces[trace_id]
        for s in spikes:
            self._check_pre(s.neuron_index)
            if self.spike_cfg is GradedSpikeConfig.OVERWRITE:
                trace[s.neuron_index] = self._clamp_trace(np.asarray(s.payload))
            else:
                trace[s.neuron_index] = self._clamp_trace(
                    np.asarray(trace[s.neuron_index] + s.payload)
                )

    def write_post_trace(self, values, trace_id: str):
        if trace_id not in POST_TRACES:
            raise ValueError(f"unknown post trace {trace_id!r}")
        values = np.asarray(values)
        if values.shape != (self.n_post,):
            raise ValueError(f"expected {self.n_post} post values, got shape {values.shape}")
        if self.trace_spec is not None:
            lo, hi = self.trace_spec.code_min, self.trace_spec.code_max
            if np.any(values < lo) or np.any(values > hi):
                raise ValueError("post trace value outside the trace range")
        self.traces[trace_id][:] = values

    def _binding(self, *, x0, y0, pre_slice, post_slice):
        b = {"x0": x0, "y0": y0}
        for name in PRE_TRACES:
            b[name] = self.traces[name][pre_slice]
        for name in POST_TRACES:
            b[name] = self.traces[name][post_slice]
        return b

    def trigger_post(self, post_index: int):
        """Fire y0 on one post neuron: apply the rule across its row."""
        self._check_post(post_index)
        b = self._binding(x0=0, y0=1, pre_slice=slice(None), post_slice=post_index)
        b["w"] = self.weights[post_index, :]
        dw = evaluate_rule(self.rule, b)
        self.weights[post_index, :] = self._clamp_weights(self.weights[post_index, :] + dw)

    def trigger_pre(self, pre_index: int):
        """Fire x0 on one pre neuron: apply the rule down its column."""
        self._check_pre(pre_index)
        b = self._binding(x0=1, y0=0, pre_slice=pre_index, post_slice=slice(None))
        b["w"] = self.weights[:, pre_index]
        dw = evaluate_rule(self.rule, b)
        self.weights[:, pre_index] = self._clamp_weights(self.weights[:, pre_index] + dw)

    def state_dump(self) -> dict:
        return {
            "weights": self.weights.copy(),
            "traces": {k: v.copy() for k, v in self.traces.items()},
            "saturation_events": self.saturation_events,
        }
