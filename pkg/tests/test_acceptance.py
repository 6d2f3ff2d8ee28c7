"""Acceptance suite: one test per gate, one printed pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
summary lines.
"""

import math
import time

import numpy as np
import pytest

from plastiformer.config import ModelConfig, tiny_config
from plastiformer.engine import FewShotModel, evaluate, init_weights
from plastiformer.episodes import SyntheticFewShotDataset, episode_stream
from plastiformer.fixedpoint import (EXP_OUT_FRAC, RECIP_OUT_FRAC,
                                     RSQRT_OUT_FRAC, fixed_exp, fixed_recip,
                                     fixed_rsqrt, fixed_softmax)
from plastiformer.numerics import QuantSpec
from plastiformer.plastic_attention import (PlasticAttentionHead,
                                            PlasticAttentionLayer,
                                            decode_trace)
from plastiformer.reference import RefAttentionBlock
from plastiformer.rulelang import evaluate_rule, parse_rule, render

Q16 = 1 << 16


def _report(name, passed, detail):
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


def _random_pair(rng, d, heads, window, scaled=False):
    mats = {k: rng.normal(0, 1 / np.sqrt(d), size=(d, d)) for k in ("wq", "wk", "wv", "wo")}
    bo = rng.normal(0, 0.1, size=d)
    gain = np.ones(d)
    plastic = PlasticAttentionLayer(n_heads=heads, window=window, bo=bo,
                                    norm_gain=gain, scaled=scaled, **mats)
    ref = RefAttentionBlock(n_heads=heads, window=window, bo=bo,
                            norm_gain=gain, scaled=scaled, **mats)
    return plastic, ref


def test_plastic_attention_oracle_equivalence():
    """100 seeded configs, W >= T: plastic matches the dense oracle < 1e-5."""
    t0 = time.perf_counter()
    master = np.random.default_rng(2024)
    worst = 0.0
    for i in range(100):
        rng = np.random.default_rng(master.integers(2**63))
        d = int(rng.choice([8, 16, 64, 128]))
        heads = int(rng.choice([h for h in (1, 2, 4) if d % h == 0]))
        t_len = int(rng.integers(1, 33))
        window = t_len + int(rng.integers(0, 8))
        plastic, ref = _random_pair(rng, d, heads, window)
        xs = rng.normal(size=(t_len, d))
        for t in range(t_len):
            zp = plastic.attend_step(xs[t], t)
            zr = ref.attend_step(xs[t], t)
            worst = max(worst, float(np.max(np.abs(zp - zr))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 60
    _report("plastic-attention oracle equivalence", ok,
            f"max |z_p - z_r| = {worst:.3e} over 100 configs in {elapsed:.1f}s")
    assert worst < 1e-5
    assert elapsed < 60


def test_sliding_window_equivalence():
    """W in {2,4,8}, T = 4W: plastic equals last-min(t+1,W)-token attention."""
    t0 = time.perf_counter()
    worst = 0.0
    for window in (2, 4, 8):
        rng = np.random.default_rng(100 + window)
        plastic, ref = _random_pair(rng, 16, 2, window)
        xs = rng.normal(size=(4 * window, 16))
        for t in range(4 * window):
            zp = plastic.attend_step(xs[t], t)
            zr = ref.attend_step(xs[t], t)
            worst = max(worst, float(np.max(np.abs(zp - zr))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 60
    _report("sliding-window equivalence", ok,
            f"max diff = {worst:.3e} in {elapsed:.1f}s")
    assert worst < 1e-5
    assert elapsed < 60


def test_cache_content_bit_exact_integer_mode():
    """10^4 fuzzed steps: key rows and value columns land bit-exactly."""
    rng = np.random.default_rng(7)
    window, dh = 8, 4
    head = PlasticAttentionHead(
        head_dim=dh, window=window,
        weight_spec=QuantSpec(16, True, 0), trace_spec=QuantSpec(8, False, 0),
    )
    failures = 0
    for t in range(10_000):
        slot = t % window
        k = 2 * rng.integers(-64, 192, size=dh)  # even-rounded, encodable
        v = rng.integers(-127, 128, size=dh)
        head.write_key(k, slot)
        head.write_value(v, slot)
        if not (np.array_equal(head.key_row(slot), k)
                and np.array_equal(head.value_column(slot), v)):
            failures += 1
    _report("cache-content bit-exactness (integer mode)", failures == 0,
            f"{failures} mismatches over 10^4 steps")
    assert failures == 0
    assert head.saturated_encodings == 0


def test_rule_engine_overwrite_semantics():
    """Listing rules: parse, round-trip, exact overwrite over 10^5 bindings."""
    keys = parse_rule("2 * y0 * (x1 - 64) - y0 * w")
    values = parse_rule("x0 * y2 - x0 * y3 - x0 * y1 * w")
    assert parse_rule(render(keys)) == keys
    assert parse_rule(render(values)) == values

    n = 100_000
    rng = np.random.default_rng(9)
    x1 = rng.integers(0, 256, size=n)
    w = rng.integers(-512, 512, size=n)
    dw = evaluate_rule(keys, {"x1": x1, "y0": 1, "w": w})
    keys_ok = np.array_equal(w + dw, decode_trace(x1))

    y2 = rng.integers(0, 256, size=n)
    y3 = rng.integers(0, 256, size=n)
    w2 = rng.integers(-512, 512, size=n)
    dw2 = evaluate_rule(values, {"x0": 1, "y1": 1, "y2": y2, "y3": y3, "w": w2})
    values_ok = np.array_equal(w2 + dw2, y2 - y3)

    _report("rule engine overwrite semantics", keys_ok and values_ok,
            f"keys w_new == decoded trace: {keys_ok}; "
            f"values w_new == y2 - y3: {values_ok} (10^5 bindings each)")
    assert keys_ok
    assert values_ok


def test_autoregressive_parallel_agreement():
    """L=4, D=128, H=1, T=26: step mode equals causal-mask parallel mode."""
    config = ModelConfig(layers=4, embed_dim=128, heads=1, window=26,
                         image_pixels=16, num_classes=5)
    model = FewShotModel(config, init_weights(config, np.random.default_rng(11)))
    rng = np.random.default_rng(12)
    toks = rng.uniform(0, 1, size=(26, config.token_dim))
    auto = model.forward_tokens(toks)
    par = model.forward_tokens_parallel(toks)
    diff = float(np.max(np.abs(auto - par)))
    _report("autoregressive/parallel agreement", diff < 1e-5,
            f"max diff = {diff:.3e} (T=26)")
    assert diff < 1e-5


def test_fixed_point_kernels():
    """10^4-point sweeps: relative error <= 2^-8; softmax sums to 1."""
    worst_exp = 0.0
    for x in np.linspace(-16, 0, 10_000):
        code = int(round(x * Q16))
        got = fixed_exp(code) / 2**EXP_OUT_FRAC
        ref = math.exp(code / Q16)
        worst_exp = max(worst_exp, abs(got - ref) / ref)

    xs = np.exp(np.linspace(math.log(2**-14), math.log(2**14), 10_000))
    worst_recip = worst_rsqrt = 0.0
    for x in xs:
        code = max(1, int(round(x * Q16)))
        xv = code / Q16
        got = fixed_recip(code) / 2**RECIP_OUT_FRAC
        worst_recip = max(worst_recip, abs(got - 1 / xv) * xv)
        got = fixed_rsqrt(code) / 2**RSQRT_OUT_FRAC
        worst_rsqrt = max(worst_rsqrt, abs(got - 1 / math.sqrt(xv)) * math.sqrt(xv))

    rng = np.random.default_rng(13)
    worst_sum = 0.0
    for _ in range(100):
        scores = rng.integers(-40 * Q16, 40 * Q16, size=rng.integers(1, 32))
        worst_sum = max(worst_sum, abs(fixed_softmax(scores).sum() / Q16 - 1.0))

    ok = max(worst_exp, worst_recip, worst_rsqrt) <= 2**-8 and worst_sum <= 2**-8
    _report("fixed-point kernels", ok,
            f"exp {worst_exp:.2e}, recip {worst_recip:.2e}, "
            f"rsqrt {worst_rsqrt:.2e}, softmax sum err {worst_sum:.2e} "
            f"(bound {2**-8:.2e})")
    assert worst_exp <= 2**-8
    assert worst_recip <= 2**-8
    assert worst_rsqrt <= 2**-8
    assert worst_sum <= 2**-8


def test_chance_level_sanity():
    """Untrained tiny model scores 20% +/- 5 on 5-way 1-shot, 1024 episodes."""
    config = tiny_config(num_classes=5, image_pixels=16, window=8)
    model = FewShotModel(config, init_weights(config, np.random.default_rng(21)))
    dataset = SyntheticFewShotDataset(num_classes=64, pixels=16, seed=22)
    stream = episode_stream(dataset, 5, 1, seed=23)
    res = evaluate(model, stream, 1024, workers=4)
    ok = abs(res.accuracy - 0.20) <= 0.05
    _report("chance-level sanity", ok,
            f"accuracy = {res.accuracy:.3f} over 1024 episodes")
    assert ok
