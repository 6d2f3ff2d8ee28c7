"""Integer-only exponential, reciprocal and inverse-sqrt kernels.

These stand in for the custom division/exponential neurons of the digital
target. All arithmetic is on Python ints (arbitrary precision, so the wide
accumulators are exact); inputs are Q16 codes, outputs use wider fractional
formats so that small results keep enough mantissa bits:

    fixed_exp    : Q16 in  -> Q46 out, input clamped to [-16, 0]
    fixed_recip  : Q16 in  -> Q32 out, input in [2^-14, 2^14]
    fixed_rsqrt  : Q16 in  -> Q32 out, input in [2^-14, 2^14]

Each kernel's relative error against the float reference stays below 2^-8
over its operating range (swept in the test suite).
"""

from __future__ import annotations

import numpy as np

IN_FRAC = 16
EXP_OUT_FRAC = 46
RECIP_OUT_FRAC = 32
RSQRT_OUT_FRAC = 32

EXP_MIN_INPUT = -16 << IN_FRAC

_LOG2E_Q16 = 94548  # round(log2(e) * 2^16)
# degree-3 fit of 2^f on [0,1) with the constant term pinned to 1.0,
# so fixed_exp(0) is exactly one
_EXP_C1 = 45554
_EXP_C2 = 14992
_EXP_C3 = 4957

# seeds for 1/m, m in [0.5, 1) keyed by the top 6 mantissa bits
_RECIP_SEED = [
    129056, 125203, 121574, 118149, 114912, 111848, 108943, 106185,
    103563, 101068, 98690, 96421, 94254, 92183, 90200, 88301,
    86480, 84733, 83056, 81443, 79892, 78398, 76960, 75573,
    74235, 72944, 71698, 70493, 69327, 68200, 67109, 66052,
]

# seeds for 1/sqrt(m), m in [0.25, 1); 64-entry table keyed by m >> 10,
# entries below 0.25 unreachable after even-exponent normalization
_RSQRT_SEED = [0] * 16 + [
    129071, 125329, 121894, 118728, 115796, 113071, 110530, 108152,
    105922, 103824, 101847, 99978, 98208, 96529, 94934, 93415,
    91966, 90583, 89261, 87995, 86781, 85616, 84497, 83420,
    82384, 81385, 80422, 79492, 78594, 77726, 76885, 76072,
    75283, 74519, 73778, 73058, 72359, 71679, 71019, 70376,
    69750, 69141, 68548, 67969, 67405, 66855, 66318, 65794,
]


class DomainError(ValueError):
    """Input outside the kernel's domain."""


def fixed_exp(code: int) -> int:
    """exp(x) for x = code * 2^-16, clamped to [-16, 0]; result in Q46."""
    code = int(code)
    if code > 0:
        code = 0
    if code < EXP_MIN_INPUT:
        code = EXP_MIN_INPUT
    y = (code * _LOG2E_Q16 + 32768) >> 16  # x * log2(e) in Q16
    k = y >> 16
    f = y - (k << 16)
    m = _EXP_C3
    m = ((m * f + 32768) >> 16) + _EXP_C2
    m = ((m * f + 32768) >> 16) + _EXP_C1
    m = ((m * f + 32768) >> 16) + (1 << 16)  # 2^f mantissa in Q16, [1, 2)
    return m << (30 + k)


def fixed_recip(code: int) -> int:
    """1/x for x = code * 2^-16 > 0; result in Q32."""
    code = int(code)
    if code <= 0:
        raise DomainError("fixed_recip requires a positive input")
    if code & (code - 1) == 0:
        # powers of two invert exactly by shifting
        p = code.bit_length() - 1 - IN_FRAC
        return 1 << (RECIP_OUT_FRAC - p)
    e = code.bit_length() - 16
    m = code >> e if e > 0 else code << -e  # mantissa in [2^15, 2^16)
    r = _RECIP_SEED[(m >> 10) - 32]
    for _ in range(2):
        r = (r * ((2 << 16) - ((m * r + 32768) >> 16)) + 32768) >> 16
    sh = 16 - e
    return r << sh if sh >= 0 else (r + (1 << (-sh - 1))) >> -sh


def fixed_rsqrt(code: int) -> int:
    """1/sqrt(x) for x = code * 2^-16 > 0; result in Q32."""
    code = int(code)
    if code <= 0:
        raise DomainError("fixed_rsqrt requires a positive input")
    e2 = code.bit_length() - 16
    if e2 % 2 != 0:
        e2 += 1
    m = code >> e2 if e2 > 0 else code << -e2  # mantissa in [2^14, 2^16)
    r = _RSQRT_SEED[m >> 10]
    for _ in range(2):
        r2 = (r * r + 32768) >> 16
        mr2 = (m * r2 + 32768) >> 16
        r = (r * ((3 << 16) - mr2) + (1 << 16)) >> 17
    sh = 16 - e2 // 2
    return r << sh if sh >= 0 else (r + (1 << (-sh - 1))) >> -sh


def fixed_softmax(codes) -> np.ndarray:
    """Softmax over Q16 score codes, returned as Q16 probability codes.

    Scores more than 16 below the max clamp to exp(-16); the result vector
    sums to 1.0 within 2^-8.
    """
    codes = [int(c) for c in np.asarray(codes).ravel()]
    if not codes:
        raise ValueError("fixed_softmax needs at least one score")
    top = max(codes)
    exps = [fixed_exp(c - top) for c in codes]
    total = sum(exps)
    probs = [((e << 16) + total // 2) // total for e in exps]
    return np.asarray(probs, dtype=np.int64)
