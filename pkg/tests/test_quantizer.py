import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logicforge.quantizer import (
    QuantCode,
    QuantizerSpec,
    dequantize,
    quantize,
    quantize_array,
    quantize_ste_backward,
    surrogate,
)


def nearest_code(x, spec):
    """Brute force: scan every level, pick the closest; ties go away from zero."""
    best = None
    for code in range(spec.levels):
        level = code + spec.int_min
        d = abs(x - level * spec.scale)
        key = (round(d, 12), -abs(level))
        if best is None or key < best[0]:
            best = (key, code)
    return best[1]


specs = st.builds(
    QuantizerSpec,
    bitwidth=st.integers(1, 8),
    scale=st.floats(1e-3, 10.0),
    signed=st.booleans(),
)


def test_level_ranges():
    s = QuantizerSpec(3, 1.0, signed=True)
    assert (s.int_min, s.int_max, s.levels) == (-4, 3, 8)
    u = QuantizerSpec(3, 1.0, signed=False)
    assert (u.int_min, u.int_max) == (0, 7)


@pytest.mark.parametrize("bits,scale", [(0, 1.0), (9, 1.0), (2, 0.0), (2, -1.0), (2, math.inf)])
def test_invalid_spec(bits, scale):
    with pytest.raises(ValueError):
        QuantizerSpec(bits, scale)


def test_examples():
    assert quantize(0.7, QuantizerSpec(1, 1.0, True)).value == 1
    assert quantize(1.6, QuantizerSpec(2, 1.0, False)).value == nearest_code(1.6, QuantizerSpec(2, 1.0, False)) == 2
    s = QuantizerSpec(4, 0.3, True)
    assert dequantize(quantize(0.0, s), s) == 0.0
    assert dequantize(QuantCode(1, 1), QuantizerSpec(1, 1.0, True)) == 0.0
    assert dequantize(QuantCode(3, 2), QuantizerSpec(2, 0.5, False)) == 1.5


def test_half_away_from_zero():
    s = QuantizerSpec(4, 1.0, True)
    assert quantize(0.5, s).value - 8 == 1
    assert quantize(-0.5, s).value - 8 == -1
    assert quantize(2.5, s).value - 8 == 3
    assert quantize(-2.5, s).value - 8 == -3


def test_non_finite_rejected():
    s = QuantizerSpec(2, 1.0)
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(ValueError):
            quantize(bad, s)
    with pytest.raises(ValueError):
        quantize_array(np.array([0.0, np.nan]), s)


def test_width_mismatch():
    with pytest.raises(ValueError):
        dequantize(QuantCode(1, 2), QuantizerSpec(3, 1.0))
    with pytest.raises(ValueError):
        QuantCode(4, 2)


@given(specs)
def test_round_trip(spec):
    for c in range(spec.levels):
        assert quantize(dequantize(QuantCode(c, spec.bitwidth), spec), spec).value == c


@given(specs, st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_monotone(spec, a, b):
    lo, hi = min(a, b), max(a, b)
    assert quantize(lo, spec).value <= quantize(hi, spec).value


@given(specs, st.floats(-50, 50))
def test_matches_bruteforce(spec, x):
    x = x * spec.scale
    # keep clear of exact tie points where the brute-force tie rule is fragile
    frac = abs(x / spec.scale) % 1.0
    if abs(frac - 0.5) < 1e-9:
        return
    assert quantize(x, spec).value == nearest_code(x, spec)


@settings(max_examples=30)
@given(specs)
def test_level_count(spec):
    span = 10 * spec.scale * spec.levels
    xs = np.linspace(-span, span, 200_001)
    assert np.unique(quantize_array(xs, spec)).size == spec.levels


def test_ste_examples():
    u = QuantizerSpec(2, 1.0, signed=False)
    assert quantize_ste_backward(1.0, 1.2, u) == (1.0, 0.0)
    assert quantize_ste_backward(1.0, 100.0, u) == (0.0, 3.0)
    s = QuantizerSpec(3, 0.5, signed=True)
    assert quantize_ste_backward(1.0, -100.0, s) == (0.0, -4.0)
    assert quantize_ste_backward(2.0, -100.0, s) == (0.0, -8.0)


def _fd(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


@settings(max_examples=200)
@given(specs, st.floats(-3.0, 3.0), st.floats(-2.0, 2.0))
def test_ste_matches_surrogate_finite_difference(spec, t, g):
    # t is the position in units of the representable range
    lo, hi = spec.int_min * spec.scale, spec.int_max * spec.scale
    x = lo + (hi - lo) * t if hi > lo else t * spec.scale
    if min(abs(x - lo), abs(x - hi)) < 1e-3:
        return
    gx, gs = quantize_ste_backward(g, x, spec)
    fx = g * _fd(lambda v: float(surrogate(v, spec)), x)
    fs = g * _fd(lambda sc: float(surrogate(x, QuantizerSpec(spec.bitwidth, sc, spec.signed))), spec.scale)
    assert gx == pytest.approx(fx, rel=1e-4, abs=1e-7)
    assert gs == pytest.approx(fs, rel=1e-4, abs=1e-7)
