"""Uniform activation quantizers with a learned scale and clipped STE gradients.

Codes are stored in offset encoding: ``code = level - int_min`` so that every
code is a nonnegative bit pattern suitable for truth-table addressing.
Rounding is half-away-from-zero everywhere (training, enumeration, export).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuantizerSpec:
    bitwidth: int
    scale: float
    signed: bool = True

    def __post_init__(self):
        if not 1 <= self.bitwidth <= 8:
            raise ValueError(f"bitwidth must be in 1..8, got {self.bitwidth}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be a positive finite real, got {self.scale}")

    @property
    def levels(self) -> int:
        return 1 << self.bitwidth

    @property
    def int_min(self) -> int:
        return -(1 << (self.bitwidth - 1)) if self.signed else 0

    @property
    def int_max(self) -> int:
        return self.int_min + self.levels - 1


@dataclass(frozen=True)
class QuantCode:
    value: int
    width: int

    def __post_init__(self):
        if not 0 <= self.value < (1 << self.width):
            raise ValueError(f"code {self.value} does not fit in {self.width} bits")


def round_half_away(v):
    """Round to nearest integer, ties away from zero (works on scalars and arrays)."""
    return np.copysign(np.floor(np.abs(v) + 0.5), v)


def quantize_array(x, spec: QuantizerSpec) -> np.ndarray:
    """Vectorized quantize: reals -> int64 offset codes."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite value reached a quantizer")
    level = np.clip(round_half_away(x / spec.scale), spec.int_min, spec.int_max)
    return level.astype(np.int64) - spec.int_min


def dequantize_array(codes, spec: QuantizerSpec) -> np.ndarray:
    """Vectorized dequantize: offset codes -> reals."""
    codes = np.asarray(codes, dtype=np.int64)
    return (codes + spec.int_min).astype(np.float64) * spec.scale


def quantize(x: float, spec: QuantizerSpec) -> QuantCode:
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    return QuantCode(int(quantize_array(x, spec)), spec.bitwidth)


def dequantize(code: QuantCode, spec: QuantizerSpec) -> float:
    if code.width != spec.bitwidth:
        raise ValueError(f"code width {code.width} != quantizer bitwidth {spec.bitwidth}")
    return float(dequantize_array(code.value, spec))


def surrogate(x, spec: QuantizerSpec):
    """Differentiable stand-in for dequantize(quantize(x)) used by the STE: a clamp."""
    return np.clip(x, spec.int_min * spec.scale, spec.int_max * spec.scale)


def ste_backward(upstream, x, spec: QuantizerSpec):
    """Clipped straight-through estimator.

    Returns ``(grad_x, grad_scale)`` where ``grad_x`` has the shape of ``x`` and
    ``grad_scale`` is summed over all elements. Inside the representable range
    the gradient passes through and the scale receives nothing; outside it the
    input gradient is zero and the scale receives ``upstream * boundary_level``.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    ratio = np.asarray(x, dtype=np.float64) / spec.scale
    below = ratio < spec.int_min
    above = ratio > spec.int_max
    grad_x = np.where(below | above, 0.0, upstream)
    grad_scale = float(np.sum(upstream * below) * spec.int_min + np.sum(upstream * above) * spec.int_max)
    return grad_x, grad_scale


def quantize_ste_backward(upstream_grad: float, x: float, spec: QuantizerSpec) -> tuple[float, float]:
    if not (math.isfinite(upstream_grad) and math.isfinite(x)):
        raise ValueError("non-finite input to STE backward")
    grad_x, grad_scale = ste_backward(upstream_grad, x, spec)
    return float(grad_x), grad_scale
