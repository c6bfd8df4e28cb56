"""Value-level netlist simulation and model/netlist equivalence checking."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netlist import INPUT, Netlist
from .trainer import TrainedModel, forward

DEFAULT_EXHAUSTIVE_BOUND = 1 << 24
CHUNK = 1 << 16


def eval_netlist(net: Netlist, inputs) -> np.ndarray:
    """Evaluate on one (F,) or many (N, F) input code vectors; returns output codes.

    Registers only add latency, so they are ignored here.
    """
    x = np.asarray(inputs, dtype=np.int64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_features:
        raise ValueError(f"expected {net.input_features} input codes per vector, got shape {x.shape}")
    if x.size and (x.min() < 0 or x.max() >= 1 << net.input_bits):
        raise ValueError(f"input code does not fit in {net.input_bits} bits")
    signals = {INPUT: x}
    for k, layer in enumerate(net.layers):
        out = np.zeros((x.shape[0], net.layer_widths[k]), dtype=np.int64)
        for h in layer:
            addr = np.zeros(x.shape[0], dtype=np.int64)
            for src, i in h.input_wires:
                addr = (addr << h.source_bits) | signals[src][:, i]
            out[:, h.neuron] = h.table.entries[addr]
        signals[k] = out
    y = signals[net.num_layers - 1]
    return y[0] if single else y


@dataclass
class EquivalenceReport:
    samples_checked: int
    mismatches: int
    exhaustive: bool
    first_mismatch: tuple[list[int], list[int], list[int]] | None = None  # (input, model, netlist)
    first_mismatch_index: int | None = None

    @property
    def ok(self) -> bool:
        return self.mismatches == 0

    def summary_line(self) -> str:
        return (
            f"samples={self.samples_checked} mismatches={self.mismatches} "
            f"exhaustive={str(self.exhaustive).lower()}"
        )

    def to_text(self) -> str:
        lines = [
            "equivalence report",
            f"  mode:             {'exhaustive' if self.exhaustive else 'random'}",
            f"  samples checked:  {self.samples_checked}",
            f"  mismatches:       {self.mismatches}",
            f"  result:           {'PASS' if self.ok else 'FAIL'}",
        ]
        if self.first_mismatch is not None:
            inp, ref, got = self.first_mismatch
            lines += [
                f"  first mismatch at sample {self.first_mismatch_index}:",
                f"    input codes:   {inp}",
                f"    model codes:   {ref}",
                f"    netlist codes: {got}",
            ]
        return "\n".join(lines) + "\n"


def _exhaustive_inputs(net: Netlist, start: int, stop: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    f, b = net.input_features, net.input_bits
    shifts = np.array([(f - 1 - j) * b for j in range(f)], dtype=np.int64)
    return (idx[:, None] >> shifts) & ((1 << b) - 1)


def check_equivalence(
    model: TrainedModel,
    net: Netlist,
    mode: str = "random",
    n: int = 10_000,
    seed: int = 0,
    exhaustive_bound: int = DEFAULT_EXHAUSTIVE_BOUND,
) -> EquivalenceReport:
    """Compare the model's eval-mode output codes with the netlist's, bit-exactly."""
    if not model.frozen:
        raise ValueError("check_equivalence requires a frozen model")
    if (model.spec.input_features, model.spec.input_bits) != (net.input_features, net.input_bits):
        raise ValueError("model and netlist input ports differ")
    if mode == "exhaustive":
        total = 1 << net.input_width_bits
        if total > exhaustive_bound:
            raise ValueError(
                f"exhaustive check needs {total} samples (bound {exhaustive_bound}); use random mode instead"
            )
        batches = ((s, _exhaustive_inputs(net, s, min(s + CHUNK, total))) for s in range(0, total, CHUNK))
    elif mode == "random":
        total = n
        x_all = np.random.default_rng(seed).integers(0, 1 << net.input_bits, size=(n, net.input_features))
        batches = ((s, x_all[s : s + CHUNK]) for s in range(0, n, CHUNK))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    mismatches = 0
    first = None
    first_idx = None
    for start, x in batches:
        _, cache = forward(model, x, "eval")
        ref = cache.output_codes
        got = eval_netlist(net, x)
        bad = np.flatnonzero(np.any(ref != got, axis=1))
        mismatches += bad.size
        if bad.size and first is None:
            i = int(bad[0])
            first_idx = start + i
            first = (x[i].tolist(), ref[i].tolist(), got[i].tolist())
    return EquivalenceReport(total, mismatches, mode == "exhaustive", first, first_idx)


def lut_levels(X: int) -> int:
    """Logic depth of an X-input table built from 6:1 LUTs plus a tree of 4:1 mux LUTs."""
    return 1 if X <= 6 else 1 + math.ceil((X - 6) / 2)


@dataclass
class PipelineReport:
    depth: int
    latency_ns: float
    throughput: float  # samples per second, initiation interval 1
    max_lut_levels: int

    def to_text(self) -> str:
        return (
            "pipeline report (model estimate)\n"
            f"  register stages:  {self.depth}\n"
            f"  latency:          {self.latency_ns:.3f} ns\n"
            f"  throughput:       {self.throughput:.4g} samples/s\n"
            f"  max LUT levels between registers: {self.max_lut_levels}\n"
        )


def pipeline_report(net: Netlist, clock_period_ns: float) -> PipelineReport:
    if not clock_period_ns > 0:
        raise ValueError("clock period must be positive")
    depth = len(net.register_stages)
    regs = set(net.register_stages)
    worst = current = 0
    for k in range(net.num_layers):
        if k in regs:
            current = 0
        layer_levels = max((lut_levels(h.table.in_bits) for h in net.layers[k]), default=0)
        current += layer_levels
        worst = max(worst, current)
    return PipelineReport(depth, depth * clock_period_ns, 1e9 / clock_period_ns, worst)
