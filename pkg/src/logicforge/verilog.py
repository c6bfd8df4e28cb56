"""Verilog emission: one ROM module per HBB plus a pipelined top module.

Output is deterministic: stable ordering, fixed formatting, LF line endings.
"""

from __future__ import annotations

import numpy as np

from .netlist import HBBInstance, Netlist

TOP = "lut_network"


def _bin(value: int, width: int) -> str:
    return f"{width}'b{value:0{width}b}"


def emit_hbb(h: HBBInstance) -> str:
    t = h.table
    X, Y = t.in_bits, t.out_bits
    lines = [
        f"module {h.name} (input [{X - 1}:0] M0, output reg [{Y - 1}:0] M1);",
        "",
        "always @(M0) begin",
        "  case (M0)",
    ]
    lines += [f"    {_bin(a, X)}: M1 = {_bin(int(v), Y)};" for a, v in enumerate(t.entries)]
    lines += [
        f"    default: M1 = {_bin(0, Y)};",
        "  endcase",
        "end",
        "endmodule",
        "",
    ]
    return "\n".join(lines)


def _slice(bus: str, index: int, bits: int) -> str:
    lo = index * bits
    return f"{bus}[{lo + bits - 1}:{lo}]"


def emit_top(net: Netlist, name: str = TOP) -> str:
    L = net.num_layers
    out_w = net.num_outputs * net.output_bits
    in_w = net.input_width_bits
    regs = set(net.register_stages)
    lines = [
        f"module {name} (input clk, input [{in_w - 1}:0] M0, output [{out_w - 1}:0] M{L + 1});",
        "",
    ]

    def boundary(k: int, width: int, source: str):
        # s<k>: values crossing boundary k (0 = input, L = output)
        if k in regs:
            lines.append(f"reg [{width - 1}:0] s{k};")
            lines.append(f"always @(posedge clk) s{k} <= {source};")
        else:
            lines.append(f"wire [{width - 1}:0] s{k} = {source};")

    boundary(0, in_w, "M0")
    for k, layer in enumerate(net.layers):
        width = net.layer_widths[k] * net.layer_bits[k]
        bits = net.layer_bits[k]
        src_bits = net.source_bits(k)
        lines.append("")
        lines.append(f"wire [{width - 1}:0] layer{k}_out;")
        live = {h.neuron for h in layer}
        for h in layer:
            # first masked input ends up most significant in the concatenation
            parts = ", ".join(_slice(f"s{k}", i, src_bits) for (src, i) in h.input_wires)
            lines.append(f"{h.name} {h.name}_inst (.M0({{{parts}}}), .M1({_slice(f'layer{k}_out', h.neuron, bits)}));")
        for n in range(net.layer_widths[k]):
            if n not in live:
                lines.append(f"assign {_slice(f'layer{k}_out', n, bits)} = {_bin(0, bits)};")
        boundary(k + 1, width, f"layer{k}_out")
    lines += ["", f"assign M{L + 1} = s{L};", "", "endmodule", ""]
    return "\n".join(lines)


def emit_verilog(net: Netlist, name: str = TOP) -> str:
    """Whole design as one text: HBB modules in (layer, neuron) order, then the top."""
    return "\n".join([emit_hbb(h) for h in net.hbbs()] + [emit_top(net, name)])


def emit_verilog_files(net: Netlist, name: str = TOP) -> dict[str, str]:
    """One module per file, keyed by file name."""
    files = {f"{h.name}.v": emit_hbb(h) for h in net.hbbs()}
    files[f"{name}.v"] = emit_top(net, name)
    return files


def count_case_arms(text: str, module: str) -> tuple[int, int]:
    """(non-default arms, default arms) inside ``module`` of emitted text."""
    start = text.index(f"module {module} ")
    end = text.index("endmodule", start)
    body = text[start:end].splitlines()
    arms = sum(1 for l in body if l.strip()[:1].isdigit() and "'b" in l.split(":")[0])
    defaults = sum(1 for l in body if l.strip().startswith("default:"))
    return arms, defaults


def emit_testbench(net: Netlist, inputs: np.ndarray, expected: np.ndarray, name: str = TOP) -> str:
    """Self-checking testbench: drive each sample, wait out the pipeline, compare."""
    L = net.num_layers
    in_w = net.input_width_bits
    out_w = net.num_outputs * net.output_bits
    depth = len(net.register_stages)

    def pack(codes, bits):
        v = 0
        for i, c in enumerate(codes):
            v |= int(c) << (i * bits)
        return v

    lines = [
        "`timescale 1ns/1ps",
        f"module {name}_tb;",
        "reg clk = 0;",
        f"reg [{in_w - 1}:0] in_bus;",
        f"wire [{out_w - 1}:0] out_bus;",
        "integer errors = 0;",
        f"{name} dut (.clk(clk), .M0(in_bus), .M{L + 1}(out_bus));",
        "always #5 clk = ~clk;",
        "initial begin",
    ]
    for i, (x, y) in enumerate(zip(np.asarray(inputs), np.asarray(expected))):
        want = pack(y, net.output_bits)
        lines.append(f"  in_bus = {in_w}'h{pack(x, net.input_bits):x};")
        lines.append(f"  repeat ({depth}) @(posedge clk);" if depth else "  #1;")
        lines.append("  #1;")
        lines.append(
            f"  if (out_bus !== {out_w}'h{want:x}) begin errors = errors + 1; "
            f'$display("sample {i}: got %h expected %h", out_bus, {out_w}\'h{want:x}); end'
        )
    lines += [
        '  if (errors == 0) $display("PASS"); else $display("FAIL: %0d errors", errors);',
        "  $finish;",
        "end",
        "endmodule",
        "",
    ]
    return "\n".join(lines)
