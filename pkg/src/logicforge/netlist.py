"""Lossless conversion of a frozen model into a netlist of truth tables.

Bit conventions (shared by the simulator and the Verilog emitter):

* A truth-table address is the concatenation of the neuron's input codes in
  mask order, first masked input in the most significant position.
* Buses pack element ``i`` of a layer (or input feature ``i``) at bits
  ``[i*b + b - 1 : i*b]``, element 0 least significant.
* Register boundaries are numbered ``0..L``: 0 is the network input, ``k``
  sits between layer ``k-1`` and layer ``k``, ``L`` is the output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .quantizer import dequantize_array
from .topology import DEFAULT_FANIN_CAP, LayerSpec, NetworkSpec, lut_cost
from .trainer import TrainedModel, eval_neuron

INPUT = -1  # source layer id for network input features
DUMP_FORMAT = "logicforge-netlist"
DUMP_VERSION = 1


@dataclass(frozen=True, eq=False)
class TruthTable:
    in_bits: int
    out_bits: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int64)
        if entries.shape != (1 << self.in_bits,):
            raise ValueError(f"table needs {1 << self.in_bits} entries, got {entries.shape}")
        if entries.size and (entries.min() < 0 or entries.max() >= 1 << self.out_bits):
            raise ValueError(f"table entry does not fit in {self.out_bits} bits")
        object.__setattr__(self, "entries", entries)

    @property
    def storage_bits(self) -> int:
        return self.out_bits << self.in_bits

    @property
    def lut_cost(self) -> int:
        return lut_cost(self.in_bits, self.out_bits)

    def __eq__(self, other):
        if not isinstance(other, TruthTable):
            return NotImplemented
        return (self.in_bits, self.out_bits) == (other.in_bits, other.out_bits) and np.array_equal(
            self.entries, other.entries
        )


@dataclass(frozen=True)
class HBBInstance:
    layer: int
    neuron: int
    table: TruthTable
    input_wires: tuple[tuple[int, int], ...]  # (source layer or INPUT, index) in mask order
    source_bits: int

    @property
    def name(self) -> str:
        return f"layer{self.layer}_n{self.neuron}"


@dataclass(frozen=True)
class Netlist:
    input_features: int
    input_bits: int
    layer_widths: tuple[int, ...]
    layer_bits: tuple[int, ...]  # output bitwidth of every layer
    layers: tuple[tuple[HBBInstance, ...], ...]
    register_stages: tuple[int, ...]
    num_classes: int

    @property
    def num_layers(self) -> int:
        return len(self.layer_widths)

    @property
    def num_outputs(self) -> int:
        return self.layer_widths[-1]

    @property
    def output_bits(self) -> int:
        return self.layer_bits[-1]

    @property
    def input_width_bits(self) -> int:
        return self.input_features * self.input_bits

    def hbbs(self):
        for layer in self.layers:
            yield from layer

    @property
    def hbb_count(self) -> int:
        return sum(len(l) for l in self.layers)

    def lut_cost(self) -> int:
        return sum(h.table.lut_cost for h in self.hbbs())

    def source_bits(self, layer: int) -> int:
        return self.input_bits if layer == 0 else self.layer_bits[layer - 1]


def _decode_addresses(fanin: int, bits: int) -> np.ndarray:
    addr = np.arange(1 << (fanin * bits), dtype=np.int64)
    shifts = np.array([(fanin - 1 - j) * bits for j in range(fanin)], dtype=np.int64)
    return (addr[:, None] >> shifts) & ((1 << bits) - 1)


def enumerate_neuron(model: TrainedModel, layer: int, neuron: int, fanin_cap: int = DEFAULT_FANIN_CAP) -> TruthTable:
    if not model.frozen:
        raise ValueError("enumerate_neuron requires a frozen model")
    ls: LayerSpec = model.spec.layers[layer]
    X = ls.fanin_bits
    if X > fanin_cap:
        raise ValueError(f"layer {layer}: fan-in {X} bits exceeds cap {fanin_cap}")
    codes = _decode_addresses(ls.fanin, ls.in_bits)
    values = dequantize_array(codes, model.input_quantizer_for(layer))
    return TruthTable(X, ls.out_bits, eval_neuron(model, layer, neuron, values))


def build_netlist(model: TrainedModel, fanin_cap: int = DEFAULT_FANIN_CAP) -> Netlist:
    spec: NetworkSpec = model.spec
    layers = []
    for k, ls in enumerate(spec.layers):
        src = INPUT if k == 0 else k - 1
        mask = model.masks[k]
        layers.append(
            tuple(
                HBBInstance(
                    layer=k,
                    neuron=n,
                    table=enumerate_neuron(model, k, n, fanin_cap),
                    input_wires=tuple((src, int(i)) for i in mask.indices[n]),
                    source_bits=ls.in_bits,
                )
                for n in range(ls.out_width)
            )
        )
    net = Netlist(
        input_features=spec.input_features,
        input_bits=spec.input_bits,
        layer_widths=tuple(l.out_width for l in spec.layers),
        layer_bits=tuple(l.out_bits for l in spec.layers),
        layers=tuple(layers),
        register_stages=(),
        num_classes=spec.num_classes,
    )
    return insert_registers(net, "default")


def prune_dead(net: Netlist) -> Netlist:
    """Drop every HBB with no path to an output port. Output-layer HBBs always stay."""
    keep = [None] * net.num_layers
    keep[-1] = net.layers[-1]
    for k in range(net.num_layers - 2, -1, -1):
        used = {i for h in keep[k + 1] for (src, i) in h.input_wires if src == k}
        keep[k] = tuple(h for h in net.layers[k] if h.neuron in used)
    return replace(net, layers=tuple(keep))


def insert_registers(net: Netlist, positions="default") -> Netlist:
    """Set the registered boundaries: ``"default"`` (all L+1), ``"none"``, or explicit indices."""
    if positions == "default":
        stages = tuple(range(net.num_layers + 1))
    elif positions in ("none", None):
        stages = ()
    else:
        stages = tuple(sorted({int(p) for p in positions}))
        bad = [p for p in stages if not 0 <= p <= net.num_layers]
        if bad:
            raise ValueError(f"register boundaries {bad} outside 0..{net.num_layers}")
    return replace(net, register_stages=stages)


def _hex_digits(bits: int) -> int:
    return (bits + 3) // 4


def dump_netlist(net: Netlist) -> str:
    """Serialize to the versioned JSON interchange format.

    Top-level keys, in order: format, version, input_features, input_bits,
    num_classes, layer_widths, layer_bits, register_stages, hbbs. Each HBB
    record holds layer, neuron, in_bits, out_bits, source_bits, inputs
    (list of [source_layer, index], source_layer -1 for input features) and
    table: the entries for addresses 0..2^in_bits-1 as one hex string with
    ceil(out_bits/4) lowercase digits per entry.
    """
    hbbs = []
    for h in net.hbbs():
        t = h.table
        width = _hex_digits(t.out_bits)
        hbbs.append(
            {
                "layer": h.layer,
                "neuron": h.neuron,
                "in_bits": t.in_bits,
                "out_bits": t.out_bits,
                "source_bits": h.source_bits,
                "inputs": [list(w) for w in h.input_wires],
                "table": "".join(f"{int(v):0{width}x}" for v in t.entries),
            }
        )
    doc = {
        "format": DUMP_FORMAT,
        "version": DUMP_VERSION,
        "input_features": net.input_features,
        "input_bits": net.input_bits,
        "num_classes": net.num_classes,
        "layer_widths": list(net.layer_widths),
        "layer_bits": list(net.layer_bits),
        "register_stages": list(net.register_stages),
        "hbbs": hbbs,
    }
    return json.dumps(doc, indent=1) + "\n"


def load_netlist_text(text: str) -> Netlist:
    doc = json.loads(text)
    if doc.get("format") != DUMP_FORMAT:
        raise ValueError("not a netlist dump")
    if doc.get("version") != DUMP_VERSION:
        raise ValueError(f"unsupported netlist dump version {doc.get('version')}")
    widths = tuple(doc["layer_widths"])
    layers = [[] for _ in widths]
    for rec in doc["hbbs"]:
        width = _hex_digits(rec["out_bits"])
        raw = rec["table"]
        n = 1 << rec["in_bits"]
        if len(raw) != n * width:
            raise ValueError(f"HBB layer{rec['layer']}_n{rec['neuron']}: table length mismatch")
        entries = np.array([int(raw[i * width : (i + 1) * width], 16) for i in range(n)], dtype=np.int64)
        layers[rec["layer"]].append(
            HBBInstance(
                layer=rec["layer"],
                neuron=rec["neuron"],
                table=TruthTable(rec["in_bits"], rec["out_bits"], entries),
                input_wires=tuple((int(a), int(b)) for a, b in rec["inputs"]),
                source_bits=rec["source_bits"],
            )
        )
    return Netlist(
        input_features=doc["input_features"],
        input_bits=doc["input_bits"],
        layer_widths=widths,
        layer_bits=tuple(doc["layer_bits"]),
        layers=tuple(tuple(sorted(l, key=lambda h: h.neuron)) for l in layers),
        register_stages=tuple(doc["register_stages"]),
        num_classes=doc["num_classes"],
    )


def save_netlist(net: Netlist, path) -> None:
    Path(path).write_text(dump_netlist(net), newline="\n")


def load_netlist(path) -> Netlist:
    return load_netlist_text(Path(path).read_text())
