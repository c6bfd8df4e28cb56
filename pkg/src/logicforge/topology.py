"""Fan-in restricted sparse topologies and the analytical 6:1 LUT cost model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_FANIN_CAP = 15

# Counts are reported as unsigned 64-bit quantities; anything wider is not a
# realistic single-device design.
MAX_COST_BITS = 64


class CostOverflowError(ValueError):
    """LUT count exceeds device scale (does not fit the count type)."""


@dataclass(frozen=True)
class LayerSpec:
    in_width: int
    out_width: int
    fanin: int
    in_bits: int
    out_bits: int

    @property
    def fanin_bits(self) -> int:
        return self.fanin * self.in_bits


@dataclass(frozen=True)
class NetworkSpec:
    input_features: int
    input_bits: int
    layers: tuple[LayerSpec, ...]
    num_classes: int
    seed: int = 0

    @property
    def binary_output(self) -> bool:
        """A single output neuron whose sign decides between two classes."""
        return self.num_classes == 2 and bool(self.layers) and self.layers[-1].out_width == 1

    @property
    def num_outputs(self) -> int:
        return self.layers[-1].out_width

    def to_dict(self) -> dict:
        return {
            "input_features": self.input_features,
            "input_bits": self.input_bits,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "layers": [
                {
                    "in_width": l.in_width,
                    "out_width": l.out_width,
                    "fanin": l.fanin,
                    "in_bits": l.in_bits,
                    "out_bits": l.out_bits,
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            input_features=int(d["input_features"]),
            input_bits=int(d["input_bits"]),
            layers=tuple(LayerSpec(**{k: int(v) for k, v in l.items()}) for l in d["layers"]),
            num_classes=int(d["num_classes"]),
            seed=int(d.get("seed", 0)),
        )


def build_spec(
    input_features: int,
    hidden: list[int],
    num_classes: int,
    beta: int,
    gamma: int,
    *,
    beta_i: int | None = None,
    beta_o: int | None = None,
    gamma_i: int | None = None,
    gamma_o: int | None = None,
    binary_output: bool = False,
    seed: int = 0,
) -> NetworkSpec:
    """Assemble a NetworkSpec the way Table-I style configs describe networks.

    ``hidden`` lists the hidden layer widths; an output layer of ``num_classes``
    neurons (or a single neuron when ``binary_output``) is appended. All layers
    share ``beta``/``gamma`` except the first layer's fan-in (``gamma_i``), the
    input feature bitwidth (``beta_i``) and the output layer's fan-in and
    bitwidth (``gamma_o``, ``beta_o``).
    """
    if binary_output and num_classes != 2:
        raise ValueError("binary_output requires num_classes == 2")
    widths = list(hidden) + [1 if binary_output else num_classes]
    in_bits = beta if beta_i is None else beta_i
    in_width = input_features
    layers = []
    for k, width in enumerate(widths):
        first, last = k == 0, k == len(widths) - 1
        fanin = gamma
        if first and gamma_i is not None:
            fanin = gamma_i
        if last and gamma_o is not None:
            fanin = gamma_o
        out_bits = beta_o if (last and beta_o is not None) else beta
        layers.append(LayerSpec(in_width, width, fanin, in_bits, out_bits))
        in_width, in_bits = width, out_bits
    return NetworkSpec(
        input_features=input_features,
        input_bits=beta if beta_i is None else beta_i,
        layers=tuple(layers),
        num_classes=num_classes,
        seed=seed,
    )


@dataclass(frozen=True)
class SparsityMask:
    """Per-neuron sorted input index lists, stored as an (out_width, fanin) int array."""

    indices: np.ndarray = field(repr=False)
    in_width: int

    @property
    def out_width(self) -> int:
        return self.indices.shape[0]

    @property
    def fanin(self) -> int:
        return self.indices.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SparsityMask):
            return NotImplemented
        return self.in_width == other.in_width and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash((self.in_width, self.indices.tobytes()))


def _neuron_subset(seed: int, layer_index: int, neuron_index: int, n: int, k: int) -> list[int]:
    # Partial Fisher-Yates over range(n); PCG64 keyed by (seed, layer, neuron).
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & (2**64 - 1), layer_index, neuron_index])))
    pool = list(range(n))
    for i in range(k):
        j = i + int(rng.integers(0, n - i))
        pool[i], pool[j] = pool[j], pool[i]
    return sorted(pool[:k])


def generate_mask(seed: int, layer_index: int, in_width: int, out_width: int, fanin: int) -> SparsityMask:
    if not 1 <= fanin <= in_width:
        raise ValueError(f"fanin {fanin} must be in 1..in_width ({in_width})")
    rows = [_neuron_subset(seed, layer_index, n, in_width, fanin) for n in range(out_width)]
    indices = np.array(rows, dtype=np.int64).reshape(out_width, fanin)
    return SparsityMask(indices=indices, in_width=in_width)


def generate_masks(spec: NetworkSpec) -> list[SparsityMask]:
    return [generate_mask(spec.seed, k, l.in_width, l.out_width, l.fanin) for k, l in enumerate(spec.layers)]


def lut_cost(X: int, Y: int) -> int:
    """Number of 6:1 LUTs for an X:Y truth table, ``(Y/3) * (2**(X-4) - (-1)**X)``.

    Tables with X <= 4 cost one LUT per output bit. Integer arithmetic only.
    """
    if X < 1 or Y < 1:
        raise ValueError(f"X and Y must be >= 1, got X={X}, Y={Y}")
    if X <= 4:
        return Y
    num = Y * ((1 << (X - 4)) - (1 if X % 2 == 0 else -1))
    cost = num // 3
    if cost.bit_length() > MAX_COST_BITS:
        raise CostOverflowError(f"LUTCost({X}, {Y}) exceeds device scale")
    return cost


def layer_lut_cost(layer: LayerSpec) -> int:
    return layer.out_width * lut_cost(layer.fanin_bits, layer.out_bits)


def model_lut_cost(spec: NetworkSpec) -> int:
    total = sum(layer_lut_cost(l) for l in spec.layers)
    if total.bit_length() > MAX_COST_BITS:
        raise CostOverflowError("model LUT cost exceeds device scale")
    return total


def parameter_count(spec: NetworkSpec) -> int:
    """Trainable reals: masked weights, BN gain/bias per neuron, one scale per layer."""
    return sum(l.out_width * l.fanin + 2 * l.out_width + 1 for l in spec.layers)


def validate_spec(spec: NetworkSpec, fanin_cap: int = DEFAULT_FANIN_CAP) -> list[str]:
    problems = []
    if spec.input_features < 1:
        problems.append("input_features must be >= 1")
    if spec.input_bits < 1:
        problems.append("input_bits must be >= 1")
    if not spec.layers:
        problems.append("network has no layers")
        return problems
    prev_width, prev_bits = spec.input_features, spec.input_bits
    for k, l in enumerate(spec.layers):
        where = f"layers[{k}]"
        if l.in_width != prev_width:
            problems.append(f"{where}: in_width {l.in_width} does not match previous width {prev_width}")
        if l.in_bits != prev_bits:
            problems.append(f"{where}: in_bits {l.in_bits} does not match previous bitwidth {prev_bits}")
        if l.out_width < 1:
            problems.append(f"{where}: out_width must be >= 1")
        if not 1 <= l.fanin <= max(l.in_width, 1):
            problems.append(f"{where}: fanin {l.fanin} must be in 1..{l.in_width}")
        if not 1 <= l.out_bits <= 8 or not 1 <= l.in_bits <= 8:
            problems.append(f"{where}: bitwidths must be in 1..8")
        if l.fanin_bits > fanin_cap:
            problems.append(
                f"{where}: fan-in X = {l.fanin} x {l.in_bits} = {l.fanin_bits} bits exceeds cap {fanin_cap}"
            )
        prev_width, prev_bits = l.out_width, l.out_bits
    last = spec.layers[-1].out_width
    if last != spec.num_classes and not spec.binary_output:
        problems.append(f"output layer width {last} does not match num_classes {spec.num_classes}")
    return problems
