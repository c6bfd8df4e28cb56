"""Compile sparse, activation-quantized MLPs into pipelined truth-table netlists."""

from .netlist import Netlist, TruthTable, build_netlist, enumerate_neuron, insert_registers, prune_dead
from .quantizer import QuantCode, QuantizerSpec, dequantize, quantize, quantize_ste_backward
from .simulator import EquivalenceReport, check_equivalence, eval_netlist, pipeline_report
from .topology import LayerSpec, NetworkSpec, SparsityMask, build_spec, generate_mask, lut_cost, model_lut_cost, validate_spec
from .trainer import TrainConfig, TrainedModel, evaluate, forward, train
from .verilog import emit_verilog

__version__ = "0.1.0"
