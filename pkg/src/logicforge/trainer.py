"""Sparse, activation-quantized MLP training with hand-written backprop.

Every neuron is ``weighted sum over its masked inputs -> batch norm ->
quantized activation``. Weights are stored compactly as (out_width, fanin);
there is no dense weight matrix anywhere.

The eval-mode neuron body (:func:`preactivation` and :func:`bn_eval`) is also
the function the truth-table enumerator calls, so converting a frozen model to
tables reproduces eval forward bit for bit. Both helpers use a fixed
elementwise operation order independent of batch shape.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import TextIO

import numpy as np

from .data import Dataset, DatasetSplits, input_quantizer, quantize_inputs
from .quantizer import QuantizerSpec, dequantize_array, quantize_array, ste_backward, surrogate
from .topology import NetworkSpec, SparsityMask, generate_masks, validate_spec

log = logging.getLogger(__name__)

SCALE_FLOOR_INIT = 1e-3
SCALE_FLOOR = 1e-6
METRICS_HEADER = "epoch,lr,train_loss,train_acc,val_acc"


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class BatchNormParams:
    gain: np.ndarray
    bias: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1

    @classmethod
    def identity(cls, n: int, eps: float = 1e-5) -> "BatchNormParams":
        return cls(np.ones(n), np.zeros(n), np.zeros(n), np.ones(n), eps)


@dataclass
class DenseLayerParams:
    weights: np.ndarray  # (out_width, fanin)
    bn: BatchNormParams
    act_quant: QuantizerSpec


@dataclass
class TrainedModel:
    spec: NetworkSpec
    masks: list[SparsityMask]
    layers: list[DenseLayerParams]
    input_ranges: np.ndarray  # (input_features, 2) min/max used to normalize raw features
    frozen: bool = False

    @property
    def input_quant(self) -> QuantizerSpec:
        return input_quantizer(self.spec.input_bits)

    def input_quantizer_for(self, layer: int) -> QuantizerSpec:
        """Quantizer that decodes the codes feeding ``layer``."""
        return self.input_quant if layer == 0 else self.layers[layer - 1].act_quant


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 1024
    lr: float = 0.1
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    lr_decay: float = 0.1
    lr_step: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.lr_step < 1:
            raise ValueError("lr_step must be >= 1")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.lr_step)


def preactivation(inputs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Masked dot product. ``inputs`` is (..., out, fanin), ``weights`` (out, fanin)."""
    acc = inputs[..., 0] * weights[:, 0]
    for j in range(1, weights.shape[1]):
        acc = acc + inputs[..., j] * weights[:, j]
    return acc


def bn_eval(pre: np.ndarray, gain, bias, mean, var, eps: float) -> np.ndarray:
    return gain * (pre - mean) / np.sqrt(var + eps) + bias


def init_model(spec: NetworkSpec, seed: int = 0, input_ranges: np.ndarray | None = None) -> TrainedModel:
    """Fresh, unfrozen model: weights ~ U(+-sqrt(1/fanin)), identity BN, scale 2/2^beta."""
    problems = validate_spec(spec, fanin_cap=10**9)
    if problems:
        raise ValueError("; ".join(problems))
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), 0x5EED]))
    layers = []
    for l in spec.layers:
        bound = math.sqrt(1.0 / l.fanin)
        w = rng.uniform(-bound, bound, size=(l.out_width, l.fanin))
        q = QuantizerSpec(l.out_bits, 2.0 / (1 << l.out_bits), signed=True)
        layers.append(DenseLayerParams(w, BatchNormParams.identity(l.out_width), q))
    if input_ranges is None:
        input_ranges = np.tile([0.0, 1.0], (spec.input_features, 1))
    return TrainedModel(spec, generate_masks(spec), layers, np.asarray(input_ranges, dtype=np.float64))


def freeze(model: TrainedModel) -> TrainedModel:
    model.frozen = True
    return model


@dataclass
class LayerCache:
    gathered: np.ndarray  # (N, out, fanin) dequantized inputs of each neuron
    quant_in: np.ndarray  # (N, out) value fed to the activation quantizer
    xhat: np.ndarray | None = None
    inv_std: np.ndarray | None = None
    batch_mean: np.ndarray | None = None
    batch_var: np.ndarray | None = None


@dataclass
class ForwardCache:
    mode: str
    layers: list[LayerCache] = field(default_factory=list)
    codes: list[np.ndarray] = field(default_factory=list)  # output codes per layer

    @property
    def output_codes(self) -> np.ndarray:
        return self.codes[-1]


def forward(model: TrainedModel, input_codes: np.ndarray, mode: str = "eval"):
    """Run the network on (N, input_features) input codes.

    ``mode`` is ``"eval"`` (running BN stats), ``"train"`` (batch stats, running
    stats updated) or ``"surrogate"`` (batch stats, quantizers replaced by their
    clamp surrogate, no state change; used for gradient checking).
    Returns ``(scores, cache)``; scores are the dequantized outputs of the last layer.
    """
    if mode not in ("eval", "train", "surrogate"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode != "eval" and model.frozen:
        raise ValueError("cannot run a training forward on a frozen model")
    codes = np.asarray(input_codes, dtype=np.int64)
    if codes.ndim != 2 or codes.shape[1] != model.spec.input_features:
        raise ValueError(f"expected input codes of shape (N, {model.spec.input_features}), got {codes.shape}")
    if codes.size and (codes.min() < 0 or codes.max() >= 1 << model.spec.input_bits):
        raise ValueError("input code out of range for input bitwidth")
    cache = ForwardCache(mode)
    values = dequantize_array(codes, model.input_quant)
    for layer, mask in zip(model.layers, model.masks):
        values = _layer_forward(layer, mask, values, mode, cache)
    return values, cache


def _layer_forward(layer: DenseLayerParams, mask: SparsityMask, values, mode, cache: ForwardCache):
    gathered = values[:, mask.indices]
    pre = preactivation(gathered, layer.weights)
    bn = layer.bn
    if mode == "eval":
        y = bn_eval(pre, bn.gain, bn.bias, bn.running_mean, bn.running_var, bn.eps)
        lc = LayerCache(gathered, y)
    else:
        n = pre.shape[0]
        mu = pre.mean(axis=0)
        var = pre.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + bn.eps)
        xhat = (pre - mu) * inv_std
        y = bn.gain * xhat + bn.bias
        if mode == "train":
            m = bn.momentum
            unbiased = var * (n / (n - 1)) if n > 1 else var
            bn.running_mean = (1 - m) * bn.running_mean + m * mu
            bn.running_var = (1 - m) * bn.running_var + m * unbiased
        lc = LayerCache(gathered, y, xhat, inv_std, mu, var)
    cache.layers.append(lc)
    if mode == "surrogate":
        cache.codes.append(None)
        return surrogate(y, layer.act_quant)
    out_codes = quantize_array(y, layer.act_quant)
    cache.codes.append(out_codes)
    return dequantize_array(out_codes, layer.act_quant)


def eval_neuron(model: TrainedModel, layer: int, neuron: int, input_values: np.ndarray) -> np.ndarray:
    """Eval-mode output codes of one neuron for (M, fanin) dequantized inputs in mask order."""
    p = model.layers[layer]
    sl = slice(neuron, neuron + 1)
    pre = preactivation(np.asarray(input_values, dtype=np.float64)[:, None, :], p.weights[sl])
    bn = p.bn
    y = bn_eval(pre, bn.gain[sl], bn.bias[sl], bn.running_mean[sl], bn.running_var[sl], bn.eps)
    return quantize_array(y[:, 0], p.act_quant)


def loss_and_grad(model: TrainedModel, scores: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy on dequantized scores (sigmoid BCE for a binary head)."""
    labels = np.asarray(labels, dtype=np.int64)
    n = scores.shape[0]
    if model.spec.binary_output:
        s = scores[:, 0]
        t = labels.astype(np.float64)
        loss = np.mean(np.logaddexp(0.0, s) - t * s)
        p = 0.5 * (1.0 + np.tanh(0.5 * s))
        return float(loss), ((p - t) / n)[:, None]
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -np.mean(logp[np.arange(n), labels])
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def backward(model: TrainedModel, cache: ForwardCache, dscores: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients for weights, BN gain/bias and activation scales.

    Keys are ``w{k}``, ``gain{k}``, ``bias{k}``, ``scale{k}`` per layer ``k``.
    """
    if cache.mode == "eval":
        raise ValueError("backward needs caches from a train or surrogate forward")
    grads = {}
    upstream = np.asarray(dscores, dtype=np.float64)
    for k in range(len(model.layers) - 1, -1, -1):
        p, lc, mask = model.layers[k], cache.layers[k], model.masks[k]
        dy, dscale = ste_backward(upstream, lc.quant_in, p.act_quant)
        n = dy.shape[0]
        grads[f"scale{k}"] = np.array(dscale)
        grads[f"gain{k}"] = (dy * lc.xhat).sum(axis=0)
        grads[f"bias{k}"] = dy.sum(axis=0)
        dxhat = dy * p.bn.gain
        dpre = lc.inv_std / n * (n * dxhat - dxhat.sum(axis=0) - lc.xhat * (dxhat * lc.xhat).sum(axis=0))
        grads[f"w{k}"] = (dpre[:, :, None] * lc.gathered).sum(axis=0)
        if k > 0:
            dvals = np.zeros((n, mask.in_width))
            for j in range(mask.fanin):
                np.add.at(dvals, (slice(None), mask.indices[:, j]), dpre * p.weights[:, j])
            upstream = dvals
    return grads


def parameters(model: TrainedModel) -> dict[str, np.ndarray]:
    """Live views of the trainable arrays (scales excluded; they live in QuantizerSpec)."""
    out = {}
    for k, p in enumerate(model.layers):
        out[f"w{k}"] = p.weights
        out[f"gain{k}"] = p.bn.gain
        out[f"bias{k}"] = p.bn.bias
    return out


class Adam:
    def __init__(self, params: dict[str, np.ndarray], betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def predict(model: TrainedModel, scores: np.ndarray) -> np.ndarray:
    """Class decisions; ties go to the lowest class index."""
    if model.spec.binary_output:
        return (scores[:, 0] > 0).astype(np.int64)
    return np.argmax(scores, axis=1)


def evaluate(model: TrainedModel, ds: Dataset) -> float:
    if not model.frozen:
        raise ValueError("evaluate requires a frozen model")
    return _accuracy(model, ds)


def _accuracy(model: TrainedModel, ds: Dataset) -> float:
    if len(ds) == 0:
        return float("nan")
    ds = replace(ds, feature_ranges=model.input_ranges)
    scores, _ = forward(model, quantize_inputs(ds, model.spec.input_bits), "eval")
    return float(np.mean(predict(model, scores) == ds.labels))


def _init_scales(model: TrainedModel, codes: np.ndarray) -> None:
    # scale = 2 * std / 2^beta of each layer's quantizer input on the first batch.
    values = dequantize_array(codes, model.input_quant)
    for layer, mask in zip(model.layers, model.masks):
        pre = preactivation(values[:, mask.indices], layer.weights)
        bn = layer.bn
        y = bn.gain * (pre - pre.mean(axis=0)) / np.sqrt(pre.var(axis=0) + bn.eps) + bn.bias
        scale = max(2.0 * float(np.std(y)) / (1 << layer.act_quant.bitwidth), SCALE_FLOOR_INIT)
        layer.act_quant = replace(layer.act_quant, scale=scale)
        values = dequantize_array(quantize_array(y, layer.act_quant), layer.act_quant)


def train(
    spec: NetworkSpec,
    data: DatasetSplits | Dataset,
    cfg: TrainConfig,
    metrics: TextIO | None = None,
    fanin_cap: int = 15,
) -> TrainedModel:
    problems = validate_spec(spec, fanin_cap)
    if problems:
        raise ValueError("invalid network spec: " + "; ".join(problems))
    if isinstance(data, Dataset):
        data = DatasetSplits(data, data.subset(slice(0, 0)), data.subset(slice(0, 0)))
    train_ds = data.train
    if train_ds.feature_ranges is None:
        from .data import compute_ranges

        train_ds = replace(train_ds, feature_ranges=compute_ranges(train_ds.features))
    if train_ds.num_features != spec.input_features:
        raise ValueError(f"dataset has {train_ds.num_features} features, spec expects {spec.input_features}")
    if len(train_ds) == 0:
        raise ValueError("training split is empty")
    if train_ds.labels.max() >= spec.num_classes:
        raise ValueError("label out of range for num_classes")

    model = init_model(spec, cfg.seed, train_ds.feature_ranges)
    codes = quantize_inputs(train_ds, spec.input_bits)
    labels = train_ds.labels
    n = len(train_ds)
    rng = np.random.default_rng(cfg.seed)
    params = parameters(model)
    opt = Adam(params, cfg.betas, cfg.adam_eps)
    scale_opt = Adam({f"scale{k}": np.array(p.act_quant.scale) for k, p in enumerate(model.layers)}, cfg.betas, cfg.adam_eps)
    val_ds = data.val
    if metrics is not None:
        metrics.write(METRICS_HEADER + "\n")

    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = rng.permutation(n)
        if epoch == 0:
            _init_scales(model, codes[perm[: cfg.batch_size]])
            for k, p in enumerate(model.layers):
                scale_opt.params[f"scale{k}"][...] = p.act_quant.scale
        loss_sum, correct = 0.0, 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            if idx.size < 2 and n >= 2:
                continue  # batch statistics need at least two samples
            scores, cache = forward(model, codes[idx], "train")
            loss, dscores = loss_and_grad(model, scores, labels[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}, batch {b}")
            grads = backward(model, cache, dscores)
            opt.step(grads, lr)
            scale_opt.step(grads, lr)
            for k, p in enumerate(model.layers):
                s = scale_opt.params[f"scale{k}"]
                s[...] = max(float(s), SCALE_FLOOR)
                p.act_quant = replace(p.act_quant, scale=float(s))
            loss_sum += loss * idx.size
            correct += int(np.sum(predict(model, scores) == labels[idx]))
        train_loss = loss_sum / n
        train_acc = correct / n
        val_acc = _accuracy(model, val_ds) if len(val_ds) else float("nan")
        if metrics is not None:
            metrics.write(f"{epoch},{lr!r},{train_loss!r},{train_acc!r},{val_acc!r}\n")
        log.debug("epoch %d lr %g loss %.4f train %.4f val %.4f", epoch, lr, train_loss, train_acc, val_acc)
    return freeze(model)
