"""Declarative network specs, forward/backward passes and the concrete
architectures used by the experiments.

A network is a flat float64 weight vector plus a spec describing the layer
stack. The forward pass caches per-layer values; the backward pass consumes
that cache and returns the gradient of the per-pixel quadratic loss as one
flat vector aligned with the weights.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ops
from .errors import DimensionError, ParameterError, StaleCacheError

CONV = "conv"
MAXPOOL = "maxpool"
UPSAMPLE = "upsample"
TANH = "tanh"
SIGMOID = "sigmoid"

# Keeps sigmoid scores strictly inside (0, 1) even when weights saturate.
_SIGMOID_EPS = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    kernel_h: int = 0
    kernel_w: int = 0
    factor: int = 0


def conv(out_channels: int, kernel_h: int, kernel_w: int | None = None) -> LayerSpec:
    if kernel_w is None:
        kernel_w = kernel_h
    if out_channels < 1 or kernel_h < 1 or kernel_w < 1:
        raise ParameterError(
            f"conv layer needs out_channels and kernel dims >= 1, got "
            f"{out_channels}, {kernel_h}x{kernel_w}"
        )
    return LayerSpec(CONV, out_channels, kernel_h, kernel_w)


def maxpool() -> LayerSpec:
    return LayerSpec(MAXPOOL)


def upsample(factor: int) -> LayerSpec:
    if factor < 1:
        raise ParameterError(f"upsampling factor must be >= 1, got {factor}")
    return LayerSpec(UPSAMPLE, factor=factor)


def tanh() -> LayerSpec:
    return LayerSpec(TANH)


def sigmoid() -> LayerSpec:
    return LayerSpec(SIGMOID)


@dataclass(frozen=True)
class NetworkSpec:
    input_channels: int
    layers: tuple[LayerSpec, ...]
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        convs = [s for s in self.layers if s.kind == CONV]
        if convs and convs[-1].out_channels != self.num_classes:
            raise ParameterError(
                f"final conv layer has {convs[-1].out_channels} output channels, "
                f"expected num_classes={self.num_classes}"
            )


def channel_flow(spec: NetworkSpec) -> list[int]:
    """Channel count entering each layer, plus the final output count."""
    flow = [spec.input_channels]
    for layer in spec.layers:
        flow.append(layer.out_channels if layer.kind == CONV else flow[-1])
    return flow


def count_parameters(spec: NetworkSpec) -> int:
    total = 0
    in_ch = spec.input_channels
    for layer in spec.layers:
        if layer.kind == CONV:
            total += layer.out_channels * (in_ch * layer.kernel_h * layer.kernel_w + 1)
            in_ch = layer.out_channels
    return total


def output_shape(spec: NetworkSpec, height: int, width: int) -> tuple[int, int]:
    """Spatial output size for a given input size.

    Raises DimensionError naming the layer where the spatial extent would
    collapse below 1 (or break pooling parity).
    """
    h, w = height, width
    for i, layer in enumerate(spec.layers):
        if layer.kind == CONV:
            h, w = h - layer.kernel_h + 1, w - layer.kernel_w + 1
            if h < 1 or w < 1:
                raise DimensionError(
                    f"layer {i} (conv {layer.kernel_h}x{layer.kernel_w}) collapses "
                    f"spatial dims to {h}x{w}"
                )
        elif layer.kind == MAXPOOL:
            if h % 2 or w % 2 or h < 2 or w < 2:
                raise DimensionError(f"layer {i} (maxpool) needs even dims >= 2, got {h}x{w}")
            h, w = h // 2, w // 2
        elif layer.kind == UPSAMPLE:
            h, w = h * layer.factor, w * layer.factor
    return h, w


def min_input_size(spec: NetworkSpec) -> int:
    """Smallest square input edge that yields at least a 1x1 output.

    For purely convolutional stacks this is the receptive field of one output
    pixel, i.e. the training patch size.
    """
    size = 1
    for layer in reversed(spec.layers):
        if layer.kind == CONV:
            size += layer.kernel_h - 1
        elif layer.kind == MAXPOOL:
            size *= 2
        elif layer.kind == UPSAMPLE:
            size = -(-size // layer.factor)
    return size


class Network:
    """A spec plus its flat weight vector.

    The weight array is exposed read-only; assigning a new vector through the
    ``weights`` property bumps the generation counter that forward caches are
    checked against. Layout per conv layer: kernels row-major, then biases.
    """

    def __init__(self, spec: NetworkSpec, weights=None):
        self.spec = spec
        self.num_parameters = count_parameters(spec)
        self._offsets = self._build_offsets(spec)
        if weights is None:
            weights = np.zeros(self.num_parameters)
        self.generation = 0
        self._set(weights)

    @staticmethod
    def _build_offsets(spec):
        offsets = {}
        pos = 0
        in_ch = spec.input_channels
        for i, layer in enumerate(spec.layers):
            if layer.kind != CONV:
                continue
            kshape = (layer.out_channels, in_ch, layer.kernel_h, layer.kernel_w)
            ksize = int(np.prod(kshape))
            offsets[i] = (pos, pos + ksize, pos + ksize + layer.out_channels, kshape)
            pos += ksize + layer.out_channels
            in_ch = layer.out_channels
        return offsets

    def _set(self, weights):
        arr = ops.as_tensor(weights).ravel().copy()
        if arr.size != self.num_parameters:
            raise DimensionError(
                f"weight vector has {arr.size} entries, spec needs {self.num_parameters}"
            )
        arr.flags.writeable = False
        self._weights = arr

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @weights.setter
    def weights(self, new_weights):
        self._set(new_weights)
        self.generation += 1

    def layer_params(self, index: int):
        """(kernels, bias) views for the conv layer at ``index``."""
        k0, k1, b1, kshape = self._offsets[index]
        return self._weights[k0:k1].reshape(kshape), self._weights[k1:b1]


def init_network(spec: NetworkSpec, rng: np.random.Generator) -> Network:
    """Kernels uniform in [-r, r] with r = 1/sqrt(fan_in); biases zero."""
    net = Network(spec)
    w = np.zeros(net.num_parameters)
    in_ch = spec.input_channels
    for i, layer in enumerate(spec.layers):
        if layer.kind != CONV:
            continue
        k0, k1, _, kshape = net._offsets[i]
        r = 1.0 / np.sqrt(in_ch * layer.kernel_h * layer.kernel_w)
        w[k0:k1] = rng.uniform(-r, r, size=k1 - k0)
        in_ch = layer.out_channels
    net.weights = w
    net.generation = 0
    return net


@dataclass
class ForwardCache:
    """Per-layer values kept from one forward pass for the backward pass."""

    generation: int
    records: list = field(default_factory=list)
    scores: np.ndarray | None = None


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, _SIGMOID_EPS, 1.0 - _SIGMOID_EPS)


def forward(net: Network, x) -> tuple[np.ndarray, ForwardCache]:
    """Run the stack on x[C,H,W]; returns (scores, cache)."""
    x = ops.as_tensor(x)
    spec = net.spec
    if x.ndim != 3 or x.shape[0] != spec.input_channels:
        raise DimensionError(
            f"input shape {x.shape} does not match {spec.input_channels} input channels"
        )
    output_shape(spec, x.shape[1], x.shape[2])
    cache = ForwardCache(generation=net.generation)
    cur = x
    for i, layer in enumerate(spec.layers):
        if layer.kind == CONV:
            kernels, bias = net.layer_params(i)
            cache.records.append((CONV, cur))
            cur = ops.conv2d_forward(cur, kernels, bias)
        elif layer.kind == MAXPOOL:
            cur, mask = ops.maxpool2x2(cur)
            cache.records.append((MAXPOOL, mask))
        elif layer.kind == UPSAMPLE:
            cache.records.append((UPSAMPLE, layer.factor))
            cur = ops.upsample_nn(cur, layer.factor)
        elif layer.kind == TANH:
            cur = np.tanh(cur)
            cache.records.append((TANH, cur))
        elif layer.kind == SIGMOID:
            cur = _stable_sigmoid(cur)
            cache.records.append((SIGMOID, cur))
        else:
            raise ParameterError(f"unknown layer kind {layer.kind!r}")
    cache.scores = cur
    return cur, cache


def quadratic_loss(scores, target) -> float:
    """Half squared error summed over channels, averaged over pixels."""
    scores, target = ops.as_tensor(scores), ops.as_tensor(target)
    if scores.shape != target.shape:
        raise DimensionError(f"scores shape {scores.shape} != target shape {target.shape}")
    pixels = scores.shape[1] * scores.shape[2]
    return float(0.5 * np.square(scores - target).sum() / pixels)


def backward(net: Network, cache: ForwardCache, target) -> np.ndarray:
    """Gradient of quadratic_loss(forward(net, x), target) w.r.t. the weights."""
    if cache.generation != net.generation:
        raise StaleCacheError(
            f"cache generation {cache.generation} != network generation {net.generation}"
        )
    target = ops.as_tensor(target)
    if cache.scores is None or cache.scores.shape != target.shape:
        raise DimensionError(
            f"target shape {target.shape} != scores shape "
            f"{None if cache.scores is None else cache.scores.shape}"
        )
    pixels = target.shape[1] * target.shape[2]
    delta = (cache.scores - target) / pixels
    grad = np.zeros(net.num_parameters)
    for i in range(len(net.spec.layers) - 1, -1, -1):
        kind, payload = cache.records[i]
        if kind == CONV:
            kernels, _ = net.layer_params(i)
            delta, gk, gb = ops.conv2d_backward(payload, kernels, delta)
            k0, k1, b1, _ = net._offsets[i]
            grad[k0:k1] = gk.ravel()
            grad[k1:b1] = gb
        elif kind == MAXPOOL:
            delta = ops.maxpool2x2_backward(payload, delta)
        elif kind == UPSAMPLE:
            delta = ops.upsample_nn_backward(delta, payload)
        elif kind == TANH:
            delta = delta * (1.0 - payload * payload)
        elif kind == SIGMOID:
            delta = delta * payload * (1.0 - payload)
    return grad


def build_toy_net() -> NetworkSpec:
    """Two filter masks over one input channel, then 1x1 output neurons: a
    template-matching net with 109 parameters for the 3-class toy task."""
    return NetworkSpec(
        input_channels=1,
        layers=(conv(2, 7, 7), tanh(), conv(3, 1, 1), sigmoid()),
        num_classes=3,
    )


# Fixed inner widths of the facade net; only k and l vary.
FACADE_CONV1_CHANNELS = 16
FACADE_CONV3_CHANNELS = 16
FACADE_CLASSES = 9

# With these widths the parameter count for l=0 is affine in k:
#   count(k) = FACADE_COUNT_BASE + FACADE_COUNT_SLOPE * k
FACADE_COUNT_BASE = 1241
FACADE_COUNT_SLOPE = 857


def build_facade_net(k: int, l: int = 0) -> NetworkSpec:
    """Three conv layers plus two 1x1-conv ("fully connected") layers for the
    9-class facade task.

    ``k`` scales the width: the second conv has k filters and the first FC
    layer 12*k channels, so the parameter count grows as 1241 + 857*k.
    ``l`` inserts that many extra 1x1 conv blocks (12*k channels each, 192 at
    k=16) after the first FC layer; each adds (12k)^2 + 12k parameters.
    """
    if k < 1:
        raise ParameterError(f"filter scale k must be >= 1, got {k}")
    if l < 0:
        raise ParameterError(f"layer repeat count l must be >= 0, got {l}")
    fc = 12 * k
    layers = [
        conv(FACADE_CONV1_CHANNELS, 5, 5),
        tanh(),
        conv(k, 5, 5),
        tanh(),
        conv(FACADE_CONV3_CHANNELS, 3, 3),
        tanh(),
        conv(fc, 1, 1),
        tanh(),
    ]
    for _ in range(l):
        layers += [conv(fc, 1, 1), tanh()]
    layers += [conv(FACADE_CLASSES, 1, 1), sigmoid()]
    return NetworkSpec(input_channels=3, layers=tuple(layers), num_classes=FACADE_CLASSES)


def spec_to_dict(spec: NetworkSpec) -> dict:
    layers = []
    for layer in spec.layers:
        entry = {"kind": layer.kind}
        if layer.kind == CONV:
            entry.update(
                out_channels=layer.out_channels,
                kernel_h=layer.kernel_h,
                kernel_w=layer.kernel_w,
            )
        elif layer.kind == UPSAMPLE:
            entry["factor"] = layer.factor
        layers.append(entry)
    return {
        "input_channels": spec.input_channels,
        "num_classes": spec.num_classes,
        "layers": layers,
    }


def spec_from_dict(data: dict) -> NetworkSpec:
    layers = []
    for entry in data["layers"]:
        kind = entry["kind"]
        if kind == CONV:
            layers.append(conv(entry["out_channels"], entry["kernel_h"], entry["kernel_w"]))
        elif kind == UPSAMPLE:
            layers.append(upsample(entry["factor"]))
        elif kind in (MAXPOOL, TANH, SIGMOID):
            layers.append(LayerSpec(kind))
        else:
            raise ParameterError(f"unknown layer kind {kind!r}")
    return NetworkSpec(data["input_channels"], tuple(layers), data["num_classes"])


def save_model(net: Network, path) -> None:
    """Write spec + weights as JSON. Floats use Python's shortest round-trip
    decimal repr, so loading recovers the exact bit pattern."""
    doc = {
        "format": "qpbench-model-v1",
        "spec": spec_to_dict(net.spec),
        "weights": net.weights.tolist(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> Network:
    with open(path, encoding="ascii") as fh:
        doc = json.load(fh)
    if doc.get("format") != "qpbench-model-v1":
        raise ParameterError(f"unrecognized model format {doc.get('format')!r}")
    spec = spec_from_dict(doc["spec"])
    return Network(spec, np.asarray(doc["weights"], dtype=np.float64))
