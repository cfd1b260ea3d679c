"""The segmentation CNN: a stride-2 conv encoder, a nearest-upsample
decoder, and a 1x1 classifier head, assembled from the ops primitives.

Owns the training loop, prediction, parameter counting, and the binary
checkpoint format. Training is deterministic given a seed: the shuffle
order, weight init, and reduction order are all fixed.
"""

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import (
    CheckpointError,
    DataError,
    DimensionError,
    GeometryError,
    ParameterError,
    TrainingDivergedError,
)
from .metrics import confusion_counts, report_from_counts
from .optim import Adam, AdamConfig, SGD, SgdConfig
from .rng import XorShift64Star

CHECKPOINT_MAGIC = b"SEGM"
CHECKPOINT_VERSION = 1
_NORMALIZATION_IDS = {"scale_255": 0}
_NORMALIZATION_NAMES = {v: k for k, v in _NORMALIZATION_IDS.items()}


@dataclass
class NetworkConfig:
    in_channels: int = 3
    num_classes: int = 12
    stage_widths: tuple = (16, 32, 64)
    kernel: int = 3
    leaky_alpha: float = 0.01
    normalization: str = "scale_255"

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ParameterError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.stage_widths:
            raise ParameterError("stage_widths must be nonempty")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ParameterError(f"kernel must be odd and >= 1, got {self.kernel}")
        if not 0.0 < self.leaky_alpha < 1.0:
            raise ParameterError(f"leaky_alpha must lie in (0, 1), got {self.leaky_alpha}")
        if self.normalization not in _NORMALIZATION_IDS:
            raise ParameterError(f"unknown normalization {self.normalization!r}")


@dataclass
class ConvSpec:
    weight: np.ndarray  # (Cout, Cin, k, k)
    bias: np.ndarray  # (Cout,)
    stride: int = 1
    padding: int = 0


@dataclass
class ActSpec:
    alpha: float = 0.01


@dataclass
class UpsampleSpec:
    factor: int = 2


class Network:
    def __init__(self, config: NetworkConfig, layers: list):
        self.config = config
        self.layers = layers

    @property
    def spatial_multiple(self) -> int:
        """Input H and W must be multiples of this (2 ** number of stages)."""
        return 2 ** len(self.config.stage_widths)

    def parameters(self) -> list:
        """Weight and bias arrays of every conv, in layer order."""
        params = []
        for layer in self.layers:
            if isinstance(layer, ConvSpec):
                params.append(layer.weight)
                params.append(layer.bias)
        return params

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def _check_input(self, x):
        if x.ndim != 4:
            raise DimensionError(f"batch must be (N, C, H, W), got shape {x.shape}")
        if x.shape[1] != self.config.in_channels:
            raise DimensionError(
                f"batch has {x.shape[1]} channels, network expects "
                f"{self.config.in_channels}"
            )
        m = self.spatial_multiple
        if x.shape[2] % m or x.shape[3] % m:
            raise GeometryError(
                f"input spatial dims {x.shape[2]}x{x.shape[3]} must be "
                f"multiples of {m}"
            )

    def _apply(self, layer, x):
        if isinstance(layer, ConvSpec):
            return ops.conv2d_forward(x, layer.weight, layer.bias,
                                      layer.stride, layer.padding)
        if isinstance(layer, ActSpec):
            return ops.leaky_relu(x, layer.alpha)
        return ops.upsample_nearest(x, layer.factor)

    def forward(self, x) -> np.ndarray:
        """Logits of shape (N, num_classes, H, W) for an (N, C, H, W) batch."""
        x = np.asarray(x)
        if not np.issubdtype(x.dtype, np.floating):
            x = x.astype(np.float32)
        self._check_input(x)
        for layer in self.layers:
            x = self._apply(layer, x)
        return x

    def forward_cached(self, x):
        """Like forward, but also returns every layer's input for backward."""
        x = np.asarray(x)
        if not np.issubdtype(x.dtype, np.floating):
            x = x.astype(np.float32)
        self._check_input(x)
        caches = []
        for layer in self.layers:
            caches.append(x)
            x = self._apply(layer, x)
        return x, caches

    def backward(self, grad_logits, caches) -> list:
        """Gradients for every parameter, parallel to parameters()."""
        grads = {}
        g = grad_logits
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            xin = caches[idx]
            if isinstance(layer, ConvSpec):
                g, gw, gb = ops.conv2d_backward(xin, layer.weight, g,
                                                layer.stride, layer.padding)
                grads[idx] = (gw, gb)
            elif isinstance(layer, ActSpec):
                g = ops.leaky_relu_backward(xin, g, layer.alpha)
            else:
                g = ops.upsample_nearest_backward(g, layer.factor)
        flat = []
        for idx, layer in enumerate(self.layers):
            if isinstance(layer, ConvSpec):
                flat.extend(grads[idx])
        return flat


def _he_conv(rng, cout, cin, kernel, stride, padding):
    fan_in = cin * kernel * kernel
    std = np.sqrt(2.0 / fan_in)
    weight = (rng.normals(cout * fan_in) * std).astype(np.float32)
    return ConvSpec(weight=weight.reshape(cout, cin, kernel, kernel),
                    bias=np.zeros(cout, dtype=np.float32),
                    stride=stride, padding=padding)


def build_network(config: NetworkConfig | None = None, seed: int = 42) -> Network:
    """He-initialized encoder/decoder network, deterministic per seed.

    Encoder: one stride-2 conv + leaky ReLU per stage width. Decoder: one
    2x nearest upsample + conv + leaky ReLU per stage, mirroring the
    encoder channel counts. Head: 1x1 conv to num_classes.
    """
    config = config or NetworkConfig()
    config.validate()
    rng = XorShift64Star(seed)
    k = config.kernel
    pad = k // 2
    layers = []
    cin = config.in_channels
    for width in config.stage_widths:
        layers.append(_he_conv(rng, width, cin, k, stride=2, padding=pad))
        layers.append(ActSpec(config.leaky_alpha))
        cin = width
    decoder_widths = list(config.stage_widths[::-1][1:]) + [config.stage_widths[0]]
    for width in decoder_widths:
        layers.append(UpsampleSpec(2))
        layers.append(_he_conv(rng, width, cin, k, stride=1, padding=pad))
        layers.append(ActSpec(config.leaky_alpha))
        cin = width
    layers.append(_he_conv(rng, config.num_classes, cin, 1, stride=1, padding=0))
    return Network(config, layers)


def param_count(net: Network) -> int:
    """Exact number of trainable scalars in the network."""
    return net.param_count()


def param_millions(net: Network) -> float:
    """Parameter count in millions, rounded to 2 decimals."""
    return round(net.param_count() / 1e6, 2)


def _normalize(images, normalization):
    if normalization not in _NORMALIZATION_IDS:
        raise ParameterError(f"unknown normalization {normalization!r}")
    batch = np.stack([np.asarray(img).transpose(2, 0, 1) for img in images])
    return batch.astype(np.float32) / 255.0


def predict(net: Network, image: np.ndarray, normalization: str | None = None) -> np.ndarray:
    """Per-pixel argmax class map for one (H, W, 3) image.

    Ties go to the lowest class index (argmax keeps the first maximum).
    """
    norm = normalization or net.config.normalization
    x = _normalize([image], norm)
    logits = net.forward(x)
    return logits[0].argmax(axis=0).astype(np.uint8)


def evaluate_samples(net: Network, samples):
    """(pixel accuracy, IouReport) of predictions against a sample list."""
    total = 0
    correct = 0
    counts = None
    for image, labels in samples:
        pred = predict(net, image)
        total += labels.size
        correct += int((pred == labels).sum())
        c = confusion_counts(pred, labels, net.config.num_classes)
        counts = c if counts is None else counts + c
    if counts is None:
        raise DataError("cannot evaluate an empty sample list")
    return correct / total, report_from_counts(counts)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_miou: float | None
    seconds: float


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)

    @property
    def final_loss(self) -> float | None:
        return self.epochs[-1].train_loss if self.epochs else None

    @property
    def final_val_miou(self) -> float | None:
        return self.epochs[-1].val_miou if self.epochs else None


def _make_optimizer(name, params, learning_rate, clip_norm):
    if name == "adam":
        cfg = AdamConfig(clip_norm=clip_norm)
        if learning_rate is not None:
            cfg.learning_rate = learning_rate
        return Adam(params, cfg)
    if name == "sgd":
        cfg = SgdConfig(clip_norm=clip_norm)
        if learning_rate is not None:
            cfg.learning_rate = learning_rate
        return SGD(params, cfg)
    raise ParameterError(f"unknown optimizer {name!r}, expected 'sgd' or 'adam'")


def train(net: Network, train_samples, val_samples=None, *, optimizer: str = "adam",
          epochs: int = 100, batch_size: int = 2, learning_rate: float | None = None,
          clip_norm: float | None = None, seed: int = 42) -> TrainReport:
    """Mini-batch training with per-epoch validation MIoU.

    train_samples / val_samples are lists of (image, label_map) pairs of
    uniform size. The last partial batch is used, not dropped; the loss is
    a per-pixel mean either way. Raises TrainingDivergedError on a
    non-finite loss. Deterministic given the seed.
    """
    if not train_samples:
        raise DataError("training set is empty")
    if epochs < 0:
        raise ParameterError(f"epochs must be >= 0, got {epochs}")
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    shapes = {img.shape for img, _ in train_samples}
    if len(shapes) != 1:
        raise DataError(f"training images must share one size, got {sorted(shapes)}")

    x_all = _normalize([img for img, _ in train_samples], net.config.normalization)
    y_all = np.stack([np.asarray(lab) for _, lab in train_samples]).astype(np.int64)

    opt = _make_optimizer(optimizer, net.parameters(), learning_rate, clip_norm)
    rng = XorShift64Star(seed)
    report = TrainReport()
    n = len(train_samples)
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        order = list(range(n))
        rng.shuffle(order)
        loss_sum = 0.0  # float64 accumulation
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            xb = x_all[batch]
            yb = y_all[batch]
            logits, caches = net.forward_cached(xb)
            if not np.isfinite(logits).all():
                raise TrainingDivergedError(epoch, start // batch_size, float("nan"))
            loss, grad = ops.softmax_cross_entropy(logits, yb, class_axis=1)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, start // batch_size, loss)
            grads = net.backward(grad, caches)
            opt.step(grads)
            loss_sum += loss * len(batch)
        val_miou = None
        if val_samples:
            _, val_report = evaluate_samples(net, val_samples)
            val_miou = val_report.mean_iou
        report.epochs.append(EpochStats(epoch=epoch, train_loss=loss_sum / n,
                                        val_miou=val_miou,
                                        seconds=time.perf_counter() - t0))
    return report


def save_train_report(report: TrainReport, path) -> None:
    """CSV with one row per epoch: epoch,train_loss,val_miou,seconds."""
    lines = ["epoch,train_loss,val_miou,seconds"]
    for e in report.epochs:
        miou = f"{e.val_miou:.4f}" if e.val_miou is not None else ""
        lines.append(f"{e.epoch},{e.train_loss:.6f},{miou},{e.seconds:.3f}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def save_checkpoint(net: Network, path) -> None:
    """Write the little-endian binary checkpoint (format documented in README)."""
    cfg = net.config
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<I", cfg.num_classes)
    blob += struct.pack("<I", len(cfg.stage_widths))
    blob += struct.pack(f"<{len(cfg.stage_widths)}I", *cfg.stage_widths)
    blob += struct.pack("<f", cfg.leaky_alpha)
    blob += struct.pack("<I", _NORMALIZATION_IDS[cfg.normalization])
    for p in net.parameters():
        blob += struct.pack("<I", p.ndim)
        blob += struct.pack(f"<{p.ndim}I", *p.shape)
        blob += np.ascontiguousarray(p, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(blob))


class _Cursor:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"{self.path}: truncated checkpoint at byte offset {self.pos} "
                f"(needed {n} more bytes)"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f32(self) -> float:
        return struct.unpack("<f", self.take(4))[0]


def load_checkpoint(path) -> Network:
    """Rebuild a network from its checkpoint, bit-exact parameters included."""
    with open(path, "rb") as f:
        data = f.read()
    cur = _Cursor(data, str(path))
    magic = cur.take(4)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(
            f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}"
        )
    version = cur.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version}, "
            f"expected {CHECKPOINT_VERSION}"
        )
    num_classes = cur.u32()
    n_stages = cur.u32()
    widths = tuple(cur.u32() for _ in range(n_stages))
    alpha = cur.f32()
    norm_id = cur.u32()
    if norm_id not in _NORMALIZATION_NAMES:
        raise CheckpointError(f"{path}: unknown normalization id {norm_id}")
    # alpha is kept exactly as stored (f32) so save -> load -> save is byte-identical
    config = NetworkConfig(num_classes=num_classes, stage_widths=widths,
                           leaky_alpha=alpha,
                           normalization=_NORMALIZATION_NAMES[norm_id])
    net = build_network(config, seed=0)
    for p in net.parameters():
        rank = cur.u32()
        if rank != p.ndim:
            raise CheckpointError(
                f"{path}: parameter rank {rank} does not match expected {p.ndim}"
            )
        dims = tuple(cur.u32() for _ in range(rank))
        if dims != p.shape:
            raise CheckpointError(
                f"{path}: parameter shape {dims} does not match expected {p.shape}"
            )
        payload = cur.take(4 * p.size)
        p[...] = np.frombuffer(payload, dtype="<f4").reshape(p.shape)
    if cur.pos != len(data):
        raise CheckpointError(
            f"{path}: {len(data) - cur.pos} trailing bytes after parameters"
        )
    return net
