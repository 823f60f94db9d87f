"""Network assembly: VGG-style conv blocks with interchangeable downsampling.

An architecture string like ``"2x32,2x64,2x128,2x256"`` lists blocks as
``<conv count>x<width>``.  Each block is a run of 3x3 stride-1 same-padded
convolutions (each followed by batch norm and ReLU) and ends in one
downsampling unit chosen from five kinds:

  subsample     keep the top-left element of every 2x2 block
  maxpool       2x2 max pooling
  avgpool       2x2 average pooling
  strided       2x2-kernel stride-2 convolution
  strided-relu  strided convolution followed by batch norm and ReLU

A global-average-pool plus linear head produces the logits.  Forward passes
can record an activation trace: the input batch, every conv unit output
(post batch-norm and ReLU) and every downsampling unit output, in order.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass

import numpy as np

from ..seeding import rng_from
from .layers import (
    AvgPool,
    BatchNorm,
    Conv2d,
    GlobalAvgPool,
    Linear,
    MaxPool,
    ReLU,
    ShapeError,
    Subsample,
)

ARCH_CIFAR = "2x32,2x64,2x128,2x256"
ARCH_IMAGENET = "2x64,2x128,3x256,3x512,3x512"
DOWNSAMPLE_KINDS = ("subsample", "maxpool", "avgpool", "strided", "strided-relu")

_CHECKPOINT_MAGIC = b"DFNW"
_CHECKPOINT_VERSION = 1


class ArchitectureError(ValueError):
    """Raised for malformed architecture strings or downsample kinds."""


def parse_architecture(arch: str) -> list[tuple[int, int]]:
    """Parses "2x32,2x64" into [(2, 32), (2, 64)]."""
    blocks = []
    for part in arch.split(","):
        fields = part.strip().lower().split("x")
        if len(fields) != 2:
            raise ArchitectureError(f"bad block {part!r} in architecture {arch!r}")
        try:
            count, width = int(fields[0]), int(fields[1])
        except ValueError:
            raise ArchitectureError(f"bad block {part!r} in architecture {arch!r}") from None
        if count < 1 or width < 1:
            raise ArchitectureError(f"block {part!r} needs positive count and width")
        blocks.append((count, width))
    if not blocks:
        raise ArchitectureError("empty architecture string")
    return blocks


def check_downsample_kind(kind: str) -> str:
    k = kind.strip().lower()
    if k not in DOWNSAMPLE_KINDS:
        raise ArchitectureError(
            f"unknown downsample kind {kind!r}; expected one of {DOWNSAMPLE_KINDS}"
        )
    return k


def truncated_normal(rng, shape, std, dtype=np.float64):
    """Normal(0, std) with rejection resampling of draws beyond two sigma."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(dtype, copy=False)


@dataclass
class Unit:
    label: str
    layers: list
    record: bool


@dataclass
class ActivationTrace:
    entries: list  # (label, array) pairs; entry 0 is the input batch

    @property
    def labels(self):
        return [label for label, _ in self.entries]

    @property
    def arrays(self):
        return [arr for _, arr in self.entries]

    def __len__(self):
        return len(self.entries)


class Network:
    def __init__(self, arch, downsample, classes, in_channels, units, dtype=np.float32):
        self.arch = arch
        self.downsample = downsample
        self.classes = classes
        self.in_channels = in_channels
        self.units = units
        self.dtype = np.dtype(dtype)

    # ---- forward / backward ----------------------------------------------

    def forward(self, x, train=False, record=False, update_stats=None):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeError(
                f"expected (n, h, w, {self.in_channels}) batch, got shape {x.shape}"
            )
        entries = [("input", x)] if record else None
        h = x
        for unit in self.units:
            for layer in unit.layers:
                h = layer.forward(h, train=train, update_stats=update_stats)
            if record and unit.record:
                entries.append((unit.label, h))
        trace = ActivationTrace(entries) if record else None
        return h, trace

    def backward(self, dlogits):
        dy = dlogits
        for unit in reversed(self.units):
            for layer in reversed(unit.layers):
                dy = layer.backward(dy)
        return dy

    # ---- parameter access -------------------------------------------------

    def param_items(self):
        for unit in self.units:
            for layer in unit.layers:
                for pname, value, grad in layer.param_items():
                    yield f"{unit.label}.{layer.name}.{pname}", value, grad

    def state_items(self):
        for unit in self.units:
            for layer in unit.layers:
                for pname, value in layer.state_items():
                    yield f"{unit.label}.{layer.name}.{pname}", value

    def zero_grads(self):
        for unit in self.units:
            for layer in unit.layers:
                layer.zero_grads()

    def conv_layers(self):
        """Conv layers in depth order as (unit label, Conv2d) pairs, head excluded."""
        out = []
        for unit in self.units:
            if unit.label == "head":
                continue
            for layer in unit.layers:
                if isinstance(layer, Conv2d):
                    out.append((unit.label, layer))
        return out

    @property
    def recorded_labels(self):
        return ["input"] + [u.label for u in self.units if u.record]

    # ---- copies -----------------------------------------------------------

    def astype(self, dtype):
        net = copy.deepcopy(self)
        net.dtype = np.dtype(dtype)
        for unit in net.units:
            for layer in unit.layers:
                layer.cast_(dtype)
        return net

    def copy(self):
        return self.astype(self.dtype)


def _conv_unit(label, cin, cout, rng, dtype):
    std = 1.0 / np.sqrt(9.0 * cin)
    w = truncated_normal(rng, (3, 3, cin, cout), std, dtype)
    b = np.zeros(cout, dtype=dtype)
    return Unit(label, [Conv2d(w, b, stride=1, pad=1), BatchNorm(cout, dtype), ReLU()], True)


def _downsample_unit(label, kind, channels, rng, dtype):
    if kind == "subsample":
        layers = [Subsample()]
    elif kind == "maxpool":
        layers = [MaxPool()]
    elif kind == "avgpool":
        layers = [AvgPool()]
    else:
        std = 1.0 / np.sqrt(4.0 * channels)
        w = truncated_normal(rng, (2, 2, channels, channels), std, dtype)
        b = np.zeros(channels, dtype=dtype)
        layers = [Conv2d(w, b, stride=2, pad=0)]
        if kind == "strided-relu":
            layers += [BatchNorm(channels, dtype), ReLU()]
    return Unit(label, layers, True)


def init_network(arch, classes, downsample, seed, in_channels=3, dtype=np.float32):
    """Builds a network with truncated-normal weights of std 1/sqrt(fan-in)."""
    blocks = parse_architecture(arch)
    kind = check_downsample_kind(downsample)
    if classes < 2:
        raise ArchitectureError(f"need at least 2 classes, got {classes}")
    rng = rng_from(seed, "init")
    units = []
    cin = in_channels
    conv_i = 0
    for block_i, (count, width) in enumerate(blocks):
        for _ in range(count):
            conv_i += 1
            units.append(_conv_unit(f"conv{conv_i}", cin, width, rng, dtype))
            cin = width
        units.append(_downsample_unit(f"down{block_i + 1}", kind, cin, rng, dtype))
    head_w = truncated_normal(rng, (cin, classes), 1.0 / np.sqrt(cin), dtype)
    head_b = np.zeros(classes, dtype=dtype)
    units.append(Unit("head", [GlobalAvgPool(), Linear(head_w, head_b)], False))
    return Network(arch, kind, classes, in_channels, units, dtype)


# ---- Gaussian filter smoothing --------------------------------------------


def gaussian_kernel(sigma: float) -> np.ndarray:
    """2-D Gaussian kernel truncated at radius ceil(3 sigma), unit sum."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return np.ones((1, 1))
    radius = int(np.ceil(3.0 * sigma))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def smooth_filters(net: Network, sigma: float) -> Network:
    """Returns a copy whose conv kernels are blurred spatially.

    Each kernel's spatial slice is convolved with a unit-sum Gaussian
    (zero-padded, same size) independently per in/out channel pair.  Biases,
    batch-norm parameters and the linear head are untouched.  sigma=0 is the
    identity.
    """
    out = net.copy()
    if sigma == 0:
        return out
    g = gaussian_kernel(sigma)
    radius = g.shape[0] // 2
    for _, conv in out.conv_layers():
        w = conv.w.astype(np.float64)
        kh, kw = w.shape[0], w.shape[1]
        wp = np.pad(w, ((radius, radius), (radius, radius), (0, 0), (0, 0)))
        sm = np.zeros_like(w)
        for a in range(g.shape[0]):
            for b in range(g.shape[1]):
                sm += g[a, b] * wp[a : a + kh, b : b + kw]
        conv.w[...] = sm.astype(conv.w.dtype)
    return out


# ---- checkpoint format -----------------------------------------------------
#
# Little-endian binary layout, version 1:
#   magic            4 bytes  "DFNW"
#   version          u32
#   arch             u32 length + utf-8 bytes
#   downsample kind  u32 length + utf-8 bytes
#   classes          u32
#   in_channels      u32
#   entry count      u32
#   per entry:
#     name           u32 length + utf-8 bytes (e.g. "conv1.conv.w")
#     ndim           u32
#     dims           ndim * u32
#     payload        product(dims) * f32 (little-endian), row-major
#
# Entries cover every parameter and batch-norm running statistic in network
# order, so a checkpoint restores eval-mode behavior exactly (up to f32).


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or inconsistent."""


def _write_str(fh, s: str):
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_exact(fh, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise CheckpointError("truncated checkpoint file")
    return raw


def _read_str(fh) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    return _read_exact(fh, n).decode("utf-8")


def save_checkpoint(net: Network, path):
    entries = list(net.state_items())
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", _CHECKPOINT_VERSION))
        _write_str(fh, net.arch)
        _write_str(fh, net.downsample)
        fh.write(struct.pack("<II", net.classes, net.in_channels))
        fh.write(struct.pack("<I", len(entries)))
        for name, value in entries:
            _write_str(fh, name)
            fh.write(struct.pack("<I", value.ndim))
            fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
            fh.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != _CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a network checkpoint")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != _CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        arch = _read_str(fh)
        kind = _read_str(fh)
        classes, in_channels = struct.unpack("<II", _read_exact(fh, 8))
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        net = init_network(arch, classes, kind, seed=0, in_channels=in_channels)
        state = dict(net.state_items())
        if count != len(state):
            raise CheckpointError(
                f"{path}: expected {len(state)} entries for this architecture, found {count}"
            )
        seen = set()
        for _ in range(count):
            name = _read_str(fh)
            if name not in state:
                raise CheckpointError(f"{path}: unexpected entry {name!r}")
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4))
            dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
            target = state[name]
            if dims != target.shape:
                raise CheckpointError(
                    f"{path}: entry {name!r} has shape {dims}, expected {target.shape}"
                )
            n_vals = int(np.prod(dims)) if dims else 1
            payload = np.frombuffer(_read_exact(fh, 4 * n_vals), dtype="<f4")
            target[...] = payload.reshape(dims).astype(target.dtype)
            seen.add(name)
        if seen != set(state):
            raise CheckpointError(f"{path}: missing entries {sorted(set(state) - seen)}")
    return net
