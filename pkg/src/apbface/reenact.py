"""Landmark-image-to-face generator and patch discriminator.

The generator is a symmetric encoder-decoder with skip connections
(4x4 stride-2 convs down, fractionally-strided convs up, tanh output); the
discriminator emits a grid of patch logits and conditions on the landmark
image (4-channel input). Channel widths scale with resolution so toy
configs stay cheap.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError
from .nn import Module, Sequential, Conv2d, ConvTranspose2d, BatchNorm2d, LeakyReLU, ReLU, Tanh

VALID_RESOLUTIONS = (32, 64, 128, 256)
LEAKY_SLOPE = 0.2
WEIGHT_STD = 0.02


@dataclass
class FaceImage:
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("face image must be HxWx3")
        if self.pixels.shape[0] != self.pixels.shape[1]:
            raise ValueError("face image must be square")
        if self.pixels.shape[0] not in VALID_RESOLUTIONS:
            raise ValueError(f"resolution must be one of {VALID_RESOLUTIONS}")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("non-finite face image")
        if np.abs(self.pixels).max() > 1.0 + 1e-9:
            raise ValueError("face image values must lie in [-1, 1]")

    @property
    def resolution(self):
        return self.pixels.shape[0]


def _scaled_channels(resolution, full, floor=8):
    return max(floor, (full * resolution) // 256)


@dataclass
class UNetArch:
    resolution: int = 64
    in_channels: int = 1
    out_channels: int = 3
    depth: int = None
    base_channels: int = None
    max_channels: int = None

    def __post_init__(self):
        if self.depth is None:
            self.depth = int(np.log2(self.resolution)) - 2
        if self.base_channels is None:
            self.base_channels = _scaled_channels(self.resolution, 64)
        if self.max_channels is None:
            self.max_channels = max(self.base_channels, _scaled_channels(self.resolution, 512))
        if self.depth < 2:
            raise ValueError("generator needs depth >= 2")
        if self.resolution % (2**self.depth) != 0:
            raise ValueError("resolution must be divisible by 2^depth")

    def channels(self):
        return [min(self.base_channels * 2**i, self.max_channels) for i in range(self.depth)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class UNetGenerator(Module):
    def __init__(self, arch: UNetArch, rng=None, dtype=np.float32):
        super().__init__()
        self.arch = arch
        self.dtype = dtype
        rng = rng or np.random.default_rng(0)
        ch = arch.channels()
        depth = arch.depth

        self.enc_blocks = []
        c_prev = arch.in_channels
        for i, c in enumerate(ch):
            layers = [Conv2d(c_prev, c, 4, stride=2, pad=1, rng=rng, dtype=dtype, w_std=WEIGHT_STD)]
            if 0 < i < depth - 1:
                layers.append(BatchNorm2d(c, rng, dtype=dtype))
            layers.append(LeakyReLU(LEAKY_SLOPE))
            block = self.add_child(f"enc{i + 1}", Sequential(*layers))
            self.enc_blocks.append(block)
            c_prev = c

        self.dec_blocks = []
        for i in range(depth, 0, -1):  # level depth .. 1
            c_in = ch[i - 1] if i == depth else 2 * ch[i - 1]
            if i == 1:
                layers = [ConvTranspose2d(c_in, arch.out_channels, 4, stride=2, pad=1, rng=rng,
                                          dtype=dtype, w_std=WEIGHT_STD),
                          Tanh()]
            else:
                layers = [ConvTranspose2d(c_in, ch[i - 2], 4, stride=2, pad=1, rng=rng, dtype=dtype,
                                          w_std=WEIGHT_STD),
                          BatchNorm2d(ch[i - 2], rng, dtype=dtype),
                          ReLU()]
            block = self.add_child(f"dec{i}", Sequential(*layers))
            self.dec_blocks.append(block)

    def forward(self, x, training=False):
        if x.shape[2] != self.arch.resolution or x.shape[3] != self.arch.resolution:
            raise ConfigError(
                f"generator configured for {self.arch.resolution}, got {x.shape[2]}x{x.shape[3]}")
        if x.shape[1] != self.arch.in_channels:
            raise ConfigError(f"generator expected {self.arch.in_channels} input channels")
        skips = []
        h = x.astype(self.dtype)
        for block in self.enc_blocks:
            h = block.forward(h, training=training)
            skips.append(h)
        depth = self.arch.depth
        h = self.dec_blocks[0].forward(skips[-1], training=training)
        self._skip_channels = []
        for k, block in enumerate(self.dec_blocks[1:]):
            skip = skips[depth - 2 - k]
            self._skip_channels.append(h.shape[1])
            h = block.forward(np.concatenate([h, skip], axis=1), training=training)
        return h

    def backward(self, dy):
        depth = self.arch.depth
        d_skip = [None] * depth  # gradient landing on each encoder output
        dh = dy.astype(self.dtype)
        for k in range(len(self.dec_blocks) - 1, 0, -1):
            d_cat = self.dec_blocks[k].backward(dh)
            split = self._skip_channels[k - 1]
            dh = d_cat[:, :split]
            d_skip[depth - 1 - k] = d_cat[:, split:]
        d_acc = self.dec_blocks[0].backward(dh)
        for i in range(depth - 1, -1, -1):
            if d_skip[i] is not None:
                d_acc = d_acc + d_skip[i]
            d_acc = self.enc_blocks[i].backward(d_acc)
        return d_acc


@dataclass
class PatchArch:
    resolution: int = 64
    in_channels: int = 4
    base_channels: int = None
    n_layers: int = 3

    def __post_init__(self):
        if self.base_channels is None:
            self.base_channels = _scaled_channels(self.resolution, 64)
        if self.map_size < 1:
            raise ValueError(
                f"patch logit map would be empty: resolution {self.resolution} with "
                f"{self.n_layers} stride-2 blocks")

    @property
    def map_size(self):
        # n_layers stride-2 4x4 convs (pad 1) halve; the two stride-1 convs trim one each
        return self.resolution // (2**self.n_layers) - 2

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class PatchDiscriminator(Module):
    """Conv stack producing a patch-logit grid over (landmark image, face) pairs."""

    def __init__(self, arch: PatchArch, rng=None, dtype=np.float32):
        super().__init__()
        self.arch = arch
        self.dtype = dtype
        rng = rng or np.random.default_rng(0)
        b = arch.base_channels
        cap = 8 * b
        layers = [Conv2d(arch.in_channels, b, 4, stride=2, pad=1, rng=rng, dtype=dtype, w_std=WEIGHT_STD),
                  LeakyReLU(LEAKY_SLOPE)]
        c_prev = b
        for k in range(1, arch.n_layers):
            c = min(b * 2**k, cap)
            layers += [Conv2d(c_prev, c, 4, stride=2, pad=1, rng=rng, dtype=dtype, w_std=WEIGHT_STD),
                       BatchNorm2d(c, rng, dtype=dtype),
                       LeakyReLU(LEAKY_SLOPE)]
            c_prev = c
        c = min(b * 2**arch.n_layers, cap)
        layers += [Conv2d(c_prev, c, 4, stride=1, pad=1, rng=rng, dtype=dtype, w_std=WEIGHT_STD),
                   BatchNorm2d(c, rng, dtype=dtype),
                   LeakyReLU(LEAKY_SLOPE),
                   Conv2d(c, 1, 4, stride=1, pad=1, rng=rng, dtype=dtype, w_std=WEIGHT_STD)]
        self.net = self.add_child("net", Sequential(*layers))

    def forward(self, x, training=False):
        if x.shape[1] != self.arch.in_channels:
            raise ConfigError(f"discriminator expected {self.arch.in_channels} channels, got {x.shape[1]}")
        if x.shape[2] != x.shape[3]:
            raise ConfigError("discriminator input must be square")
        return self.net.forward(x.astype(self.dtype), training=training)

    def backward(self, d_map):
        return self.net.backward(d_map.astype(self.dtype))


# -- single-sample ops over domain types ----------------------------------

def reenact(model, landmark_image):
    """Generate a face image from a binary landmark image."""
    pixels = landmark_image.pixels
    if pixels.shape[0] != model.arch.resolution:
        raise ConfigError(
            f"landmark image resolution {pixels.shape[0]} does not match model "
            f"({model.arch.resolution})")
    x = pixels.astype(model.dtype)[None, None]
    y = model.forward(x, training=False)[0]
    return FaceImage(np.moveaxis(y.astype(np.float64), 0, 2))


def discriminate_patches(d, landmark_image, face):
    """Patch logit map for a (landmark image, face) pair."""
    lm = landmark_image.pixels
    face_px = face.pixels if hasattr(face, "pixels") else np.asarray(face)
    if lm.shape[0] != face_px.shape[0]:
        raise ConfigError("landmark image and face resolutions differ")
    x = np.concatenate([lm[None].astype(np.float64), np.moveaxis(face_px, 2, 0)], axis=0)
    return d.forward(x[None].astype(d.dtype), training=False)[0, 0]
