"""Landmark geometry predictor and its discriminator.

The predictor fuses three encoder branches: a two-stage conv stack over the
MFCC grid (five 3x3 convs for per-step features, then five time-axis convs
collapsing the time dimension), a 4-layer pose MLP, and a 3-layer blink MLP.
The concatenated features pass through two fully connected layers that
regress N landmark coordinates. The discriminator is a 7-layer MLP over the
flattened pixel-unit landmark vector.
"""

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .audio import MfccFeature
from .errors import ConfigError
from .nn import Module, Sequential, Linear, Conv2d, LeakyReLU

# Head-pose ranges (radians) observed in the annotated announcer footage.
YAW_RANGE = (-0.354, 0.196)
PITCH_RANGE = (-0.367, 0.379)
ROLL_RANGE = (-0.502, 0.509)

LEAKY_SLOPE = 0.2


def _he_std(fan_in, slope=LEAKY_SLOPE):
    # variance-preserving scale for leaky-rectifier stacks; a flat 0.02 std
    # starves the 10-layer audio branch at toy widths
    return float(np.sqrt(2.0 / (fan_in * (1.0 + slope**2))))


def pose_range_flags(yaw, pitch, roll):
    """Pose components falling outside the annotated ranges, name -> value."""
    out = {}
    for name, value, (lo, hi) in (
        ("yaw", yaw, YAW_RANGE),
        ("pitch", pitch, PITCH_RANGE),
        ("roll", roll, ROLL_RANGE),
    ):
        if not lo <= value <= hi:
            out[name] = value
    return out


@dataclass
class PoseTriple:
    yaw: float
    pitch: float
    roll: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.yaw, self.pitch, self.roll])):
            raise ValueError("non-finite pose")
        for name, value in self.range_flags().items():
            warnings.warn(f"pose component {name}={value:.4f} outside the training range")

    def range_flags(self):
        """Components outside the annotated ranges, name -> value."""
        return pose_range_flags(self.yaw, self.pitch, self.roll)

    def as_array(self):
        return np.array([self.yaw, self.pitch, self.roll], dtype=np.float64)


@dataclass
class BlinkPair:
    left: float
    right: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.left, self.right])):
            raise ValueError("non-finite blink")
        if self.left < 0 or self.right < 0:
            raise ValueError("blink ratios must be non-negative")

    def as_array(self):
        return np.array([self.left, self.right], dtype=np.float64)


@dataclass
class LandmarkSet:
    """N 2-D keypoints in crop-normalized coordinates with named index groups."""

    points: np.ndarray
    index_groups: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("non-finite landmark coordinates")
        n = self.points.shape[0]
        seen = set()
        for name, idx in self.index_groups.items():
            idx_set = set(int(i) for i in idx)
            if any(i < 0 or i >= n for i in idx_set):
                raise ValueError(f"index group {name!r} references out-of-range landmarks")
            if seen & idx_set:
                raise ValueError(f"index group {name!r} overlaps another group")
            seen |= idx_set

    @property
    def n(self):
        return self.points.shape[0]

    def group(self, name):
        return self.points[np.asarray(self.index_groups[name], dtype=int)]

    def flat(self):
        return self.points.reshape(-1)


@dataclass
class PredictorArch:
    n_landmarks: int = 20
    mfcc_shape: tuple = (16, 20)
    resolution: int = 64
    audio_channels: tuple = (16, 32, 64, 64, 64)
    audio_time_layers: int = 5
    audio_features: int = 256
    pose_widths: tuple = (32, 64, 64, 64)
    blink_widths: tuple = (32, 32, 32)
    fusion_hidden: int = 256
    mfcc_shift: float = 0.0
    mfcc_scale: float = 1.0
    index_groups: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["mfcc_shape"] = list(self.mfcc_shape)
        d["audio_channels"] = list(self.audio_channels)
        d["pose_widths"] = list(self.pose_widths)
        d["blink_widths"] = list(self.blink_widths)
        d["index_groups"] = {k: list(map(int, v)) for k, v in self.index_groups.items()}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("mfcc_shape", "audio_channels", "pose_widths", "blink_widths"):
            d[key] = tuple(d[key])
        return cls(**d)


def _mlp(widths, rng, dtype):
    layers = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        layers += [Linear(n_in, n_out, rng, dtype=dtype, w_std=_he_std(n_in)), LeakyReLU(LEAKY_SLOPE)]
    return Sequential(*layers)


class GeometryPredictor(Module):
    """Three-branch landmark regressor; batched array API plus domain-type ops."""

    def __init__(self, arch: PredictorArch, rng=None, dtype=np.float32):
        super().__init__()
        self.arch = arch
        self.dtype = dtype
        rng = rng or np.random.default_rng(0)

        convs = []
        c_prev = 1
        for i, c in enumerate(arch.audio_channels):
            stride = 2 if i % 2 == 0 else 1
            convs += [Conv2d(c_prev, c, 3, stride=stride, pad=1, rng=rng, dtype=dtype,
                             w_std=_he_std(9 * c_prev)),
                      LeakyReLU(LEAKY_SLOPE)]
            c_prev = c
        for i in range(arch.audio_time_layers):
            stride = (2, 1) if i == 0 else (1, 1)
            convs += [Conv2d(c_prev, c_prev, (3, 1), stride=stride, pad=(1, 0), rng=rng, dtype=dtype,
                             w_std=_he_std(3 * c_prev)),
                      LeakyReLU(LEAKY_SLOPE)]
        self.audio_conv = self.add_child("audio_conv", Sequential(*convs))

        t, c = arch.mfcc_shape
        probe = self.audio_conv.forward(np.zeros((1, 1, t, c), dtype=dtype))
        self._audio_flat = probe[0].size
        self.audio_head = self.add_child(
            "audio_head",
            Sequential(Linear(self._audio_flat, arch.audio_features, rng, dtype=dtype,
                              w_std=_he_std(self._audio_flat)),
                       LeakyReLU(LEAKY_SLOPE)),
        )
        self.pose_mlp = self.add_child("pose_mlp", _mlp((3,) + tuple(arch.pose_widths), rng, dtype))
        self.blink_mlp = self.add_child("blink_mlp", _mlp((2,) + tuple(arch.blink_widths), rng, dtype))

        fused = arch.audio_features + arch.pose_widths[-1] + arch.blink_widths[-1]
        self.fusion = self.add_child(
            "fusion",
            Sequential(Linear(fused, arch.fusion_hidden, rng, dtype=dtype, w_std=_he_std(fused)),
                       LeakyReLU(LEAKY_SLOPE),
                       Linear(arch.fusion_hidden, 2 * arch.n_landmarks, rng, dtype=dtype,
                              w_std=_he_std(arch.fusion_hidden))),
        )
        self.fusion_width = fused

    # -- batched array API ------------------------------------------------

    def encode(self, mfcc, pose, blink, training=False):
        """(B,T,C), (B,3), (B,2) -> feature triple (f_A, f_P, f_B)."""
        t, c = self.arch.mfcc_shape
        if mfcc.ndim != 3 or mfcc.shape[1:] != (t, c):
            raise ConfigError(f"audio branch expected (B, {t}, {c}) mfcc, got {mfcc.shape}")
        if pose.ndim != 2 or pose.shape[1] != 3:
            raise ConfigError(f"pose branch expected (B, 3), got {pose.shape}")
        if blink.ndim != 2 or blink.shape[1] != 2:
            raise ConfigError(f"blink branch expected (B, 2), got {blink.shape}")
        b = mfcc.shape[0]
        x = ((mfcc.astype(self.dtype) - self.dtype(self.arch.mfcc_shift))
             / self.dtype(self.arch.mfcc_scale)).reshape(b, 1, t, c)
        conv_out = self.audio_conv.forward(x, training=training)
        self._conv_out_shape = conv_out.shape
        f_a = self.audio_head.forward(conv_out.reshape(b, -1), training=training)
        f_p = self.pose_mlp.forward(pose.astype(self.dtype), training=training)
        f_b = self.blink_mlp.forward(blink.astype(self.dtype), training=training)
        return f_a, f_p, f_b

    def predict_batch(self, mfcc, pose, blink, training=False):
        f_a, f_p, f_b = self.encode(mfcc, pose, blink, training=training)
        self._split = (f_a.shape[1], f_p.shape[1], f_b.shape[1])
        fused = np.concatenate([f_a, f_p, f_b], axis=1)
        out = self.fusion.forward(fused, training=training)
        return out.reshape(-1, self.arch.n_landmarks, 2)

    def backward(self, d_landmarks):
        """Backprop from d(loss)/d(landmarks), accumulating parameter grads."""
        b = d_landmarks.shape[0]
        d_fused = self.fusion.backward(d_landmarks.reshape(b, -1).astype(self.dtype))
        na, np_, _ = self._split
        d_fa, d_fp, d_fb = np.split(d_fused, [na, na + np_], axis=1)
        d_conv = self.audio_head.backward(d_fa).reshape(self._conv_out_shape)
        self.audio_conv.backward(d_conv)
        self.pose_mlp.backward(d_fp)
        self.blink_mlp.backward(d_fb)


class LandmarkDiscriminator(Module):
    """7 fully connected layers over the flattened pixel-unit landmark vector."""

    WIDTHS = (256, 256, 128, 128, 64, 32)

    def __init__(self, n_landmarks, input_scale, rng=None, dtype=np.float32, widths=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.n_landmarks = n_landmarks
        self.input_scale = float(input_scale)
        self.dtype = dtype
        widths = tuple(widths) if widths is not None else self.WIDTHS
        self.widths = widths
        layers = []
        w_prev = 2 * n_landmarks
        for w in widths:
            layers += [Linear(w_prev, w, rng, dtype=dtype, w_std=_he_std(w_prev)), LeakyReLU(LEAKY_SLOPE)]
            w_prev = w
        layers.append(Linear(w_prev, 1, rng, dtype=dtype, w_std=_he_std(w_prev)))
        self.net = self.add_child("net", Sequential(*layers))

    def arch_dict(self):
        return {"n_landmarks": self.n_landmarks, "input_scale": self.input_scale,
                "widths": list(self.widths)}

    def forward(self, landmarks_flat, training=False):
        """(B, 2N) pixel-unit vectors -> (B, 1) logits."""
        if landmarks_flat.ndim != 2 or landmarks_flat.shape[1] != 2 * self.n_landmarks:
            raise ConfigError(
                f"discriminator expected width {2 * self.n_landmarks}, got {landmarks_flat.shape}")
        return self.net.forward(landmarks_flat.astype(self.dtype), training=training)

    def backward(self, d_logits):
        return self.net.backward(d_logits.astype(self.dtype))

    def logits_for_points(self, points_batch, training=False):
        """(B, N, 2) normalized landmarks -> logits, scaling to pixel units."""
        b = points_batch.shape[0]
        flat = (points_batch.reshape(b, -1) * self.input_scale).astype(self.dtype)
        return self.forward(flat, training=training)


# -- single-sample ops over domain types ----------------------------------

def _as_batch(model, audio, pose, blink):
    values = audio.values if isinstance(audio, MfccFeature) else np.asarray(audio)
    return (values[None, ...],
            pose.as_array()[None, :] if isinstance(pose, PoseTriple) else np.asarray(pose)[None, :],
            blink.as_array()[None, :] if isinstance(blink, BlinkPair) else np.asarray(blink)[None, :])


def encode_branches(model, audio, pose, blink):
    """Feature vectors (f_A, f_P, f_B) for one sample."""
    f_a, f_p, f_b = model.encode(*_as_batch(model, audio, pose, blink))
    return f_a[0], f_p[0], f_b[0]


def predict_landmarks(model, audio, pose, blink):
    """Regress a LandmarkSet for one sample (raw coordinates, unclamped)."""
    points = model.predict_batch(*_as_batch(model, audio, pose, blink))[0]
    return LandmarkSet(points.astype(np.float64), dict(model.arch.index_groups))


def discriminate_landmarks(d, landmark_set):
    """Scalar realness logit for one landmark set."""
    logits = d.logits_for_points(landmark_set.points[None, ...])
    return float(logits[0, 0])
