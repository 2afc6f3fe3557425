"""Dataset layer: synthetic face generator, manifests, preprocessing.

The synthetic generator draws a schematic face whose geometry is an analytic
function of (pose, blink, mouth openness): pose rigidly rotates/translates
the layout, blink sets eye diamond heights, and the audio window carries the
mouth parameter as a pure tone at 200 + 600*m Hz. A parameter strip along
the bottom rows encodes (marker, m, pose, blink) as constant-intensity
blocks, which is what makes the shipped oracle detector able to invert any
rendered face - including imperfect generated ones - back to its driving
parameters.
"""

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import PIPELINE_VERSION
from .audio import AudioTrack, FeatureConfig, MfccFeature, extract_mfcc, load_wav, resample, window_for_frame
from .geometry import BlinkPair, LandmarkSet, PoseTriple, YAW_RANGE, PITCH_RANGE, ROLL_RANGE
from .metrics import DetectionResult
from .reenact import FaceImage

# Schematic face layout (normalized crop coordinates, y down). Sized so the
# landmarks stay inside the frame at the pose range extremes: max landmark
# radius 0.26 plus max shift (0.177, 0.171) from center. Eyes and mouth are
# deliberately large so blink/mouth state stays legible in a 64px raster;
# the contour is elliptical so roll is visible in the outline.
FACE_CENTER = (0.5, 0.44)
CONTOUR_RX = 0.24
CONTOUR_RY = 0.26
EYE_OFFSET = (0.12, -0.12)
EYE_HALF_WIDTH = 0.075
MOUTH_OFFSET_Y = 0.15
MOUTH_HALF_WIDTH = 0.11
MOUTH_MIN_HALF_HEIGHT = 0.01
MOUTH_SPAN_HALF_HEIGHT = 0.10
YAW_SHIFT = 0.5
PITCH_SHIFT = 0.45
RENDER_SUPERSAMPLE = 16

# Parameter strip: (marker, mouth, yaw, pitch, roll, blink_left, blink_right).
STRIP_SLOTS = 7
STRIP_FRACTION = 8  # strip height = resolution // 8
BLOCK_AMPLITUDE = 0.8
DETECT_THRESHOLD = 0.8
BLINK_CODE_RANGE = (0.0, 1.0)
MOUTH_CODE_RANGE = (0.0, 1.0)

MANIFEST_NAME = "manifest.json"
MANIFEST_KIND = "apbface-dataset"


def layout_index_groups(n_landmarks):
    """contour / left_eye / right_eye / mouth index lists for N landmarks."""
    n_contour = n_landmarks - 12
    if n_contour < 3:
        raise ValueError("layout needs at least 15 landmarks")
    c = n_contour
    return {
        "contour": list(range(c)),
        "left_eye": list(range(c, c + 4)),
        "right_eye": list(range(c + 4, c + 8)),
        "mouth": list(range(c + 8, c + 12)),
    }


def _diamond(cx, cy, half_w, half_h):
    return np.array([
        [cx - half_w, cy],
        [cx, cy - half_h],
        [cx + half_w, cy],
        [cx, cy + half_h],
    ])


def landmarks_from_params(pose, blink, mouth, n_landmarks=20):
    """Analytic schematic-face landmarks for (pose, blink, mouth openness).

    Roll rotates the contour, the mouth, and the eye centers about the face
    center; the eye diamonds themselves stay axis-aligned so the blink ratio
    (an axis-aligned height/width measurement) reproduces the driving blink
    exactly at any pose.
    """
    yaw, pitch, roll = np.asarray(pose, dtype=np.float64)
    blink_l, blink_r = np.asarray(blink, dtype=np.float64)
    groups = layout_index_groups(n_landmarks)
    cx, cy = FACE_CENTER
    center = np.array([cx, cy])
    rot = np.array([[np.cos(roll), -np.sin(roll)], [np.sin(roll), np.cos(roll)]])
    shift = np.array([YAW_SHIFT * yaw, PITCH_SHIFT * pitch])

    def place(points):
        return (np.asarray(points) - center) @ rot.T + center + shift

    theta = np.linspace(0.0, 2.0 * np.pi, len(groups["contour"]), endpoint=False)
    contour = place(np.stack([cx + CONTOUR_RX * np.cos(theta),
                              cy + CONTOUR_RY * np.sin(theta)], axis=1))
    mouth_pts = place(_diamond(cx, cy + MOUTH_OFFSET_Y, MOUTH_HALF_WIDTH,
                               MOUTH_MIN_HALF_HEIGHT + mouth * MOUTH_SPAN_HALF_HEIGHT))
    left_c, right_c = place(np.array([[cx - EYE_OFFSET[0], cy + EYE_OFFSET[1]],
                                      [cx + EYE_OFFSET[0], cy + EYE_OFFSET[1]]]))
    left_eye = _diamond(left_c[0], left_c[1], EYE_HALF_WIDTH, blink_l * EYE_HALF_WIDTH)
    right_eye = _diamond(right_c[0], right_c[1], EYE_HALF_WIDTH, blink_r * EYE_HALF_WIDTH)
    return np.concatenate([contour, left_eye, right_eye, mouth_pts])


def identity_colors(identity):
    """Deterministic per-identity color scheme in [-0.8, 0.8].

    The background sits along the color direction orthogonal to both the
    face->eye and face->mouth axes, so background pixels contribute zero
    mass to the oracle's coverage projections regardless of identity.
    """
    digest = hashlib.sha256(identity.encode()).digest()
    b = [v / 255.0 for v in digest[:8]]
    face = np.array([0.45 + 0.30 * b[3], 0.28 + 0.18 * b[4], 0.08 + 0.20 * b[5]])
    eye = np.array([-0.70 + 0.15 * b[6], -0.60 + 0.12 * b[7], -0.50 + 0.10 * b[0]])
    mouth = np.array([0.60 + 0.20 * b[1], -0.50 + 0.12 * b[2], -0.30 + 0.12 * b[3]])
    normal = np.cross(eye - face, mouth - face)
    normal /= np.linalg.norm(normal)
    background = None
    for alpha in (0.9, -0.9, 0.7, -0.7, 0.5, -0.5):
        candidate = face + alpha * normal
        if np.abs(candidate).max() <= 0.8 and np.linalg.norm(candidate - face) >= 0.4:
            background = candidate
            break
    if background is None:
        background = np.clip(face + 0.9 * normal, -0.8, 0.8)
    return {"background": background, "face": face, "eye": eye, "mouth": mouth}


def _strip_rows(resolution):
    strip_h = max(4, resolution // STRIP_FRACTION)
    return resolution - strip_h, resolution


def _slot_cols(resolution, slot):
    block_w = resolution // STRIP_SLOTS
    return slot * block_w, (slot + 1) * block_w


def _param_code_ranges():
    return [(0.0, 1.0), MOUTH_CODE_RANGE, YAW_RANGE, PITCH_RANGE, ROLL_RANGE,
            BLINK_CODE_RANGE, BLINK_CODE_RANGE]


def _encode_block(value, lo, hi):
    norm = np.clip((value - lo) / (hi - lo), 0.0, 1.0)
    return (2.0 * norm - 1.0) * BLOCK_AMPLITUDE


def _decode_block(intensity, lo, hi):
    norm = (intensity / BLOCK_AMPLITUDE + 1.0) / 2.0
    return lo + norm * (hi - lo)


def _polygon_coverage(vertices_px, resolution, supersample=RENDER_SUPERSAMPLE):
    """Per-pixel coverage fraction of a convex polygon.

    Supersampled on a subgrid restricted to the polygon's bounding box, so a
    high factor stays cheap and area estimates are accurate to ~perimeter/(4s).
    """
    s = supersample
    v = np.asarray(vertices_px, dtype=np.float64)
    x0 = max(int(np.floor(v[:, 0].min())) - 1, 0)
    y0 = max(int(np.floor(v[:, 1].min())) - 1, 0)
    x1 = min(int(np.ceil(v[:, 0].max())) + 1, resolution - 1)
    y1 = min(int(np.ceil(v[:, 1].max())) + 1, resolution - 1)
    out = np.zeros((resolution, resolution))
    if x1 < x0 or y1 < y0:
        return out
    w, h = x1 - x0 + 1, y1 - y0 + 1
    sub_y, sub_x = np.mgrid[0 : h * s, 0 : w * s]
    cy = y0 + (sub_y - (s - 1) / 2.0) / s
    cx = x0 + (sub_x - (s - 1) / 2.0) / s
    inside = np.ones((h * s, w * s), dtype=bool)
    for (ax, ay), (bx, by) in zip(v, np.roll(v, -1, axis=0)):
        inside &= (bx - ax) * (cy - ay) - (by - ay) * (cx - ax) >= 0.0
    out[y0 : y1 + 1, x0 : x1 + 1] = inside.reshape(h, s, w, s).mean(axis=(1, 3))
    return out


def render_face(landmarks, index_groups, colors, resolution, strip_values):
    """Deterministic schematic rendering of a landmark layout plus the
    parameter strip. Shape edges are anti-aliased by supersampling;
    ``strip_values``: (marker, m, yaw, pitch, roll, bl, br)."""
    img = np.empty((resolution, resolution, 3), dtype=np.float64)
    img[:, :] = colors["background"]
    px = np.clip(np.asarray(landmarks, dtype=np.float64), 0.0, 1.0) * resolution

    for name, color_key in (("contour", "face"), ("left_eye", "eye"),
                            ("right_eye", "eye"), ("mouth", "mouth")):
        verts = px[np.asarray(index_groups[name], dtype=int)]
        area2 = 0.0
        for (x1, y1), (x2, y2) in zip(verts, np.roll(verts, -1, axis=0)):
            area2 += x1 * y2 - x2 * y1
        if abs(area2) < 1e-12:
            continue  # fully closed eye collapses to a segment
        coverage = _polygon_coverage(verts, resolution)[:, :, None]
        img = img * (1.0 - coverage) + colors[color_key] * coverage

    row0, row1 = _strip_rows(resolution)
    for slot, (value, (lo, hi)) in enumerate(zip(strip_values, _param_code_ranges())):
        col0, col1 = _slot_cols(resolution, slot)
        img[row0:row1, col0:col1] = _encode_block(value, lo, hi)
    return img


def _decode_strip(pixels, resolution):
    row0, row1 = _strip_rows(resolution)
    values = []
    for slot, (lo, hi) in enumerate(_param_code_ranges()):
        col0, col1 = _slot_cols(resolution, slot)
        block = pixels[row0 + 1 : row1 - 1, col0 + 1 : col1 - 1]
        values.append(_decode_block(np.mean(block, dtype=np.float64), lo, hi))
    return values


def _identity_for_face(pixels, identities):
    """Nearest background color at the image corner picks the identity."""
    corner = pixels[1, 1]
    best, best_d = identities[0], np.inf
    for identity in identities:
        d = float(np.sum((corner - identity_colors(identity)["background"]) ** 2))
        if d < best_d:
            best, best_d = identity, d
    return best


def _coverage_decomposer(colors):
    """Least-squares split of (pixel - face) onto the eye and mouth color
    axes. Exact for the pairwise mixtures the renderer produces, invariant
    to generator blur (blur preserves the per-axis mass), and blind to the
    background (constructed orthogonal to both axes)."""
    basis = np.stack([colors["eye"] - colors["face"], colors["mouth"] - colors["face"]], axis=1)
    pinv = np.linalg.pinv(basis)

    def decompose(window):
        coeffs = (window - colors["face"]) @ pinv.T
        return np.clip(coeffs[..., 0], 0.0, 1.0), np.clip(coeffs[..., 1], 0.0, 1.0)

    return decompose


def _region_moments(pixels, decompose, channel, center_xy, radius, resolution):
    """Coverage mass and centroid of the eye (channel 0) or mouth (channel 1)
    region inside a disk around ``center_xy``; strip rows are excluded.

    A disk, not a box: box corners reach sqrt(2) further and would pick up
    the other eye at extreme roll."""
    row0, _ = _strip_rows(resolution)
    cx, cy = center_xy
    x0 = max(int(np.floor(cx - radius)), 0)
    x1 = min(int(np.ceil(cx + radius)), resolution - 1)
    y0 = max(int(np.floor(cy - radius)), 0)
    y1 = min(int(np.ceil(cy + radius)), row0 - 1)
    if x1 < x0 or y1 < y0:
        return 0.0, np.array([cx, cy])
    coverage = decompose(pixels[y0 : y1 + 1, x0 : x1 + 1])[channel]
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    coverage = coverage * ((xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2)
    mass = float(coverage.sum())
    if mass <= 1e-9:
        return 0.0, np.array([cx, cy])
    centroid = np.array([float((coverage * xs).sum()) / mass, float((coverage * ys).sum()) / mass])
    return mass, centroid


# decode gating: trust the exact strip blocks when the geometric measurement
# agrees with them (machine-rendered faces); fall back to geometry otherwise.
# The geometric reading coarsens at low resolution, so the tolerance scales.
BLOCK_AGREEMENT_TOL = 0.04
BLOCK_AGREEMENT_REF_RES = 64


def make_oracle_detector(resolution, n_landmarks=20, identities=("ann_a", "ann_b")):
    """Detector that inverts rendered faces back to driving parameters.

    Two complementary readings: the parameter strip (bit-exact on clean
    renders) and geometric moments of the eye/mouth regions (robust on
    imperfect generated faces, the way re-detection on generated images
    works). Per component, the block value wins when both agree within a
    tolerance; the geometric value wins otherwise. Detection itself is the
    strip marker surviving.
    """
    res = resolution
    tol = BLOCK_AGREEMENT_TOL * BLOCK_AGREEMENT_REF_RES / res
    margin = max(1.0, res / 32.0)  # keeps the windows off the other eye at any scale
    eye_w_px = EYE_HALF_WIDTH * res
    eye_window = np.hypot(EYE_HALF_WIDTH, EYE_HALF_WIDTH) * res + margin
    mouth_window = (np.hypot(MOUTH_HALF_WIDTH, MOUTH_MIN_HALF_HEIGHT + MOUTH_SPAN_HALF_HEIGHT) * res
                    + margin)
    groups = layout_index_groups(n_landmarks)

    def eye_pass(pixels, decompose, pose, blink, mouth):
        guess = landmarks_from_params(pose, blink, mouth, n_landmarks)
        masses, centers = [], []
        for group in ("left_eye", "right_eye"):
            seed = guess[groups[group]].mean(axis=0) * res
            mass, centroid = _region_moments(pixels, decompose, 0, seed, eye_window, res)
            masses.append(mass)
            centers.append(centroid)
        return np.asarray(masses), centers

    def detector(face):
        pixels = np.asarray(getattr(face, "pixels", face), dtype=np.float64)
        marker, m_blk, yaw_blk, pitch_blk, roll_blk, bl_blk, br_blk = _decode_strip(pixels, res)
        if marker < DETECT_THRESHOLD:
            return DetectionResult(detected=False)

        colors = identity_colors(_identity_for_face(pixels, list(identities)))
        decompose = _coverage_decomposer(colors)
        pose_blk = np.array([yaw_blk, pitch_blk, roll_blk])
        blink_blk = np.array([bl_blk, br_blk])

        # two passes: block-seeded windows, then re-seeded from the measured
        # roll/translation (tolerates unreliable block values on generated faces)
        pose_seed, blink_seed, m_seed = pose_blk, blink_blk, m_blk
        for _ in range(2):
            masses, (left_c, right_c) = eye_pass(pixels, decompose, pose_seed, blink_seed, m_seed)
            delta = right_c - left_c
            if np.linalg.norm(delta) < 1e-6:
                roll_geo = float(pose_seed[2])
            else:
                roll_geo = float(np.arctan2(delta[1], delta[0]))
            blink_geo = np.clip(masses / (2.0 * eye_w_px**2), 0.0, 1.5)

            mid_layout = np.array([FACE_CENTER[0], FACE_CENTER[1] + EYE_OFFSET[1]])
            rot = np.array([[np.cos(roll_geo), -np.sin(roll_geo)],
                            [np.sin(roll_geo), np.cos(roll_geo)]])
            center = np.array(FACE_CENTER)
            expected_mid = ((mid_layout - center) @ rot.T + center) * res
            measured_mid = (left_c + right_c) / 2.0
            shift = (measured_mid - expected_mid) / res
            yaw_geo = float(shift[0] / YAW_SHIFT)
            pitch_geo = float(shift[1] / PITCH_SHIFT)
            pose_seed = np.array([yaw_geo, pitch_geo, roll_geo])
            blink_seed = np.clip(blink_geo, 0.0, 1.0)

        guess = landmarks_from_params(pose_seed, blink_seed, m_seed, n_landmarks)
        mouth_seed_xy = guess[groups["mouth"]].mean(axis=0) * res
        mouth_mass, _ = _region_moments(pixels, decompose, 1, mouth_seed_xy, mouth_window, res)
        half_h = mouth_mass / (2.0 * MOUTH_HALF_WIDTH * res * res)
        m_geo = (half_h - MOUTH_MIN_HALF_HEIGHT) / MOUTH_SPAN_HALF_HEIGHT

        def gate(block, geo, k=1.0):
            return block if abs(block - geo) <= k * tol else geo

        pose = np.array([gate(yaw_blk, yaw_geo), gate(pitch_blk, pitch_geo),
                         gate(roll_blk, roll_geo, k=2.0)])
        blink = np.array([gate(bl_blk, blink_geo[0]), gate(br_blk, blink_geo[1])])
        mouth = float(np.clip(gate(m_blk, m_geo, k=3.0), 0.0, 1.0))
        return DetectionResult(detected=True,
                               landmarks=landmarks_from_params(pose, blink, mouth, n_landmarks),
                               pose=pose, blink=blink)

    return detector


@dataclass
class SynthConfig:
    n_samples: int = 2000
    resolution: int = 64
    n_landmarks: int = 20
    seed: int = 7
    identities: tuple = ("ann_a", "ann_b")
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    freq_base: float = 200.0
    freq_span: float = 600.0
    amplitude: float = 0.5
    blink_range: tuple = (0.05, 0.95)
    splits: tuple = (0.8, 0.1, 0.1)

    def to_dict(self):
        d = asdict(self)
        d["identities"] = list(self.identities)
        d["blink_range"] = list(self.blink_range)
        d["splits"] = list(self.splits)
        d["feature"] = self.feature.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["identities"] = tuple(d["identities"])
        d["blink_range"] = tuple(d["blink_range"])
        d["splits"] = tuple(d["splits"])
        d["feature"] = FeatureConfig.from_dict(d["feature"])
        return cls(**d)


def synth_audio_window(mouth, cfg):
    """Mouth openness encoded as a pure tone at freq_base + freq_span * m."""
    sr = cfg.feature.sample_rate
    t = np.arange(cfg.feature.window_length) / sr
    freq = cfg.freq_base + cfg.freq_span * float(mouth)
    return AudioTrack(cfg.amplitude * np.sin(2.0 * np.pi * freq * t), sr)


def _sample_params(rng, cfg):
    return {
        "yaw": rng.uniform(*YAW_RANGE),
        "pitch": rng.uniform(*PITCH_RANGE),
        "roll": rng.uniform(*ROLL_RANGE),
        "blink_l": rng.uniform(*cfg.blink_range),
        "blink_r": rng.uniform(*cfg.blink_range),
        "mouth": rng.uniform(0.0, 1.0),
    }


def build_synthetic_sample(cfg, identity, index):
    """One deterministic sample; the rng key is (seed, identity, index)."""
    id_tag = int.from_bytes(hashlib.sha256(identity.encode()).digest()[:4], "little")
    rng = np.random.default_rng([cfg.seed, id_tag, index])
    p = _sample_params(rng, cfg)
    pose = np.array([p["yaw"], p["pitch"], p["roll"]])
    blink = np.array([p["blink_l"], p["blink_r"]])
    landmarks = landmarks_from_params(pose, blink, p["mouth"], cfg.n_landmarks)
    groups = layout_index_groups(cfg.n_landmarks)
    face = render_face(landmarks, groups, identity_colors(identity), cfg.resolution,
                       (1.0, p["mouth"], p["yaw"], p["pitch"], p["roll"], p["blink_l"], p["blink_r"]))
    window = synth_audio_window(p["mouth"], cfg)
    mfcc = extract_mfcc(window, cfg.feature)
    return {
        "mfcc": mfcc.values.astype(np.float32),
        "pose": pose,
        "blink": blink,
        "landmarks": landmarks,
        "face": face.astype(np.float32),
        "mouth": np.float64(p["mouth"]),
        "frame_index": np.int64(index),
    }


@dataclass
class DatasetManifest:
    root: Path
    meta: dict

    @property
    def resolution(self):
        return int(self.meta["resolution"])

    @property
    def n_landmarks(self):
        return int(self.meta["n_landmarks"])

    @property
    def index_groups(self):
        return {k: list(v) for k, v in self.meta["index_groups"].items()}

    @property
    def feature_config(self):
        return FeatureConfig.from_dict(self.meta["feature_config"])

    @property
    def identities(self):
        return list(self.meta["identities"])

    @property
    def samples(self):
        return self.meta["samples"]

    def records(self, split=None, identity=None):
        out = []
        for rec in self.meta["samples"]:
            if split is not None and rec["split"] != split:
                continue
            if identity is not None and rec["identity"] != identity:
                continue
            out.append(rec)
        return out

    def save(self):
        path = Path(self.root) / MANIFEST_NAME
        path.write_text(json.dumps(self.meta, sort_keys=True, indent=2) + "\n")
        return path

    @classmethod
    def load(cls, root):
        root = Path(root)
        path = root if root.name.endswith(".json") else root / MANIFEST_NAME
        meta = json.loads(path.read_text())
        if meta.get("kind") != MANIFEST_KIND:
            raise ValueError(f"not a dataset manifest: {path}")
        manifest = cls(path.parent, meta)
        missing = [r["path"] for r in meta["samples"] if not (path.parent / r["path"]).exists()]
        if missing:
            raise FileNotFoundError(f"manifest references missing sample files, e.g. {missing[0]}")
        seen = {}
        for rec in meta["samples"]:
            key = (rec["identity"], rec["frame_index"])
            if key in seen and seen[key] != rec["split"]:
                raise ValueError("splits are not disjoint")
            seen[key] = rec["split"]
        return manifest


def _split_tag(index, n_total, splits):
    train_end = int(round(splits[0] * n_total))
    val_end = train_end + int(round(splits[1] * n_total))
    if index < train_end:
        return "train"
    if index < val_end:
        return "val"
    return "test"


def synth_dataset(cfg, out_dir):
    """Generate the synthetic dataset; bit-reproducible for a fixed seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    per_identity = cfg.n_samples // len(cfg.identities)
    counts = [per_identity] * len(cfg.identities)
    counts[0] += cfg.n_samples - per_identity * len(cfg.identities)

    train_mfcc_sum = 0.0
    train_mfcc_sq = 0.0
    train_mfcc_n = 0
    for identity, count in zip(cfg.identities, counts):
        ident_dir = out_dir / identity
        ident_dir.mkdir(exist_ok=True)
        for i in range(count):
            sample = build_synthetic_sample(cfg, identity, i)
            rel = f"{identity}/sample_{i:05d}.npz"
            _save_sample_npz(out_dir / rel, sample)
            split = _split_tag(i, count, cfg.splits)
            records.append({"identity": identity, "frame_index": i, "path": rel, "split": split})
            if split == "train":
                values = sample["mfcc"].astype(np.float64)
                train_mfcc_sum += values.sum()
                train_mfcc_sq += (values**2).sum()
                train_mfcc_n += values.size

    mean = train_mfcc_sum / max(train_mfcc_n, 1)
    var = max(train_mfcc_sq / max(train_mfcc_n, 1) - mean**2, 0.0)
    meta = {
        "kind": MANIFEST_KIND,
        "pipeline_version": PIPELINE_VERSION,
        "resolution": cfg.resolution,
        "n_landmarks": cfg.n_landmarks,
        "index_groups": layout_index_groups(cfg.n_landmarks),
        "feature_config": cfg.feature.to_dict(),
        "identities": list(cfg.identities),
        "mfcc_shift": mean,
        "mfcc_scale": max(np.sqrt(var), 1e-6),
        "synth": cfg.to_dict(),
        "samples": records,
    }
    manifest = DatasetManifest(out_dir, meta)
    manifest.save()
    return manifest


def _save_sample_npz(path, sample):
    # np.savez writes fixed 1980 zip timestamps, so bytes stay reproducible
    np.savez(path, **sample)


def load_sample_arrays(manifest, record):
    with np.load(Path(manifest.root) / record["path"]) as data:
        return {key: data[key] for key in data.files}


def load_sample(manifest, record):
    """One record as domain objects, checking cross-component consistency."""
    arrays = load_sample_arrays(manifest, record)
    face = FaceImage(arrays["face"].astype(np.float64))
    if face.resolution != manifest.resolution:
        raise ValueError("sample resolution does not match manifest")
    landmarks = LandmarkSet(arrays["landmarks"], manifest.index_groups)
    if landmarks.n != manifest.n_landmarks:
        raise ValueError("sample landmark count does not match manifest")
    return Sample(
        mfcc=MfccFeature(arrays["mfcc"].astype(np.float64), manifest.feature_config.config_id),
        pose=PoseTriple(*arrays["pose"].tolist()),
        blink=BlinkPair(*arrays["blink"].tolist()),
        landmarks=landmarks,
        face=face,
        identity=record["identity"],
        frame_index=int(record["frame_index"]),
    )


@dataclass
class Sample:
    mfcc: MfccFeature
    pose: PoseTriple
    blink: BlinkPair
    landmarks: LandmarkSet
    face: FaceImage
    identity: str
    frame_index: int


def load_split(manifest, split, identity=None):
    """Stacked arrays for a split: keys mfcc, pose, blink, landmarks, face."""
    records = manifest.records(split=split, identity=identity)
    if not records:
        raise ValueError(f"no samples in split {split!r}" + (f" for identity {identity!r}" if identity else ""))
    stacks = {"mfcc": [], "pose": [], "blink": [], "landmarks": [], "face": [], "mouth": []}
    for rec in records:
        arrays = load_sample_arrays(manifest, rec)
        for key in stacks:
            stacks[key].append(arrays[key])
    return {key: np.stack(vals) for key, vals in stacks.items()}


def batch_indices(n, batch_size, seed, epoch):
    """Shuffled batch index arrays keyed by (seed, epoch); last partial kept."""
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def iterate_batches(manifest, split, batch_size, seed, epoch=0, identity=None):
    """Yield dict batches over a split in (seed, epoch)-keyed shuffle order."""
    data = load_split(manifest, split, identity=identity)
    for idx in batch_indices(len(data["pose"]), batch_size, seed, epoch):
        yield {key: val[idx] for key, val in data.items()}


def blink_ratio(eye_points):
    """Eye height over eye width; scale-invariant, referenced to the
    normalized 256-crop convention."""
    pts = np.asarray(eye_points, dtype=np.float64)
    width = pts[:, 0].max() - pts[:, 0].min()
    if width == 0:
        raise ValueError("degenerate eye")
    return float((pts[:, 1].max() - pts[:, 1].min()) / width)


def sample_bilinear(img, ys, xs, mode="zero"):
    """Bilinear sample of HWC ``img`` at float (ys, xs); ``mode`` selects
    zero fill or edge clamp outside the frame."""
    h, w = img.shape[:2]
    if mode == "edge":
        ys = np.clip(ys, 0.0, h - 1.0)
        xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]

    def read(yi, xi):
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        out = img[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)].astype(np.float64)
        out[~valid] = 0.0
        return out

    return ((1 - fy) * (1 - fx) * read(y0, x0)
            + (1 - fy) * fx * read(y0, x0 + 1)
            + fy * (1 - fx) * read(y0 + 1, x0)
            + fy * fx * read(y0 + 1, x0 + 1))


def resize_bilinear(img, out_h, out_w):
    """Edge-clamped bilinear resize of an HWC image."""
    h, w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    return sample_bilinear(img, grid_y, grid_x, mode="edge")


def crop_face(frame, landmarks_px, out_resolution=256):
    """Crop the 1.4x minimum outer square around the landmark bbox, resize,
    and remap the landmarks to [0, 1] crop coordinates."""
    pts = np.asarray(landmarks_px, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("empty landmarks")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    side = 1.4 * float(max(hi[0] - lo[0], hi[1] - lo[1]))
    if side == 0:
        raise ValueError("degenerate landmark bbox")
    center = (lo + hi) / 2.0
    origin = center - side / 2.0

    ys = origin[1] + (np.arange(out_resolution) + 0.5) * (side / out_resolution) - 0.5
    xs = origin[0] + (np.arange(out_resolution) + 0.5) * (side / out_resolution) - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    crop = sample_bilinear(np.asarray(frame, dtype=np.float64), grid_y, grid_x, mode="zero")
    normalized = (pts - origin) / side
    return crop, normalized


def preprocess_dataset(frames_dir, annotations_path, audio_path, out_dir, feature_cfg=None,
                       out_resolution=256, identity="subject", fps=None, splits=(0.8, 0.1, 0.1)):
    """Build a dataset from extracted frames + per-frame annotations + audio.

    Annotation JSON: {"fps": ..., "index_groups": {...}, "frames": [{"file",
    "landmarks" (frame pixels), "pose": {"yaw","pitch","roll"}}, ...]}.
    """
    from PIL import Image

    feature_cfg = feature_cfg or FeatureConfig()
    frames_dir = Path(frames_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ann = json.loads(Path(annotations_path).read_text())
    groups = {k: list(v) for k, v in ann["index_groups"].items()}
    fps = fps or ann.get("fps", feature_cfg.fps)
    cfg = FeatureConfig(**{**feature_cfg.to_dict(), "fps": fps})

    track = resample(load_wav(audio_path), cfg.sample_rate)
    n_landmarks = None
    records = []
    (out_dir / identity).mkdir(exist_ok=True)
    n_total = len(ann["frames"])

    mfcc_sum, mfcc_sq, mfcc_n = 0.0, 0.0, 0
    for i, frame_ann in enumerate(ann["frames"]):
        img = np.asarray(Image.open(frames_dir / frame_ann["file"]).convert("RGB"), dtype=np.float64)
        img = img / 127.5 - 1.0
        crop, norm_lm = crop_face(img, frame_ann["landmarks"], out_resolution)
        n_landmarks = norm_lm.shape[0]
        pose = np.array([frame_ann["pose"]["yaw"], frame_ann["pose"]["pitch"], frame_ann["pose"]["roll"]])
        blink = np.array([blink_ratio(norm_lm[groups["left_eye"]]),
                          blink_ratio(norm_lm[groups["right_eye"]])])
        mfcc = extract_mfcc(window_for_frame(track, i, cfg), cfg)
        sample = {
            "mfcc": mfcc.values.astype(np.float32),
            "pose": pose,
            "blink": blink,
            "landmarks": norm_lm,
            "face": crop.astype(np.float32),
            "mouth": np.float64(0.0),
            "frame_index": np.int64(i),
        }
        rel = f"{identity}/sample_{i:05d}.npz"
        _save_sample_npz(out_dir / rel, sample)
        split = _split_tag(i, n_total, splits)
        records.append({"identity": identity, "frame_index": i, "path": rel, "split": split})
        if split == "train":
            values = sample["mfcc"].astype(np.float64)
            mfcc_sum += values.sum()
            mfcc_sq += (values**2).sum()
            mfcc_n += values.size

    mean = mfcc_sum / max(mfcc_n, 1)
    var = max(mfcc_sq / max(mfcc_n, 1) - mean**2, 0.0)
    meta = {
        "kind": MANIFEST_KIND,
        "pipeline_version": PIPELINE_VERSION,
        "resolution": out_resolution,
        "n_landmarks": n_landmarks,
        "index_groups": groups,
        "feature_config": cfg.to_dict(),
        "identities": [identity],
        "mfcc_shift": mean,
        "mfcc_scale": max(np.sqrt(var), 1e-6),
        "synth": None,
        "samples": records,
    }
    manifest = DatasetManifest(out_dir, meta)
    manifest.save()
    return manifest
