"""HTTP inference service: audio + pose + blink in, landmarks and face out.

Endpoints (all JSON, schemas versioned under /v1):
  POST /v1/reenact   one frame through the full pipeline
  POST /v1/sweep     vary exactly one control input over a range
  GET  /v1/stats     rolling throughput / latency report
  GET  /v1/config    feature config, pose ranges, identities
  GET  /healthz      liveness

Model parameters are never mutated; per-identity inference is serialized
behind a lock so concurrent requests match serial execution.
"""

import base64
import binascii
import collections
import io
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from .audio import AudioTrack, FeatureConfig, extract_mfcc, resample
from .checkpoint import KIND_PREDICTOR, KIND_REENACTOR, load_checkpoint, restore_model
from .geometry import PITCH_RANGE, ROLL_RANGE, YAW_RANGE, LandmarkSet
from .render import rasterize
from . import PIPELINE_VERSION

SWEEP_VARIABLES = ("yaw", "pitch", "roll", "blink")
STAGES = ("predict", "render", "reenact")


class PoseBody(BaseModel):
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0


class BlinkBody(BaseModel):
    left: float = Field(0.3, ge=0.0)
    right: float = Field(0.3, ge=0.0)


class ReenactRequest(BaseModel):
    identity: str
    pose: PoseBody = Field(default_factory=PoseBody)
    blink: BlinkBody = Field(default_factory=BlinkBody)
    audio_pcm_b64: Optional[str] = None
    sample_rate: Optional[int] = None
    mfcc: Optional[list] = None
    frame_index: int = 0
    want_landmarks: bool = True


class SweepRequest(BaseModel):
    variable: str
    range: tuple[float, float]
    steps: int = Field(ge=1)
    base: ReenactRequest


@dataclass
class IdentityModels:
    predictor: object
    reenactor: object
    lock: threading.Lock


class StageStats:
    def __init__(self, window=1024):
        self.count = 0
        self.busy_seconds = 0.0
        self.recent_ms = collections.deque(maxlen=window)
        self.lock = threading.Lock()

    def record(self, seconds):
        with self.lock:
            self.count += 1
            self.busy_seconds += seconds
            self.recent_ms.append(seconds * 1000.0)

    def report(self):
        with self.lock:
            if self.count == 0:
                return {"count": 0, "fps": 0.0, "p50_ms": 0.0, "p90_ms": 0.0, "p99_ms": 0.0}
            recent = np.asarray(self.recent_ms)
            return {
                "count": self.count,
                "fps": self.count / self.busy_seconds if self.busy_seconds > 0 else 0.0,
                "p50_ms": float(np.percentile(recent, 50)),
                "p90_ms": float(np.percentile(recent, 90)),
                "p99_ms": float(np.percentile(recent, 99)),
            }


def _error(status, code, message):
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def _png_b64(array_u8):
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(array_u8).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


class ReenactService:
    def __init__(self, config):
        self.feature_cfg = FeatureConfig.from_dict(config.get("feature_config", {})) \
            if config.get("feature_config") else FeatureConfig()
        self.resolution = int(config.get("resolution", 64))
        self.point_radius = float(config.get("point_radius", 1.0))
        self.identities = {}
        self.failed = {}
        root = Path(config.get("root", "."))
        for name, paths in config.get("identities", {}).items():
            try:
                pred = restore_model(load_checkpoint(root / paths["predictor"], KIND_PREDICTOR))
                reen = restore_model(load_checkpoint(root / paths["reenactor"], KIND_REENACTOR))
                if reen.arch.resolution != self.resolution:
                    raise ValueError("reenactor resolution does not match service config")
                self.identities[name] = IdentityModels(pred, reen, threading.Lock())
            except Exception as exc:  # noqa: BLE001 - registered as unavailable
                self.failed[name] = str(exc)
        self.start_time = time.time()
        self.request_count = 0
        self.count_lock = threading.Lock()
        self.stages = {name: StageStats() for name in STAGES}

    def _models_for(self, identity):
        if identity in self.identities:
            return self.identities[identity]
        if identity in self.failed:
            raise _error(503, "model_not_loaded",
                         f"models for {identity!r} failed to load: {self.failed[identity]}")
        raise _error(404, "unknown_identity", f"identity {identity!r} is not configured")

    def _mfcc_from_request(self, req):
        cfg = self.feature_cfg
        if (req.audio_pcm_b64 is None) == (req.mfcc is None):
            raise _error(422, "malformed_audio",
                         "provide exactly one of audio_pcm_b64 or mfcc")
        if req.mfcc is not None:
            values = np.asarray(req.mfcc, dtype=np.float64)
            if values.shape != (cfg.n_fft_frames, cfg.n_mfcc):
                raise _error(422, "malformed_audio",
                             f"mfcc must have shape ({cfg.n_fft_frames}, {cfg.n_mfcc})")
            if not np.all(np.isfinite(values)):
                raise _error(422, "malformed_audio", "non-finite mfcc values")
            return values
        try:
            raw = base64.b64decode(req.audio_pcm_b64, validate=True)
            samples = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        except (binascii.Error, ValueError) as exc:
            raise _error(422, "malformed_audio", f"PCM decode failed: {exc}") from exc
        if samples.size == 0:
            raise _error(422, "malformed_audio", "empty PCM payload")
        if not np.all(np.isfinite(samples)):
            raise _error(422, "malformed_audio", "non-finite samples")
        rate = req.sample_rate or cfg.sample_rate
        if rate <= 0:
            raise _error(422, "malformed_audio", "sample_rate must be positive")
        track = AudioTrack(samples, rate)
        if rate != cfg.sample_rate:
            track = resample(track, cfg.sample_rate)
        if track.samples.size != cfg.window_length:
            window = np.zeros(cfg.window_length)
            n = track.samples.size
            if n >= cfg.window_length:  # center crop
                start = (n - cfg.window_length) // 2
                window[:] = track.samples[start : start + cfg.window_length]
            else:  # center pad
                start = (cfg.window_length - n) // 2
                window[start : start + n] = track.samples
            track = AudioTrack(window, cfg.sample_rate)
        return extract_mfcc(track, cfg).values

    def reenact_one(self, req):
        models = self._models_for(req.identity)
        mfcc = self._mfcc_from_request(req)
        pose = np.array([[req.pose.yaw, req.pose.pitch, req.pose.roll]])
        blink = np.array([[req.blink.left, req.blink.right]])

        t_start = time.perf_counter()
        with models.lock:
            t0 = time.perf_counter()
            points = models.predictor.predict_batch(mfcc[None], pose, blink, training=False)[0]
            t_predict = time.perf_counter() - t0

            t0 = time.perf_counter()
            lm_set = LandmarkSet(points.astype(np.float64),
                                 dict(models.predictor.arch.index_groups))
            lm_img = rasterize(lm_set, self.resolution, self.point_radius)
            t_render = time.perf_counter() - t0

            t0 = time.perf_counter()
            face = models.reenactor.forward(
                lm_img.pixels.astype(models.reenactor.dtype)[None, None], training=False)[0]
            t_reenact = time.perf_counter() - t0
        total = time.perf_counter() - t_start

        self.stages["predict"].record(t_predict)
        self.stages["render"].record(t_render)
        self.stages["reenact"].record(t_reenact)

        face_u8 = np.clip((np.moveaxis(face.astype(np.float64), 0, 2) + 1) * 127.5, 0, 255).astype(np.uint8)
        response = {
            "identity": req.identity,
            "landmarks": [[float(x), float(y)] for x, y in points],
            "face_png_b64": _png_b64(face_u8),
            "latency_ms": {
                "predict": t_predict * 1000.0,
                "render": t_render * 1000.0,
                "reenact": t_reenact * 1000.0,
                "total": total * 1000.0,
            },
        }
        if req.want_landmarks:
            response["landmark_png_b64"] = _png_b64(lm_img.pixels * np.uint8(255))
        return response

    def sweep(self, req):
        if req.variable not in SWEEP_VARIABLES:
            raise _error(422, "unknown_variable",
                         f"variable must be one of {', '.join(SWEEP_VARIABLES)}")
        lo, hi = req.range
        values = [lo] if req.steps == 1 else np.linspace(lo, hi, req.steps).tolist()
        frames = []
        for value in values:
            frame_req = req.base.model_copy(deep=True)
            if req.variable == "blink":
                frame_req.blink.left = value
                frame_req.blink.right = value
            else:
                setattr(frame_req.pose, req.variable, value)
            frames.append(self.reenact_one(frame_req))
        return {"variable": req.variable, "values": [float(v) for v in values], "frames": frames}

    def stats(self):
        return {
            "pipeline_version": PIPELINE_VERSION,
            "uptime_s": time.time() - self.start_time,
            "request_count": self.request_count,
            "stages": {name: stats.report() for name, stats in self.stages.items()},
        }


def create_app(config):
    service = ReenactService(config)
    app = FastAPI(title="apbface inference service", version=PIPELINE_VERSION)
    app.state.service = service

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz():
        return "ok"

    @app.get("/v1/config")
    def get_config():
        return {
            "pipeline_version": PIPELINE_VERSION,
            "resolution": service.resolution,
            "feature_config": service.feature_cfg.to_dict(),
            "identities": sorted(service.identities) + sorted(service.failed),
            "pose_ranges": {"yaw": YAW_RANGE, "pitch": PITCH_RANGE, "roll": ROLL_RANGE},
        }

    @app.post("/v1/reenact")
    def reenact_endpoint(req: ReenactRequest):
        with service.count_lock:
            service.request_count += 1
        return service.reenact_one(req)

    @app.post("/v1/sweep")
    def sweep_endpoint(req: SweepRequest):
        with service.count_lock:
            service.request_count += 1
        return service.sweep(req)

    @app.get("/v1/stats")
    def stats_endpoint():
        return service.stats()

    static_dir = config.get("static_dir")
    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")
    return app


def load_server_config(path):
    path = Path(path)
    config = json.loads(path.read_text())
    config.setdefault("root", str(path.parent))
    return config
