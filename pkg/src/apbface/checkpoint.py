"""Self-describing checkpoint container: one .npz per network holding a JSON
meta entry (kind, arch config, epoch, pipeline version), parameter/buffer
tensors, and optionally optimizer state. Loads reject kind or arch mismatches.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import PIPELINE_VERSION
from .errors import ConfigError
from .geometry import GeometryPredictor, LandmarkDiscriminator, PredictorArch
from .nn import Adam
from .reenact import PatchArch, PatchDiscriminator, UNetArch, UNetGenerator

KIND_PREDICTOR = "geometry-predictor"
KIND_LANDMARK_D = "landmark-discriminator"
KIND_REENACTOR = "face-reenactor"
KIND_PATCH_D = "patch-discriminator"


@dataclass
class CheckpointBundle:
    meta: dict
    model_state: dict
    opt_state: dict | None

    @property
    def kind(self):
        return self.meta["kind"]

    @property
    def arch(self):
        return self.meta["arch"]

    @property
    def epoch(self):
        return self.meta["epoch"]


def save_checkpoint(path, kind, arch, model, epoch, extra=None, optimizer=None):
    meta = {
        "kind": kind,
        "arch": arch,
        "epoch": int(epoch),
        "pipeline_version": PIPELINE_VERSION,
        "dtype": np.dtype(model.dtype).name,
        "extra": extra or {},
    }
    payload = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    payload.update({f"model/{k}": v for k, v in model.state().items()})
    if optimizer is not None:
        payload.update({f"opt/{k}": v for k, v in optimizer.state().items()})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **payload)
    return path


def load_checkpoint(path, expected_kind=None):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        model_state = {k[6:]: data[k] for k in data.files if k.startswith("model/")}
        opt_state = {k[4:]: data[k] for k in data.files if k.startswith("opt/")}
    if expected_kind is not None and meta["kind"] != expected_kind:
        raise ConfigError(f"checkpoint kind {meta['kind']!r}, expected {expected_kind!r}")
    return CheckpointBundle(meta, model_state, opt_state or None)


_BUILDERS = {
    KIND_PREDICTOR: (PredictorArch, GeometryPredictor),
    KIND_LANDMARK_D: (None, None),  # handled specially (scalar ctor args)
    KIND_REENACTOR: (UNetArch, UNetGenerator),
    KIND_PATCH_D: (PatchArch, PatchDiscriminator),
}


def restore_model(bundle, expect_arch=None):
    """Rebuild the network a checkpoint describes and load its weights."""
    dtype = np.dtype(bundle.meta.get("dtype", "float32")).type
    if expect_arch is not None and expect_arch != bundle.arch:
        raise ConfigError("checkpoint arch config does not match the requested config")
    if bundle.kind == KIND_LANDMARK_D:
        arch = bundle.arch
        model = LandmarkDiscriminator(arch["n_landmarks"], arch["input_scale"], dtype=dtype,
                                      widths=arch.get("widths"))
    else:
        arch_cls, model_cls = _BUILDERS[bundle.kind]
        model = model_cls(arch_cls.from_dict(bundle.arch), dtype=dtype)
    model.load_state(bundle.model_state)
    return model


def restore_optimizer(bundle, model, lr, beta1, beta2):
    opt = Adam(model, lr, beta1, beta2)
    if bundle.opt_state is not None:
        opt.load_state(bundle.opt_state)
    return opt
