"""Training loops for the landmark predictor and the face reenactor, plus the
end-to-end pipeline runner.

Both loops alternate one discriminator step with one generator step, use the
published optimizer settings, write JSON-lines logs, and abort with a
diagnostic checkpoint on non-finite losses. Fixed seed + single-threaded
execution reproduces loss trajectories bit-identically.
"""

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .checkpoint import (KIND_LANDMARK_D, KIND_PATCH_D, KIND_PREDICTOR, KIND_REENACTOR,
                         save_checkpoint)
from .data import load_split, batch_indices, make_oracle_detector
from .errors import TrainingDiverged
from .geometry import GeometryPredictor, LandmarkDiscriminator, LandmarkSet, PredictorArch
from .losses import (LossReport, LossWeights, gan_d_loss, gan_d_loss_grads, gan_g_loss,
                     gan_g_loss_grad, l1_loss, masked_l1_loss, masked_l1_loss_grad)
from .metrics import evaluate_generated, frechet_from_images, ssim
from .nn import Adam
from .reenact import PatchArch, PatchDiscriminator, UNetArch, UNetGenerator
from .render import face_mask, rasterize


@dataclass
class StageConfig:
    lr: float
    beta1: float
    beta2: float
    epochs: int
    batch_size: int

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("lr/epochs/batch_size must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")


def default_predictor_stage():
    return StageConfig(lr=3e-4, beta1=0.99, beta2=0.999, epochs=1000, batch_size=32)


def default_reenactor_stage():
    return StageConfig(lr=2e-4, beta1=0.5, beta2=0.999, epochs=100, batch_size=16)


@dataclass
class TrainConfig:
    predictor: StageConfig = field(default_factory=default_predictor_stage)
    reenactor: StageConfig = field(default_factory=default_reenactor_stage)
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    identity: str = None  # None = first identity in the manifest
    with_adversary: bool = True
    dtype: str = "float32"
    point_radius: float = 1.0
    dilation_radius: float = None  # None = resolution / 16
    checkpoint_every: int = 0  # 0 = final only
    sample_grid_every: int = 0
    val_every: int = 1

    def to_dict(self):
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("predictor", "reenactor"):
            if key in d and isinstance(d[key], dict):
                d[key] = StageConfig(**d[key])
        if "weights" in d and isinstance(d["weights"], dict):
            d["weights"] = LossWeights.from_dict(d["weights"])
        return cls(**d)


@dataclass
class TrainHistory:
    entries: list = field(default_factory=list)
    wall_seconds: float = 0.0

    def append(self, entry):
        if self.entries and entry["epoch"] <= self.entries[-1]["epoch"]:
            raise ValueError("epoch indices must increase")
        self.entries.append(entry)

    def loss_trajectory(self):
        """Wall-clock-free view used for determinism comparisons."""
        return [{k: v for k, v in e.items() if k != "wall_s"} for e in self.entries]

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


@dataclass
class TrainResult:
    model: object
    disc: object
    opt_model: Adam
    opt_disc: Adam
    history: TrainHistory
    meta: dict

    def save(self, out_dir, prefix, kinds, arches):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        epoch = self.meta.get("epochs_run", 0)
        paths = {}
        paths["model"] = save_checkpoint(out_dir / f"{prefix}.npz", kinds[0], arches[0],
                                         self.model, epoch, extra=self.meta, optimizer=self.opt_model)
        if self.disc is not None:
            paths["disc"] = save_checkpoint(out_dir / f"{prefix}_disc.npz", kinds[1], arches[1],
                                            self.disc, epoch, extra=self.meta, optimizer=self.opt_disc)
        self.history.write_jsonl(out_dir / f"{prefix}_log.jsonl")
        return paths


def _mean_report(reports):
    if not reports:
        return None
    keys = reports[0].terms.keys()
    terms = {k: float(np.mean([r.terms[k] for r in reports])) for k in keys}
    return LossReport(terms, reports[0].weights)


def _guard_finite(value, label, save_diagnostic):
    if not np.isfinite(value):
        save_diagnostic()
        raise TrainingDiverged(f"non-finite {label}; diagnostic checkpoint written")


class _divergence_guard:
    """Turns non-finite-value errors raised mid-step into TrainingDiverged,
    writing the diagnostic checkpoint first."""

    def __init__(self, save_diagnostic):
        self.save_diagnostic = save_diagnostic

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is ValueError and "non-finite" in str(exc):
            self.save_diagnostic()
            raise TrainingDiverged(f"{exc}; diagnostic checkpoint written") from exc
        return False


def mean_landmark_baseline(train_landmarks, val_landmarks, resolution):
    """Pixel ALE of always predicting the mean training landmark layout."""
    mean_lm = train_landmarks.mean(axis=0, keepdims=True)
    return float(np.mean(np.abs(mean_lm - val_landmarks))) * resolution


class _StepLog:
    """One JSON-lines record per training step (LossReport + step indices)."""

    def __init__(self, path):
        self.fh = open(path, "w") if path is not None else None

    def write(self, epoch, step, report, extra=None):
        if self.fh is None:
            return
        record = {"epoch": epoch, "step": step, **report.to_json_dict()}
        if extra:
            record.update(extra)
        self.fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self):
        if self.fh is not None:
            self.fh.close()
            self.fh = None


def train_predictor(manifest, cfg, with_adversary=None, out_dir=None):
    """Train the landmark predictor (optionally without the adversary)."""
    start = time.perf_counter()
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    if with_adversary is None:
        with_adversary = cfg.with_adversary
    dtype = np.dtype(cfg.dtype).type
    identity = cfg.identity or manifest.identities[0]
    stage = cfg.predictor
    res = manifest.resolution

    train = load_split(manifest, "train", identity=identity)
    val = load_split(manifest, "val", identity=identity)
    t, c = train["mfcc"].shape[1:]
    arch = PredictorArch(
        n_landmarks=manifest.n_landmarks,
        mfcc_shape=(t, c),
        resolution=res,
        mfcc_shift=float(manifest.meta["mfcc_shift"]),
        mfcc_scale=float(manifest.meta["mfcc_scale"]),
        index_groups=manifest.index_groups,
    )
    model = GeometryPredictor(arch, rng=np.random.default_rng([cfg.seed, 11]), dtype=dtype)
    disc = LandmarkDiscriminator(arch.n_landmarks, input_scale=res,
                                 rng=np.random.default_rng([cfg.seed, 12]), dtype=dtype)
    opt_g = Adam(model, stage.lr, stage.beta1, stage.beta2)
    # same training setting as the predictor
    opt_d = Adam(disc, stage.lr, stage.beta1, stage.beta2)

    weights = cfg.weights
    history = TrainHistory()
    gt_train = train["landmarks"]
    n_train = gt_train.shape[0]
    baseline_ale = mean_landmark_baseline(gt_train, val["landmarks"], res)
    meta = {
        "identity": identity,
        "with_adversary": bool(with_adversary),
        "baseline_ale_px": baseline_ale,
        "seed": cfg.seed,
        "epochs_run": 0,
        "train_config": cfg.to_dict(),
    }

    def diagnostic():
        if out_dir is not None:
            save_checkpoint(Path(out_dir) / "predictor_diverged.npz", KIND_PREDICTOR,
                            arch.to_dict(), model, meta["epochs_run"], extra=meta)

    step_log = _StepLog(Path(out_dir) / "predictor_steps.jsonl" if out_dir is not None else None)
    for epoch in range(stage.epochs):
        gen_reports, disc_losses = [], []
        for step, idx in enumerate(batch_indices(n_train, stage.batch_size, cfg.seed, epoch)):
            mfcc, pose, blink = train["mfcc"][idx], train["pose"][idx], train["blink"][idx]
            gt = gt_train[idx]
            guard = _divergence_guard(diagnostic)
            with guard:
                pred = model.predict_batch(mfcc, pose, blink, training=True)

            adv_term = 0.0
            d_points_adv = 0.0
            if with_adversary:
                with guard:
                    disc.zero_grads()
                    real_logits = disc.logits_for_points(gt, training=True)
                    d_real, _ = gan_d_loss_grads(real_logits, real_logits)
                    disc.backward(d_real)
                    fake_logits = disc.logits_for_points(pred, training=True)
                    _, d_fake = gan_d_loss_grads(fake_logits, fake_logits)
                    disc.backward(d_fake)
                    d_loss = gan_d_loss(real_logits, fake_logits)
                _guard_finite(d_loss, "discriminator loss", diagnostic)
                opt_d.step()
                disc_losses.append(d_loss)

                with guard:
                    disc.zero_grads()
                    g_logits = disc.logits_for_points(pred, training=True)
                    adv_term = gan_g_loss(g_logits)
                    d_flat = disc.backward(weights.predictor_adv * gan_g_loss_grad(g_logits))
                    d_points_adv = d_flat.reshape(pred.shape).astype(np.float64) * res

            diff = (pred - gt) * res
            l1 = float(np.mean(np.abs(diff)))
            with guard:
                report = LossReport({"l1": l1, "adv": adv_term},
                                    {"l1": weights.predictor_l1, "adv": weights.predictor_adv})
            _guard_finite(report.total, "predictor loss", diagnostic)
            gen_reports.append(report)
            step_log.write(epoch, step, report,
                           extra={"disc": disc_losses[-1] if disc_losses else None})

            d_pred = weights.predictor_l1 * np.sign(diff) * res / diff.size + d_points_adv
            model.zero_grads()
            model.backward(d_pred.astype(dtype))
            opt_g.step()

        meta["epochs_run"] = epoch + 1
        entry = {"epoch": epoch, "gen": _mean_report(gen_reports).to_json_dict(),
                 "disc": float(np.mean(disc_losses)) if disc_losses else None}
        if cfg.val_every and (epoch % cfg.val_every == 0 or epoch == stage.epochs - 1):
            val_pred = model.predict_batch(val["mfcc"], val["pose"], val["blink"], training=False)
            entry["val_ale_px"] = float(np.mean(np.abs(val_pred - val["landmarks"]))) * res
        history.append(entry)
        if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(Path(out_dir) / f"predictor_epoch{epoch + 1:05d}.npz", KIND_PREDICTOR,
                            arch.to_dict(), model, epoch + 1, extra=meta, optimizer=opt_g)
        if out_dir is not None and cfg.sample_grid_every and (epoch + 1) % cfg.sample_grid_every == 0:
            _save_predictor_grid(Path(out_dir) / f"predictor_epoch{epoch + 1:05d}.png",
                                 model, val, manifest.index_groups, res)

    step_log.close()
    history.wall_seconds = time.perf_counter() - start
    result = TrainResult(model, disc, opt_g, opt_d, history, meta)
    if out_dir is not None:
        result.save(out_dir, "predictor", (KIND_PREDICTOR, KIND_LANDMARK_D),
                    (arch.to_dict(), disc.arch_dict()))
    return result


def precompute_reenactor_inputs(data, index_groups, resolution, point_radius, dilation_radius):
    """Rasterized landmark images and dilated face masks, one per sample."""
    rasters, masks = [], []
    for lm in data["landmarks"]:
        lm_set = LandmarkSet(lm, index_groups)
        rasters.append(rasterize(lm_set, resolution, point_radius).pixels)
        masks.append(face_mask(lm_set, resolution, dilation_radius).pixels)
    return np.stack(rasters)[:, None].astype(np.float32), np.stack(masks)[:, None].astype(np.float32)


def train_reenactor(manifest, cfg, out_dir=None):
    """Train the landmark-image-to-face generator with its patch discriminator."""
    start = time.perf_counter()
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    dtype = np.dtype(cfg.dtype).type
    identity = cfg.identity or manifest.identities[0]
    stage = cfg.reenactor
    res = manifest.resolution
    dilation = cfg.dilation_radius if cfg.dilation_radius is not None else res / 16

    train = load_split(manifest, "train", identity=identity)
    val = load_split(manifest, "val", identity=identity)
    groups = manifest.index_groups
    train_l, train_m = precompute_reenactor_inputs(train, groups, res, cfg.point_radius, dilation)
    val_l, val_m = precompute_reenactor_inputs(val, groups, res, cfg.point_radius, dilation)
    train_i = np.moveaxis(train["face"], 3, 1).astype(np.float32)
    val_i = np.moveaxis(val["face"], 3, 1).astype(np.float32)

    g_arch = UNetArch(resolution=res)
    d_arch = PatchArch(resolution=res)
    gen = UNetGenerator(g_arch, rng=np.random.default_rng([cfg.seed, 21]), dtype=dtype)
    disc = PatchDiscriminator(d_arch, rng=np.random.default_rng([cfg.seed, 22]), dtype=dtype)
    opt_g = Adam(gen, stage.lr, stage.beta1, stage.beta2)
    opt_d = Adam(disc, stage.lr, stage.beta1, stage.beta2)

    weights = cfg.weights
    history = TrainHistory()
    n_train = train_i.shape[0]
    mean_face = train_i.mean(axis=0, keepdims=True)
    baseline_masked = masked_l1_loss(np.broadcast_to(mean_face, val_i.shape), val_i, val_m)
    meta = {
        "identity": identity,
        "baseline_masked_l1": float(baseline_masked),
        "seed": cfg.seed,
        "epochs_run": 0,
        "train_config": cfg.to_dict(),
    }

    def diagnostic():
        if out_dir is not None:
            save_checkpoint(Path(out_dir) / "reenactor_diverged.npz", KIND_REENACTOR,
                            g_arch.to_dict(), gen, meta["epochs_run"], extra=meta)

    step_log = _StepLog(Path(out_dir) / "reenactor_steps.jsonl" if out_dir is not None else None)
    for epoch in range(stage.epochs):
        gen_reports, disc_losses = [], []
        for step, idx in enumerate(batch_indices(n_train, stage.batch_size, cfg.seed, epoch)):
            lm_img = train_l[idx].astype(dtype)
            gt_img = train_i[idx].astype(dtype)
            mask = train_m[idx].astype(dtype)
            guard = _divergence_guard(diagnostic)
            with guard:
                fake = gen.forward(lm_img, training=True)

            with guard:
                disc.zero_grads()
                real_logits = disc.forward(np.concatenate([lm_img, gt_img], axis=1), training=True)
                d_real, _ = gan_d_loss_grads(real_logits, real_logits)
                disc.backward(d_real)
                fake_logits = disc.forward(np.concatenate([lm_img, fake], axis=1), training=True)
                _, d_fake = gan_d_loss_grads(fake_logits, fake_logits)
                disc.backward(d_fake)
                d_loss = gan_d_loss(real_logits, fake_logits)
            _guard_finite(d_loss, "discriminator loss", diagnostic)
            opt_d.step()
            disc_losses.append(d_loss)

            with guard:
                disc.zero_grads()
                g_logits = disc.forward(np.concatenate([lm_img, fake], axis=1), training=True)
                adv = gan_g_loss(g_logits)
                d_disc_in = disc.backward(gan_g_loss_grad(g_logits) * weights.reenactor_adv)
                d_fake_adv = d_disc_in[:, lm_img.shape[1]:]

                l1 = l1_loss(fake, gt_img)
                masked = masked_l1_loss(fake, gt_img, mask)
                report = LossReport({"l1": l1, "mask": masked, "adv": adv},
                                    {"l1": weights.reenactor_l1, "mask": weights.reenactor_mask,
                                     "adv": weights.reenactor_adv})
            _guard_finite(report.total, "reenactor loss", diagnostic)
            gen_reports.append(report)
            step_log.write(epoch, step, report, extra={"disc": d_loss})

            d_fake_total = (weights.reenactor_l1 * np.sign(fake - gt_img) / fake.size
                            + weights.reenactor_mask * masked_l1_loss_grad(fake, gt_img, mask)
                            + d_fake_adv)
            gen.zero_grads()
            gen.backward(d_fake_total.astype(dtype))
            opt_g.step()

        meta["epochs_run"] = epoch + 1
        entry = {"epoch": epoch, "gen": _mean_report(gen_reports).to_json_dict(),
                 "disc": float(np.mean(disc_losses))}
        if cfg.val_every and (epoch % cfg.val_every == 0 or epoch == stage.epochs - 1):
            val_fake = _generate_in_batches(gen, val_l, dtype)
            entry["val_masked_l1"] = masked_l1_loss(val_fake, val_i, val_m)
            entry["val_l1"] = l1_loss(val_fake, val_i)
        history.append(entry)
        if out_dir is not None and cfg.sample_grid_every and (epoch + 1) % cfg.sample_grid_every == 0:
            _save_sample_grid(Path(out_dir) / f"reenactor_epoch{epoch + 1:05d}.png",
                              gen, val_l[:8], val_i[:8], dtype)

    step_log.close()
    history.wall_seconds = time.perf_counter() - start
    result = TrainResult(gen, disc, opt_g, opt_d, history, meta)
    if out_dir is not None:
        result.save(out_dir, "reenactor", (KIND_REENACTOR, KIND_PATCH_D),
                    (g_arch.to_dict(), d_arch.to_dict()))
    return result


def _save_predictor_grid(path, model, val, index_groups, resolution, n=8):
    """Predicted (red) vs ground-truth (green) landmark rasters, side by side."""
    from PIL import Image

    pred = model.predict_batch(val["mfcc"][:n], val["pose"][:n], val["blink"][:n], training=False)
    tiles = []
    for p, g in zip(pred, val["landmarks"][:n]):
        red = rasterize(LandmarkSet(np.asarray(p, dtype=np.float64), index_groups),
                        resolution, 1.0).pixels
        green = rasterize(LandmarkSet(g, index_groups), resolution, 1.0).pixels
        tile = np.zeros((resolution, resolution, 3), dtype=np.uint8)
        tile[:, :, 0] = red * 255
        tile[:, :, 1] = green * 255
        tiles.append(tile)
    Image.fromarray(np.concatenate(tiles, axis=1)).save(path)


def _generate_in_batches(gen, lm_images, dtype, batch=32):
    outs = []
    for i in range(0, lm_images.shape[0], batch):
        outs.append(gen.forward(lm_images[i : i + batch].astype(dtype), training=False))
    return np.concatenate(outs)


def _save_sample_grid(path, gen, lm_images, gt_images, dtype):
    from PIL import Image

    fake = _generate_in_batches(gen, lm_images, dtype)
    rows = []
    for lm, fk, gt in zip(lm_images, fake, gt_images):
        lm_rgb = np.repeat(lm, 3, axis=0)
        strip = np.concatenate([lm_rgb * 2 - 1, fk, gt], axis=2)
        rows.append(strip)
    grid = np.concatenate(rows, axis=1)
    arr = np.clip((np.moveaxis(grid, 0, 2) + 1) * 127.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.std() == 0 or y.std() == 0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


def run_pipeline(manifest, cfg, out_dir=None, predictor_result=None, reenactor_result=None,
                 eval_split="test"):
    """Train both stages (or reuse results), generate faces for the held-out
    split from its driving signals, and evaluate with the oracle detector."""
    identity = cfg.identity or manifest.identities[0]
    res = manifest.resolution
    dtype = np.dtype(cfg.dtype).type
    if predictor_result is None:
        predictor_result = train_predictor(manifest, cfg, out_dir=out_dir)
    if reenactor_result is None:
        reenactor_result = train_reenactor(manifest, cfg, out_dir=out_dir)
    model, gen = predictor_result.model, reenactor_result.model

    data = load_split(manifest, eval_split, identity=identity)
    groups = manifest.index_groups
    pred_lm = model.predict_batch(data["mfcc"], data["pose"], data["blink"], training=False)
    rasters = np.stack([rasterize(LandmarkSet(lm, groups), res, cfg.point_radius).pixels
                        for lm in pred_lm])[:, None].astype(np.float32)
    generated = _generate_in_batches(gen, rasters, dtype)
    gen_hwc = np.moveaxis(generated.astype(np.float64), 1, 3)

    detector = make_oracle_detector(res, manifest.n_landmarks, manifest.identities)
    report = evaluate_generated(
        [(gen_hwc[i], data["landmarks"][i], data["pose"][i], data["blink"][i])
         for i in range(gen_hwc.shape[0])],
        detector, res)

    gt_hwc = data["face"].astype(np.float64)
    report.ssim = float(np.mean([ssim(gen_hwc[i], gt_hwc[i]) for i in range(gen_hwc.shape[0])]))
    report.frechet = frechet_from_images(gt_hwc, gen_hwc)

    decoded = [detector(gen_hwc[i]) for i in range(gen_hwc.shape[0])]
    extras = {"identity": identity, "n_eval": int(gen_hwc.shape[0])}
    detected_idx = [i for i, d in enumerate(decoded) if d.detected]
    if detected_idx:
        dec_pose = np.stack([decoded[i].pose for i in detected_idx])
        dec_blink = np.stack([decoded[i].blink for i in detected_idx])
        drive_pose = data["pose"][detected_idx]
        drive_blink = data["blink"][detected_idx]
        extras["pose_correlation"] = {name: pearson(dec_pose[:, k], drive_pose[:, k])
                                      for k, name in enumerate(("yaw", "pitch", "roll"))}
        extras["blink_correlation"] = {name: pearson(dec_blink[:, k], drive_blink[:, k])
                                       for k, name in enumerate(("left", "right"))}

    # driving signals borrowed from another identity (cross-identity reenactment)
    others = [name for name in manifest.identities if name != identity]
    if others:
        drive = load_split(manifest, eval_split, identity=others[0])
        take = min(50, drive["pose"].shape[0])
        cross_lm = model.predict_batch(drive["mfcc"][:take], drive["pose"][:take],
                                       drive["blink"][:take], training=False)
        cross_rasters = np.stack([rasterize(LandmarkSet(lm, groups), res, cfg.point_radius).pixels
                                  for lm in cross_lm])[:, None].astype(np.float32)
        cross_gen = np.moveaxis(_generate_in_batches(gen, cross_rasters, dtype).astype(np.float64),
                                1, 3)
        cross_decoded = [detector(cross_gen[i]) for i in range(take)]
        hits = [i for i, d in enumerate(cross_decoded) if d.detected]
        if hits:
            cross_pose = np.stack([cross_decoded[i].pose for i in hits])
            extras["cross_identity"] = {
                "driver": others[0],
                "pose_correlation": {name: pearson(cross_pose[:, k], drive["pose"][hits, k])
                                     for k, name in enumerate(("yaw", "pitch", "roll"))},
            }

    # discriminator separation: real landmarks vs fresh-init (early) predictions
    disc = getattr(predictor_result, "disc", None)
    if disc is not None:
        early = GeometryPredictor(model.arch, rng=np.random.default_rng([cfg.seed, 11]),
                                  dtype=dtype)
        early_lm = early.predict_batch(data["mfcc"], data["pose"], data["blink"], training=False)
        sig = lambda z: 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))
        extras["disc_separation"] = {
            "real_mean_sigmoid": float(np.mean(sig(disc.logits_for_points(data["landmarks"])))),
            "early_fake_mean_sigmoid": float(np.mean(sig(disc.logits_for_points(early_lm)))),
        }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = {"report": report.to_json_dict(), "extras": extras}
        (out / "report.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return report, extras, predictor_result, reenactor_result
