"""Command-line interface.

Binary tensors are exchanged as standard .npy files (self-describing shape +
dtype header); landmark JSON and manifest schemas are documented in the
repository README.
"""

import json
from pathlib import Path
from types import SimpleNamespace

import click
import numpy as np

from .audio import FeatureConfig, extract_mfcc, load_wav, resample, window_for_frame
from .checkpoint import KIND_PREDICTOR, KIND_REENACTOR, load_checkpoint, restore_model
from .data import DatasetManifest, SynthConfig, preprocess_dataset, synth_dataset
from .geometry import LandmarkSet
from .render import rasterize
from .training import TrainConfig, run_pipeline, train_predictor, train_reenactor


@click.group()
def main():
    """Audio/pose/blink-driven face reenactment toolkit."""


def _load_json(path):
    return json.loads(Path(path).read_text())


@main.command()
@click.option("--in", "wav_path", required=True, type=click.Path(exists=True), help="mono WAV input")
@click.option("--frame", "frame_index", required=True, type=int, help="video frame index")
@click.option("--config", "config_path", type=click.Path(exists=True), help="feature config JSON")
@click.option("--out", "out_path", required=True, type=click.Path(), help="output .npy file")
def mfcc(wav_path, frame_index, config_path, out_path):
    """Extract the MFCC matrix for one frame window."""
    cfg = FeatureConfig.from_dict(_load_json(config_path)) if config_path else FeatureConfig()
    track = resample(load_wav(wav_path), cfg.sample_rate)
    feature = extract_mfcc(window_for_frame(track, frame_index, cfg), cfg)
    np.save(out_path, feature.values)
    click.echo(f"wrote {feature.values.shape} mfcc matrix to {out_path}")


@main.command()
@click.option("--landmarks", "landmarks_path", required=True, type=click.Path(exists=True),
              help="landmark JSON: {points, index_groups}")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--resolution", default=256, show_default=True)
@click.option("--point-radius", default=1.0, show_default=True)
def render(landmarks_path, out_path, resolution, point_radius):
    """Rasterize a landmark JSON file to a PNG."""
    from PIL import Image

    payload = _load_json(landmarks_path)
    lm = LandmarkSet(np.asarray(payload["points"], dtype=np.float64),
                     payload.get("index_groups", {}))
    image = rasterize(lm, resolution, point_radius)
    Image.fromarray(image.pixels * np.uint8(255)).save(out_path)
    click.echo(f"wrote {resolution}x{resolution} landmark image to {out_path}")


@main.command("synth-data")
@click.option("--config", "config_path", type=click.Path(exists=True), help="SynthConfig JSON")
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth_data(config_path, out_dir):
    """Generate the synthetic dataset."""
    cfg = SynthConfig.from_dict(_load_json(config_path)) if config_path else SynthConfig()
    manifest = synth_dataset(cfg, out_dir)
    click.echo(f"wrote {len(manifest.samples)} samples to {out_dir}")


@main.command()
@click.option("--frames", "frames_dir", required=True, type=click.Path(exists=True))
@click.option("--annotations", "annotations_path", required=True, type=click.Path(exists=True))
@click.option("--audio", "audio_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), help="feature config JSON")
@click.option("--resolution", default=256, show_default=True)
@click.option("--identity", default="subject", show_default=True)
def preprocess(frames_dir, annotations_path, audio_path, out_dir, config_path, resolution, identity):
    """Build a dataset from frames + annotations + audio."""
    cfg = FeatureConfig.from_dict(_load_json(config_path)) if config_path else None
    manifest = preprocess_dataset(frames_dir, annotations_path, audio_path, out_dir,
                                  feature_cfg=cfg, out_resolution=resolution, identity=identity)
    click.echo(f"wrote {len(manifest.samples)} samples to {out_dir}")


def _train_config(config_path):
    return TrainConfig.from_dict(_load_json(config_path)) if config_path else TrainConfig()


@main.command("train-predictor")
@click.option("--config", "config_path", type=click.Path(exists=True), help="TrainConfig JSON")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--adversary/--no-adversary", default=None, help="override the config's adversary flag")
def train_predictor_cmd(config_path, data_dir, out_dir, adversary):
    """Train the landmark predictor."""
    manifest = DatasetManifest.load(data_dir)
    result = train_predictor(manifest, _train_config(config_path),
                             with_adversary=adversary, out_dir=out_dir)
    final = result.history.entries[-1] if result.history.entries else {}
    click.echo(f"trained {result.meta['epochs_run']} epochs; "
               f"val ALE {final.get('val_ale_px', float('nan')):.3f} px "
               f"(mean-landmark baseline {result.meta['baseline_ale_px']:.3f} px)")


@main.command("train-reenactor")
@click.option("--config", "config_path", type=click.Path(exists=True), help="TrainConfig JSON")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def train_reenactor_cmd(config_path, data_dir, out_dir):
    """Train the face reenactor."""
    manifest = DatasetManifest.load(data_dir)
    result = train_reenactor(manifest, _train_config(config_path), out_dir=out_dir)
    final = result.history.entries[-1] if result.history.entries else {}
    click.echo(f"trained {result.meta['epochs_run']} epochs; "
               f"val masked L1 {final.get('val_masked_l1', float('nan')):.4f} "
               f"(mean-image baseline {result.meta['baseline_masked_l1']:.4f})")


@main.command("eval")
@click.option("--checkpoint", "ckpt_dir", required=True, type=click.Path(exists=True),
              help="training output dir holding predictor.npz and reenactor.npz")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), help="TrainConfig JSON")
@click.option("--split", default="test", show_default=True)
def eval_cmd(ckpt_dir, data_dir, out_path, config_path, split):
    """Evaluate trained checkpoints on a dataset split."""
    manifest = DatasetManifest.load(data_dir)
    ckpt_dir = Path(ckpt_dir)
    predictor = restore_model(load_checkpoint(ckpt_dir / "predictor.npz", KIND_PREDICTOR))
    reenactor = restore_model(load_checkpoint(ckpt_dir / "reenactor.npz", KIND_REENACTOR))
    shim = SimpleNamespace
    report, extras, _, _ = run_pipeline(
        manifest, _train_config(config_path),
        predictor_result=shim(model=predictor), reenactor_result=shim(model=reenactor),
        eval_split=split)
    payload = {"report": report.to_json_dict(), "extras": extras}
    Path(out_path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    click.echo(json.dumps(payload["report"], sort_keys=True))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="server config JSON (identities -> checkpoint paths)")
@click.option("--port", default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(config_path, port, host):
    """Serve the trained pipeline over HTTP."""
    import uvicorn

    from .service import create_app, load_server_config

    app = create_app(load_server_config(config_path))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
