"""apbface: audio/pose/blink-driven face reenactment toolkit.

Two-stage pipeline: a geometry predictor regresses facial landmarks from an
audio window plus head-pose and eye-blink control signals, and a face
reenactor turns the rasterized landmark image into a face image. Ships with
synthetic dataset tooling, training harnesses, an evaluation suite, and an
HTTP inference service.
"""

PIPELINE_VERSION = "apbface/0.1.0"

__version__ = "0.1.0"
