"""Loss functions: L1, masked L1, logit-safe GAN terms, and the two
composite objectives (landmark predictor, face reenactor).

GAN terms use the numerically safe binary cross-entropy on logits
(softplus via logaddexp), in the non-saturating generator form. Each loss has
a paired gradient helper so the training loops can backpropagate without an
autograd layer.
"""

from dataclasses import dataclass, field

import numpy as np

PREDICTOR_L1_WEIGHT = 100.0
PREDICTOR_ADV_WEIGHT = 0.1
REENACTOR_L1_WEIGHT = 100.0
REENACTOR_MASK_WEIGHT = 100.0
REENACTOR_ADV_WEIGHT = 1.0

TOTAL_REL_TOL = 1e-9


@dataclass
class LossWeights:
    predictor_l1: float = PREDICTOR_L1_WEIGHT
    predictor_adv: float = PREDICTOR_ADV_WEIGHT
    reenactor_l1: float = REENACTOR_L1_WEIGHT
    reenactor_mask: float = REENACTOR_MASK_WEIGHT
    reenactor_adv: float = REENACTOR_ADV_WEIGHT

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be non-negative")

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class LossReport:
    terms: dict
    weights: dict
    total: float = field(default=None)

    def __post_init__(self):
        recomposed = sum(self.weights[k] * v for k, v in self.terms.items())
        if self.total is None:
            self.total = recomposed
        if not np.isfinite(self.total):
            raise ValueError("non-finite loss total")
        if abs(self.total - recomposed) > TOTAL_REL_TOL * max(1.0, abs(self.total)):
            raise ValueError("loss total does not recompose from weighted terms")

    def to_json_dict(self):
        return {"terms": {k: float(v) for k, v in self.terms.items()},
                "weights": {k: float(v) for k, v in self.weights.items()},
                "total": float(self.total)}


def _arr(x):
    pixels = getattr(x, "pixels", None)
    if pixels is not None:
        return np.asarray(pixels, dtype=np.float64)
    points = getattr(x, "points", None)
    if points is not None:
        return np.asarray(points, dtype=np.float64)
    return np.asarray(x)


def l1_loss(a, b):
    """Mean absolute difference."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def l1_loss_grad(a, b):
    """d(l1_loss)/da."""
    return np.sign(a - b) / a.size


def masked_l1_loss(a, b, mask):
    """Mean absolute difference restricted to mask-white pixels.

    The mask broadcasts against the images; the mean is normalized by the
    white-pixel count times the number of broadcast channels.
    """
    a, b, m = _arr(a), _arr(b), _arr(mask)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    m = np.broadcast_to(m, a.shape)
    denom = float(m.sum())
    if denom == 0:
        raise ValueError("empty mask")
    return float((np.abs(a - b) * m).sum() / denom)


def masked_l1_loss_grad(a, b, mask):
    m = np.broadcast_to(np.asarray(mask, dtype=a.dtype), a.shape)
    denom = m.sum()
    if denom == 0:
        raise ValueError("empty mask")
    return np.sign(a - b) * m / denom


def _softplus(x):
    # log(1 + e^x), safe for large |x|
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _check_logits(x):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite logit")
    return x


def gan_d_loss(real_logits, fake_logits):
    """0.5 * [BCE(real, 1) + BCE(fake, 0)], logits averaged over any grid."""
    real = _check_logits(real_logits)
    fake = _check_logits(fake_logits)
    return float(0.5 * (np.mean(_softplus(-real)) + np.mean(_softplus(fake))))


def gan_d_loss_grads(real_logits, fake_logits):
    """(d/d real_logits, d/d fake_logits) of gan_d_loss."""
    real = _check_logits(real_logits)
    fake = _check_logits(fake_logits)
    d_real = -0.5 * _sigmoid(-real) / real.size
    d_fake = 0.5 * _sigmoid(fake) / fake.size
    return d_real, d_fake


def gan_g_loss(fake_logits):
    """Non-saturating generator objective BCE(fake, 1)."""
    fake = _check_logits(fake_logits)
    return float(np.mean(_softplus(-fake)))


def gan_g_loss_grad(fake_logits):
    fake = _check_logits(fake_logits)
    return -_sigmoid(-fake) / fake.size


def predictor_loss(pred_landmarks, gt_landmarks, fake_logit, weights, resolution):
    """Composite landmark loss: pixel-unit L1 plus the adversarial term."""
    pred = _arr(pred_landmarks) * resolution
    gt = _arr(gt_landmarks) * resolution
    terms = {"l1": l1_loss(pred, gt), "adv": gan_g_loss(fake_logit)}
    w = {"l1": weights.predictor_l1, "adv": weights.predictor_adv}
    return LossReport(terms, w)


def reenactor_loss(pred_face, gt_face, mask, fake_logit_map, weights):
    """Composite image loss: L1 + masked L1 + adversarial term."""
    terms = {
        "l1": l1_loss(pred_face, gt_face),
        "mask": masked_l1_loss(pred_face, gt_face, mask),
        "adv": gan_g_loss(fake_logit_map),
    }
    w = {"l1": weights.reenactor_l1, "mask": weights.reenactor_mask, "adv": weights.reenactor_adv}
    return LossReport(terms, w)
