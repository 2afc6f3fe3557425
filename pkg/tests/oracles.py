"""Independent reference implementations used as test oracles.

Everything here is written directly from the mathematical definitions with
plain loops / direct matrix DFTs, deliberately avoiding the package's own
code paths (np.fft, vectorized rasterization, the eigendecomposition square
root, ...). Slow on purpose; used only on small inputs.
"""

import numpy as np


# -- audio ------------------------------------------------------------------

def mfcc_oracle(samples, cfg):
    """MFCC via direct DFT matrix, loop-built mel filters, explicit DCT sums."""
    x = np.asarray(samples, dtype=np.float64)

    emph = np.empty_like(x)
    emph[0] = x[0]
    for n in range(1, x.size):
        emph[n] = x[n] - cfg.pre_emphasis * x[n - 1]

    hop, flen, n_fft = cfg.hop_length, cfg.frame_length, cfg.n_fft
    padded = np.zeros((cfg.n_fft_frames - 1) * hop + flen)
    padded[: emph.size] = emph
    window = np.array([0.5 * (1.0 - np.cos(2.0 * np.pi * n / (flen - 1))) for n in range(flen)])

    n_bins = n_fft // 2 + 1
    n_idx = np.arange(n_fft)
    dft = np.exp(-2j * np.pi * np.outer(np.arange(n_bins), n_idx) / n_fft)

    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def imel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges = [imel(mel(cfg.sample_rate / 2.0) * i / (cfg.mel_bands + 1)) for i in range(cfg.mel_bands + 2)]
    freqs = [k * cfg.sample_rate / n_fft for k in range(n_bins)]
    bank = np.zeros((cfg.mel_bands, n_bins))
    for m in range(cfg.mel_bands):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        for k, f in enumerate(freqs):
            if lo <= f <= mid and mid > lo:
                bank[m, k] = (f - lo) / (mid - lo)
            elif mid < f <= hi and hi > mid:
                bank[m, k] = (hi - f) / (hi - mid)

    out = np.zeros((cfg.n_fft_frames, cfg.n_mfcc))
    for t in range(cfg.n_fft_frames):
        frame = np.zeros(n_fft)
        frame[:flen] = padded[t * hop : t * hop + flen] * window
        spectrum = dft @ frame
        power = np.abs(spectrum) ** 2
        log_mel = np.log(bank @ power + cfg.log_floor)
        for c in range(cfg.n_mfcc):
            acc = 0.0
            for m in range(cfg.mel_bands):
                acc += log_mel[m] * np.cos(np.pi * c * (2 * m + 1) / (2 * cfg.mel_bands))
            scale = np.sqrt(1.0 / cfg.mel_bands) if c == 0 else np.sqrt(2.0 / cfg.mel_bands)
            out[t, c] = scale * acc
    return out


def dominant_frequency(samples, sample_rate):
    """Peak rfft bin frequency (the resample checks' oracle)."""
    spectrum = np.abs(np.fft.rfft(np.asarray(samples, dtype=np.float64)))
    return np.argmax(spectrum) * sample_rate / len(samples)


# -- rasterization ----------------------------------------------------------

def raster_membership_oracle(landmark_set, resolution, point_radius):
    """Per-pixel disk/segment membership test, scalar arithmetic throughout."""
    pts = np.clip(np.asarray(landmark_set.points, dtype=np.float64), 0.0, 1.0) * resolution
    pts = np.clip(pts, 0.0, resolution - 1.0)
    segments = []
    for idx in landmark_set.index_groups.values():
        for a, b in zip(idx[:-1], idx[1:]):
            segments.append((pts[a], pts[b]))
    grid = np.zeros((resolution, resolution), dtype=np.uint8)
    for py in range(resolution):
        for px in range(resolution):
            lit = False
            for cx, cy in pts:
                if (px - cx) ** 2 + (py - cy) ** 2 <= point_radius**2:
                    lit = True
                    break
            if not lit:
                for (ax, ay), (bx, by) in segments:
                    dx, dy = bx - ax, by - ay
                    len2 = dx * dx + dy * dy
                    if len2 == 0.0:
                        d2 = (px - ax) ** 2 + (py - ay) ** 2
                    else:
                        t = ((px - ax) * dx + (py - ay) * dy) / len2
                        t = min(max(t, 0.0), 1.0)
                        d2 = (px - (ax + t * dx)) ** 2 + (py - (ay + t * dy)) ** 2
                    if d2 <= 0.25:
                        lit = True
                        break
            grid[py, px] = 1 if lit else 0
    return grid


def polygon_fill_oracle(vertices_px, resolution):
    """Point-in-convex-polygon by sign consistency of edge cross products."""
    v = np.asarray(vertices_px, dtype=np.float64)
    n = v.shape[0]
    grid = np.zeros((resolution, resolution), dtype=np.uint8)
    for py in range(resolution):
        for px in range(resolution):
            pos = neg = False
            for i in range(n):
                x1, y1 = v[i]
                x2, y2 = v[(i + 1) % n]
                cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
                if cross > 0:
                    pos = True
                elif cross < 0:
                    neg = True
            grid[py, px] = 1 if not (pos and neg) else 0
    return grid


def dilation_oracle(mask, radius):
    """Pixel lit iff some white pixel lies within Euclidean distance radius."""
    h, w = mask.shape
    whites = np.argwhere(mask > 0)
    out = np.zeros_like(mask, dtype=np.uint8)
    r2 = radius * radius
    for py in range(h):
        for px in range(w):
            for wy, wx in whites:
                if (py - wy) ** 2 + (px - wx) ** 2 <= r2:
                    out[py, px] = 1
                    break
    return out


# -- losses -----------------------------------------------------------------

def l1_oracle(a, b):
    total = 0.0
    for x, y in zip(np.ravel(a), np.ravel(b)):
        total += abs(float(x) - float(y))
    return total / np.size(a)


def masked_l1_oracle(a, b, mask):
    a, b = np.asarray(a), np.asarray(b)
    m = np.broadcast_to(mask, a.shape)
    total, count = 0.0, 0.0
    for x, y, mm in zip(np.ravel(a), np.ravel(b), np.ravel(m)):
        total += abs(float(x) - float(y)) * float(mm)
        count += float(mm)
    return total / count


def gan_losses_oracle(real_logits, fake_logits):
    """(d_loss, g_loss) via exact sigmoid/log in extended precision."""
    real = np.asarray(real_logits, dtype=np.longdouble).ravel()
    fake = np.asarray(fake_logits, dtype=np.longdouble).ravel()
    sig = lambda z: 1.0 / (1.0 + np.exp(-z))
    d = -0.5 * (np.mean(np.log(sig(real))) + np.mean(np.log(1.0 - sig(fake))))
    g = -np.mean(np.log(sig(fake)))
    return float(d), float(g)


# -- metrics ----------------------------------------------------------------

def ssim_windows_oracle(a, b, data_range=2.0):
    """SSIM by explicit per-window weighted sums (single channel)."""
    size, sigma = 11, 1.5
    half = (size - 1) / 2.0
    g = np.array([np.exp(-((i - half) ** 2) / (2 * sigma**2)) for i in range(size)])
    kernel = np.outer(g, g)
    kernel /= kernel.sum()
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    h, w = a.shape
    values = []
    for y in range(h - size + 1):
        for x in range(w - size + 1):
            wa = a[y : y + size, x : x + size]
            wb = b[y : y + size, x : x + size]
            mu_a = float((kernel * wa).sum())
            mu_b = float((kernel * wb).sum())
            var_a = float((kernel * wa * wa).sum()) - mu_a**2
            var_b = float((kernel * wb * wb).sum()) - mu_b**2
            cov = float((kernel * wa * wb).sum()) - mu_a * mu_b
            values.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                          / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)))
    return float(np.mean(values))


def frechet_oracle(mu1, cov1, mu2, cov2):
    """Gaussian Frechet distance with scipy's Schur-based matrix sqrt."""
    import scipy.linalg

    diff = np.asarray(mu1) - np.asarray(mu2)
    sqrt_prod = scipy.linalg.sqrtm(np.asarray(cov1) @ np.asarray(cov2))
    if np.iscomplexobj(sqrt_prod):
        sqrt_prod = sqrt_prod.real
    return float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(sqrt_prod))


# -- images -----------------------------------------------------------------

def bilinear_oracle(img, ys, xs):
    """Scalar-loop bilinear sampling with zero fill outside the frame."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    out = np.zeros(ys.shape + (img.shape[2],))

    def read(yi, xi):
        if 0 <= yi < h and 0 <= xi < w:
            return img[yi, xi]
        return np.zeros(img.shape[2])

    for i in range(ys.shape[0]):
        for j in range(ys.shape[1]):
            y, x = ys[i, j], xs[i, j]
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            fy, fx = y - y0, x - x0
            out[i, j] = ((1 - fy) * (1 - fx) * read(y0, x0)
                         + (1 - fy) * fx * read(y0, x0 + 1)
                         + fy * (1 - fx) * read(y0 + 1, x0)
                         + fy * fx * read(y0 + 1, x0 + 1))
    return out
