"""Independent reference implementations shared by the test modules."""

import numpy as np


def psnr_reference(a, b, peak=1.0):
    mse = np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2)
    if mse == 0:
        return np.inf
    return 10.0 * np.log10(peak * peak / mse)


def ssim_reference(a, b, peak=1.0):
    """Direct sliding-window SSIM, one window position at a time."""
    win = 11
    sigma = 1.5
    xs = np.arange(win) - (win - 1) / 2
    g = np.exp(-(xs**2) / (2 * sigma**2))
    w2d = np.outer(g, g)
    w2d /= w2d.sum()
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    vals = []
    for ch in range(a.shape[0]):
        x, y = a[ch], b[ch]
        h, w = x.shape
        for i in range(h - win + 1):
            for j in range(w - win + 1):
                px = x[i : i + win, j : j + win]
                py = y[i : i + win, j : j + win]
                mx = (w2d * px).sum()
                my = (w2d * py).sum()
                vx = (w2d * px * px).sum() - mx * mx
                vy = (w2d * py * py).sum() - my * my
                vxy = (w2d * px * py).sum() - mx * my
                vals.append(
                    ((2 * mx * my + c1) * (2 * vxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2))
                )
    return float(np.mean(vals))
