"""Image quality metrics, phantoms, and atom significance ordering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .operators import ContractError, CoefficientMaps, Dictionary, ImageGrid

__all__ = [
    "MetricReport",
    "psnr",
    "ssim",
    "SHEPP_LOGAN_ELLIPSES",
    "MODIFIED_GRAYS",
    "phantom_from_ellipses",
    "shepp_logan",
    "random_ellipse_phantom",
    "atom_significance",
    "atom_montage",
]


@dataclass
class MetricReport:
    psnr: float
    ssim: float

    def as_dict(self):
        return {"psnr": self.psnr, "ssim": self.ssim}


def psnr(a: ImageGrid, b: ImageGrid, data_range: float) -> float:
    """``10 log10(data_range^2 / MSE)``; +inf for identical images."""
    if a.shape != b.shape:
        raise ContractError("images must share a shape")
    if not data_range > 0:
        raise ContractError("data_range must be positive")
    mse = float(np.mean((a.values - b.values) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range ** 2 / mse)


def _gaussian_window(side: int, sigma: float) -> np.ndarray:
    ax = np.arange(side) - (side - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: ImageGrid, b: ImageGrid, data_range: float, window_side: int = 11,
         k1: float = 0.01, k2: float = 0.03, sigma: float = 1.5) -> float:
    """Mean local structural similarity with a Gaussian window.

    Local statistics are weighted by an 11x11 ``sigma=1.5`` Gaussian and
    taken over fully valid windows only (no padding).
    """
    if a.shape != b.shape:
        raise ContractError("images must share a shape")
    if min(a.shape) < window_side:
        raise ContractError("image smaller than the SSIM window")
    win = _gaussian_window(window_side, sigma)
    av, bv = a.values, b.values

    def filt(img):
        return fftconvolve(img, win, mode="valid")

    mu_a = filt(av)
    mu_b = filt(bv)
    var_a = filt(av * av) - mu_a ** 2
    var_b = filt(bv * bv) - mu_b ** 2
    cov = filt(av * bv) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# (semi-axis x, semi-axis y, center x, center y, tilt in radians, gray).
SHEPP_LOGAN_ELLIPSES = (
    (0.69, 0.92, 0.0, 0.0, 0.0, 2.0),
    (0.6624, 0.874, 0.0, -0.0184, 0.0, -0.98),
    (0.11, 0.31, 0.22, 0.0, -np.deg2rad(18.0), -0.02),
    (0.16, 0.41, -0.22, 0.0, np.deg2rad(18.0), -0.02),
    (0.21, 0.25, 0.0, 0.35, 0.0, 0.01),
    (0.046, 0.046, 0.0, 0.1, 0.0, 0.01),
    (0.046, 0.046, 0.0, -0.1, 0.0, 0.01),
    (0.046, 0.023, -0.08, -0.605, 0.0, 0.01),
    (0.023, 0.023, 0.0, -0.606, 0.0, 0.01),
    (0.023, 0.046, 0.06, -0.605, 0.0, 0.01),
)

MODIFIED_GRAYS = (1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1)


def phantom_from_ellipses(n: int, ellipses, pixel_spacing: float = 1.0) -> ImageGrid:
    """Render a sum of constant ellipses on the unit square [-1, 1]^2."""
    if n < 2:
        raise ContractError("grid side must be at least 2")
    coords = (2.0 * np.arange(n) - n + 1.0) / n
    x = coords[None, :]
    y = coords[::-1, None]
    values = np.zeros((n, n))
    for (sa, sb, x0, y0, phi, gray) in ellipses:
        c, s = np.cos(phi), np.sin(phi)
        xr = (x - x0) * c + (y - y0) * s
        yr = -(x - x0) * s + (y - y0) * c
        values += gray * ((xr / sa) ** 2 + (yr / sb) ** 2 <= 1.0)
    # Overlapping grays cancel exactly in real arithmetic; snap the
    # floating-point residue so value bounds hold as stated.
    values[np.abs(values) < 1e-12] = 0.0
    return ImageGrid(values, pixel_spacing)


def shepp_logan(n: int, contrast: str = "standard", pixel_spacing: float = 1.0) -> ImageGrid:
    """Classical 10-ellipse head phantom on an n-by-n grid.

    ``standard`` uses the original grays (values in [0, 2]); ``modified``
    the higher-contrast variant (values in [0, 1]).
    """
    if n < 32:
        raise ContractError("phantom side must be at least 32")
    if contrast == "standard":
        table = SHEPP_LOGAN_ELLIPSES
    elif contrast == "modified":
        table = tuple(e[:5] + (g,) for e, g in zip(SHEPP_LOGAN_ELLIPSES, MODIFIED_GRAYS))
    else:
        raise ContractError(f"unknown contrast {contrast!r}")
    return phantom_from_ellipses(n, table, pixel_spacing)


def random_ellipse_phantom(n: int, seed: int, pixel_spacing: float = 1.0) -> ImageGrid:
    """Jittered modified Shepp-Logan: perturbed ellipse table, same family.

    Provides an endless supply of correlated but distinct phantoms for
    desk-scale training and validation sets.
    """
    rng = np.random.default_rng(seed)
    table = []
    for (sa, sb, x0, y0, phi, _), gray in zip(SHEPP_LOGAN_ELLIPSES, MODIFIED_GRAYS):
        scale = rng.uniform(0.85, 1.15)
        table.append((
            sa * scale,
            sb * scale,
            x0 + rng.uniform(-0.04, 0.04),
            y0 + rng.uniform(-0.04, 0.04),
            phi + rng.uniform(-0.15, 0.15),
            gray * rng.uniform(0.8, 1.2),
        ))
    # A few extra small structures inside the skull.
    for _ in range(rng.integers(2, 5)):
        table.append((
            rng.uniform(0.02, 0.08),
            rng.uniform(0.02, 0.08),
            rng.uniform(-0.35, 0.35),
            rng.uniform(-0.35, 0.35),
            rng.uniform(0, np.pi),
            rng.uniform(-0.15, 0.15),
        ))
    phantom = phantom_from_ellipses(n, table, pixel_spacing)
    # Overlapping negative grays may undershoot; attenuation stays physical.
    return ImageGrid(np.maximum(phantom.values, 0.0), pixel_spacing)


def atom_significance(dict_: Dictionary, coefficient_sets):
    """Atoms ordered by total absolute coefficient mass.

    ``score(i)`` sums |z| over channel i across all provided coefficient
    maps; returns ``(indices, scores)`` with indices sorted by descending
    score, ties broken by index.
    """
    coefficient_sets = list(coefficient_sets)
    if not coefficient_sets:
        raise ContractError("need at least one coefficient set")
    scores = np.zeros(dict_.atom_count)
    for z in coefficient_sets:
        if z.channel_count != dict_.atom_count:
            raise ContractError("coefficient channels do not match the dictionary")
        scores += z.channel_abs_sums()
    order = np.lexsort((np.arange(dict_.atom_count), -scores))
    return order, scores[order]


def atom_montage(dict_: Dictionary, order=None, pad: int = 1) -> np.ndarray:
    """Tile atoms into one sheet, row-major in the given order."""
    m, k = dict_.atom_count, dict_.atom_side
    if order is None:
        order = np.arange(m)
    cols = int(np.ceil(np.sqrt(m)))
    rows = int(np.ceil(m / cols))
    sheet = np.zeros((rows * (k + pad) + pad, cols * (k + pad) + pad))
    for slot, idx in enumerate(order):
        r, c = divmod(slot, cols)
        r0 = pad + r * (k + pad)
        c0 = pad + c * (k + pad)
        sheet[r0:r0 + k, c0:c0 + k] = dict_.atoms[idx]
    return sheet
