"""Dictionary-regularized CT reconstruction and the Huber baseline.

The dictionary methods split the image into a fixed low-frequency part
(low-pass FBP of the data) and a high-frequency part solved from

    min_{x, z}  L(A(x), y) + lambda1 * ||x - S(z)||^2 + lambda2 * ||z||_1

by alternating accelerated steps: a Nesterov gradient step in x, a
FISTA-style proximal gradient step in z, each with its own step size.
The variant regularizing all overlapping patches replaces the coupling
by per-patch terms normalized by the patch coverage, so its z = 0 path
coincides with the convolutional one.

Objective traces are recorded every iteration. An increase triggers a
momentum restart and a one-time step halving; with valid Lipschitz
bounds a restarted iteration cannot increase the objective, keeping
traces non-increasing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .operators import CoefficientMaps, ContractError, Dictionary, ImageGrid, make_synthesis
from .sparse import DivergenceError, estimate_lipschitz, soft_threshold
from .tomo import Sinogram, fbp, get_projector, likelihood_weights

__all__ = [
    "ReconConfig",
    "HuberConfig",
    "ReconTrace",
    "recon_objective",
    "reconstruct_dict",
    "reconstruct_dict_patch",
    "reconstruct_huber",
    "huber_value",
    "huber_loss_and_gradient",
    "image_gradient",
    "image_gradient_adjoint",
]

_SAFETY = 1.05


@dataclass
class ReconConfig:
    """Dictionary-reconstruction parameters.

    ``lambda1`` weights the synthesis coupling (1/sigma role),
    ``lambda2`` the coefficient sparsity (1/b role). The iteration count
    is part of the method: running to full convergence is intentionally
    not attempted.
    """

    lambda1: float = 50.0
    lambda2: float = 0.0016
    iters: int = 300
    lowpass_cutoff: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ContractError("lambda1 and lambda2 must be positive")
        if self.iters < 1:
            raise ContractError("iters must be >= 1")
        if not 0 < self.lowpass_cutoff <= 1:
            raise ContractError("lowpass_cutoff must lie in (0, 1]")


@dataclass
class HuberConfig:
    """Huber-regularized baseline parameters."""

    lam: float = 5e-4
    gamma: float = 4e-4
    iters: int = 70

    def __post_init__(self):
        if not (self.lam > 0 and self.gamma > 0 and self.iters >= 1):
            raise ContractError("HuberConfig values must be positive")


@dataclass
class ReconTrace:
    """Per-iteration objective decomposition of one reconstruction."""

    objective: list[float] = field(default_factory=list)
    data_term: list[float] = field(default_factory=list)
    coupling_term: list[float] = field(default_factory=list)
    l1_term: list[float] = field(default_factory=list)
    halvings: int = 0
    restarts: int = 0

    def append(self, data, coupling, l1):
        self.objective.append(data + coupling + l1)
        self.data_term.append(data)
        self.coupling_term.append(coupling)
        self.l1_term.append(l1)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "objective", "data_term", "coupling_term", "l1_term"])
            for i in range(len(self.objective)):
                writer.writerow([i, repr(self.objective[i]), repr(self.data_term[i]),
                                 repr(self.coupling_term[i]), repr(self.l1_term[i])])


def recon_objective(x: ImageGrid, z: CoefficientMaps, y: Sinogram, dict_: Dictionary,
                    lambda1: float, lambda2: float) -> float:
    """``L(A(x), y) + lambda1 ||x - S(z)||^2 + lambda2 ||z||_1``."""
    w = likelihood_weights(y)
    proj = get_projector(y.geometry, x.shape, x.pixel_spacing)
    diff = proj.forward(x.values) - y.values
    op = make_synthesis(dict_, z.mode, x.shape)
    r = x.values - op.apply(z)
    return float(np.sum(w * diff * diff) + lambda1 * np.sum(r * r)
                 + lambda2 * np.sum(np.abs(z.maps)))


class _ConvCoupling:
    """lambda1 ||x - S(z)||^2 with the convolutional synthesis operator."""

    def __init__(self, dict_: Dictionary, grid_shape, lambda1, lambda2, seed):
        self.op = make_synthesis(dict_, "convolutional", grid_shape)
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.mode = "convolutional"
        self.grid_shape = tuple(grid_shape)
        self.lz = 2.0 * lambda1 * estimate_lipschitz(
            dict_, grid_shape, "convolutional", power_iters=50, safety=_SAFETY, seed=seed)

    def z_zero(self):
        return self.op.zeros().maps

    def synth(self, z):
        return self.op.apply(CoefficientMaps(self.mode, z, self.grid_shape))

    def grad_z(self, x, synth_z):
        return 2.0 * self.lambda1 * self.op.adjoint(synth_z - x).maps

    def value(self, x, synth_z):
        r = x - synth_z
        return self.lambda1 * float(np.sum(r * r))

    def l1(self, z):
        return self.lambda2 * float(np.sum(np.abs(z)))


class _OverlapPatchCoupling:
    """Per-patch coupling over all overlapping k-by-k patches.

    Patches are taken at every offset of the zero-padded image, so every
    pixel is covered by exactly k^2 patches; both penalty terms are
    normalized by that coverage. ``synth`` returns the coverage-averaged
    patch recomposition, making the x-gradient 2*lambda1*(x - synth(z)).
    """

    def __init__(self, dict_: Dictionary, grid_shape, lambda1, lambda2, seed):
        self.k = dict_.atom_side
        self.m = dict_.atom_count
        self.flat = dict_.flat()
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.mode = "patch-overlap"
        self.grid_shape = tuple(grid_shape)
        k = self.k
        self.n_pos = (grid_shape[0] + k - 1, grid_shape[1] + k - 1)
        smax = np.linalg.svd(self.flat, compute_uv=False)[0]
        self.lz = _SAFETY * 2.0 * lambda1 / k ** 2 * smax * smax

    def z_zero(self):
        return np.zeros(self.n_pos + (self.m,))

    def _patches(self, x):
        k = self.k
        padded = np.pad(x, k - 1)
        win = sliding_window_view(padded, (k, k))
        return win.reshape(self.n_pos + (k * k,))

    def _fold(self, tiles):
        k = self.k
        hp, wp = self.n_pos
        canvas = np.zeros((hp + k - 1, wp + k - 1))
        for dy in range(k):
            for dx in range(k):
                canvas[dy:dy + hp, dx:dx + wp] += tiles[:, :, dy * k + dx]
        return canvas[k - 1:k - 1 + self.grid_shape[0], k - 1:k - 1 + self.grid_shape[1]]

    def synth(self, z):
        return self._fold(z @ self.flat) / self.k ** 2

    def grad_z(self, x, synth_z, z):
        scale = 2.0 * self.lambda1 / self.k ** 2
        return scale * ((z @ self.flat - self._patches(x)) @ self.flat.T)

    def value_patch(self, x, z):
        diff = z @ self.flat - self._patches(x)
        return self.lambda1 / self.k ** 2 * float(np.sum(diff * diff))

    def l1(self, z):
        return self.lambda2 / self.k ** 2 * float(np.sum(np.abs(z)))


def _momentum(t):
    return (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0


def _accelerated_recon(y: Sinogram, dict_: Dictionary, cfg: ReconConfig,
                       grid_shape, pixel_spacing, coupling_cls,
                       return_coefficients: bool = False):
    geom = y.geometry
    proj = get_projector(geom, grid_shape, pixel_spacing)
    w = likelihood_weights(y)
    w_max = float(np.max(w))

    x_lf = fbp(y, grid_shape, pixel_spacing, window="hann", cutoff=cfg.lowpass_cutoff).values
    y_res = y.values - proj.forward(x_lf)
    x = fbp(y, grid_shape, pixel_spacing, window="hann", cutoff=1.0).values - x_lf

    coupling = coupling_cls(dict_, grid_shape, cfg.lambda1, cfg.lambda2, cfg.seed)
    z = coupling.z_zero()

    lx = _SAFETY * 2.0 * w_max * proj.norm_sq(seed=cfg.seed) + 2.0 * cfg.lambda1
    lz = coupling.lz
    halvings = 0

    overlap = isinstance(coupling, _OverlapPatchCoupling)

    def grad_z(x_new, z_prime, synth_prime):
        if overlap:
            return coupling.grad_z(x_new, synth_prime, z_prime)
        return coupling.grad_z(x_new, synth_prime)

    def coupling_value(x_new, z_new, synth_new):
        if overlap:
            return coupling.value_patch(x_new, z_new)
        return coupling.value(x_new, synth_new)

    def data_value(ax):
        d = ax - y_res
        return float(np.sum(w * d * d))

    trace = ReconTrace()

    # State: iterates (x, z), extrapolated points (xp, zp), and the
    # projections/syntheses of each, maintained by linearity.
    ax = proj.forward(x)
    sz = coupling.synth(z)
    xp, zp, axp, szp = x, z, ax, sz
    t = 1.0
    obj_last = np.inf

    it = 0
    while it < cfg.iters:
        attempts = 0
        while True:
            t_next = _momentum(t)
            gx = 2.0 * proj.adjoint(w * (axp - y_res)) + 2.0 * cfg.lambda1 * (xp - szp)
            x_new = xp - gx / lx
            ax_new = proj.forward(x_new)

            gz = grad_z(x_new, zp, szp)
            tau = (coupling.lambda2 / coupling.k ** 2 if overlap else coupling.lambda2) / lz
            z_new = soft_threshold(zp - gz / lz, tau)
            sz_new = coupling.synth(z_new)

            data = data_value(ax_new)
            coup = coupling_value(x_new, z_new, sz_new)
            l1 = coupling.l1(z_new)
            obj = data + coup + l1
            if not np.isfinite(obj):
                raise DivergenceError(
                    f"non-finite reconstruction objective at iteration {it}",
                    {"iteration": it, "objective": obj, "trace": trace.objective[:]},
                )

            slack = 1e-12 * max(1.0, abs(trace.objective[0])) if trace.objective else np.inf
            if obj <= obj_last + slack or attempts >= 2:
                break
            # Monotonicity guard: restart momentum from the current
            # iterate; on the first violation also halve both steps.
            trace.restarts += 1
            t = 1.0
            xp, zp, axp, szp = x, z, ax, sz
            if halvings == 0:
                lx *= 2.0
                lz *= 2.0
                halvings += 1
                trace.halvings = halvings
            attempts += 1

        mom = (t - 1.0) / t_next
        xp = x_new + mom * (x_new - x)
        axp = ax_new + mom * (ax_new - ax)
        zp = z_new + mom * (z_new - z)
        szp = sz_new + mom * (sz_new - sz)
        x, ax, z, sz, t = x_new, ax_new, z_new, sz_new, t_next
        obj_last = obj
        trace.append(data, coup, l1)
        it += 1

    image = ImageGrid(x_lf + x, pixel_spacing)
    if return_coefficients:
        channel_first = z if not overlap else np.moveaxis(z, 2, 0)
        return image, trace, channel_first
    return image, trace


def reconstruct_dict(y: Sinogram, dict_: Dictionary, cfg: ReconConfig,
                     grid_shape, pixel_spacing: float = 1.0,
                     return_coefficients: bool = False):
    """Reconstruct with the convolutional synthesis regularizer.

    Returns ``(image, trace)`` where the image is the fixed low-pass FBP
    component plus the optimized high-frequency part; with
    ``return_coefficients`` also the final channel-first coefficients.
    """
    return _accelerated_recon(y, dict_, cfg, grid_shape, pixel_spacing, _ConvCoupling,
                              return_coefficients)


def reconstruct_dict_patch(y: Sinogram, dict_: Dictionary, cfg: ReconConfig,
                           grid_shape, pixel_spacing: float = 1.0,
                           return_coefficients: bool = False):
    """Reconstruct with the overlapping-patch regularizer variant."""
    return _accelerated_recon(y, dict_, cfg, grid_shape, pixel_spacing, _OverlapPatchCoupling,
                              return_coefficients)


def image_gradient(x: np.ndarray):
    """Forward differences with symmetric boundary (zero at the far edge)."""
    gh = np.zeros_like(x)
    gv = np.zeros_like(x)
    gh[:, :-1] = x[:, 1:] - x[:, :-1]
    gv[:-1, :] = x[1:, :] - x[:-1, :]
    return gh, gv


def image_gradient_adjoint(gh: np.ndarray, gv: np.ndarray):
    """Exact adjoint of :func:`image_gradient`."""
    out = np.zeros_like(gh)
    out[:, 0] -= gh[:, 0]
    out[:, 1:-1] += gh[:, :-2] - gh[:, 1:-1]
    out[:, -1] += gh[:, -2]
    out[0, :] -= gv[0, :]
    out[1:-1, :] += gv[:-2, :] - gv[1:-1, :]
    out[-1, :] += gv[-2, :]
    return out


def huber_value(values: np.ndarray, gamma: float) -> float:
    """Sum of the Huber penalty: quadratic below the knee, linear above."""
    a = np.abs(values)
    quad = a < gamma
    return float(np.sum(np.where(quad, values * values / (2.0 * gamma), a - gamma / 2.0)))


def _huber_slope(values: np.ndarray, gamma: float) -> np.ndarray:
    return np.clip(values / gamma, -1.0, 1.0)


def huber_loss_and_gradient(x: ImageGrid, y: Sinogram, cfg: HuberConfig):
    """Full Huber objective ``L(A(x), y) + lam * H_gamma(grad x)`` and its gradient."""
    proj = get_projector(y.geometry, x.shape, x.pixel_spacing)
    w = likelihood_weights(y)
    diff = proj.forward(x.values) - y.values
    gh, gv = image_gradient(x.values)
    loss = float(np.sum(w * diff * diff)) \
        + cfg.lam * (huber_value(gh, cfg.gamma) + huber_value(gv, cfg.gamma))
    grad = 2.0 * proj.adjoint(w * diff) \
        + cfg.lam * image_gradient_adjoint(_huber_slope(gh, cfg.gamma),
                                           _huber_slope(gv, cfg.gamma))
    return loss, x.like(grad)


def reconstruct_huber(y: Sinogram, cfg: HuberConfig, grid_shape,
                      pixel_spacing: float = 1.0, return_trace: bool = False):
    """Weighted least squares plus Huber-of-gradient, by Nesterov descent.

    Runs exactly ``cfg.iters`` accelerated gradient iterations from an
    FBP warm start. With ``return_trace`` also returns the per-iteration
    objective values.
    """
    geom = y.geometry
    proj = get_projector(geom, grid_shape, pixel_spacing)
    w = likelihood_weights(y)
    # ||grad||^2 <= 8 for forward differences; the Huber slope is
    # (1/gamma)-Lipschitz.
    lip = _SAFETY * (2.0 * float(np.max(w)) * proj.norm_sq() + 8.0 * cfg.lam / cfg.gamma)

    x = fbp(y, grid_shape, pixel_spacing, window="hann", cutoff=0.75).values
    ax = proj.forward(x)
    xp, axp = x, ax
    t = 1.0
    trace = []
    for _ in range(cfg.iters):
        gh, gv = image_gradient(xp)
        grad = 2.0 * proj.adjoint(w * (axp - y.values))
        grad += cfg.lam * image_gradient_adjoint(_huber_slope(gh, cfg.gamma),
                                                 _huber_slope(gv, cfg.gamma))
        x_new = xp - grad / lip
        ax_new = proj.forward(x_new)
        if return_trace:
            d = ax_new - y.values
            gh_n, gv_n = image_gradient(x_new)
            trace.append(float(np.sum(w * d * d))
                         + cfg.lam * (huber_value(gh_n, cfg.gamma) + huber_value(gv_n, cfg.gamma)))
        t_next = _momentum(t)
        mom = (t - 1.0) / t_next
        xp = x_new + mom * (x_new - x)
        axp = ax_new + mom * (ax_new - ax)
        x, ax, t = x_new, ax_new, t_next
    image = ImageGrid(x, pixel_spacing)
    if return_trace:
        return image, trace
    return image
