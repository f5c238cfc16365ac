"""Dictionary types and linear synthesis operators.

Two synthesis operators map coefficients to images: a convolutional one
(sum of per-atom "same"-size convolutions, zero padded) and a patch one
(non-overlapping k-by-k tiling, equivalent to stride-k convolution).
Both come with exact numerical adjoints and with the gradient of the
synthesis residual with respect to the atoms.

Conventions, fixed so the adjoint pairs are exact:

* the forward operator uses true convolution, the adjoint uses
  cross-correlation;
* "same" output anchors the kernel at index ``(k - 1) // 2`` on each axis;
* atom storage order defines channel identity everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

__all__ = [
    "ContractError",
    "ZeroAtomError",
    "ImageGrid",
    "Dictionary",
    "CoefficientMaps",
    "ConvSynthesis",
    "PatchSynthesis",
    "make_synthesis",
    "synthesize_conv",
    "synthesize_patch",
    "adjoint_conv",
    "adjoint_patch",
    "dict_gradient",
    "normalize_atoms",
]

CONVOLUTIONAL = "convolutional"
PATCH = "patch"


class ContractError(ValueError):
    """An input violates a documented precondition (shape, mode, range)."""


class ZeroAtomError(ValueError):
    """An atom is identically zero and cannot be normalized.

    Carries ``indices`` so training loops can reinitialize the offenders.
    """

    def __init__(self, indices):
        self.indices = list(indices)
        super().__init__(f"atoms {self.indices} have zero norm")


@dataclass
class ImageGrid:
    """2D scalar field of attenuation values with physical pixel spacing.

    Parameters
    ----------
    values : ndarray, shape (height, width)
        Attenuation values in 1/mm (or any consistent unit).
    pixel_spacing : float
        Edge length of a pixel in mm.
    """

    values: np.ndarray
    pixel_spacing: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ContractError(f"image must be 2D and non-empty, got shape {self.values.shape}")
        if not self.pixel_spacing > 0:
            raise ContractError("pixel_spacing must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("image values must be finite")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def like(self, values: np.ndarray) -> "ImageGrid":
        """New grid with the same spacing and different values."""
        return ImageGrid(values, self.pixel_spacing)


@dataclass
class Dictionary:
    """A set of m square atoms of side k, each with unit Euclidean norm.

    ``atoms`` has shape (m, k, k). Norms are validated to 1 within 1e-6
    (the tolerance admits 32-bit file round trips).
    """

    atoms: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.float64)
        if self.atoms.ndim != 3 or self.atoms.shape[1] != self.atoms.shape[2]:
            raise ContractError(f"atoms must have shape (m, k, k), got {self.atoms.shape}")
        if self.atoms.shape[0] < 1 or self.atoms.shape[1] < 1:
            raise ContractError("need at least one atom of side >= 1")
        if not np.all(np.isfinite(self.atoms)):
            raise ContractError("atom entries must be finite")
        norms = np.linalg.norm(self.atoms.reshape(self.atom_count, -1), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            bad = np.nonzero(np.abs(norms - 1.0) > 1e-6)[0]
            raise ContractError(f"atoms {bad.tolist()} are not unit-norm (within 1e-6)")

    @property
    def atom_count(self) -> int:
        return self.atoms.shape[0]

    @property
    def atom_side(self) -> int:
        return self.atoms.shape[1]

    @classmethod
    def random(cls, atom_count: int, atom_side: int, seed: int) -> "Dictionary":
        """Standard-normal atoms, normalized to unit norm."""
        rng = np.random.default_rng(seed)
        atoms = rng.standard_normal((atom_count, atom_side, atom_side))
        return normalize_atoms(atoms)

    def flat(self) -> np.ndarray:
        """Atoms flattened row-major to shape (m, k*k)."""
        return self.atoms.reshape(self.atom_count, -1)


@dataclass
class CoefficientMaps:
    """Latent coefficients z, bound to a target image shape.

    In convolutional mode ``maps`` has shape (m, H, W): one full-resolution
    spatial map per atom. In patch mode it has shape (H//k, W//k, m): one
    m-vector per non-overlapping k-by-k tile.
    """

    mode: str
    maps: np.ndarray
    grid_shape: tuple[int, int]

    def __post_init__(self):
        if self.mode not in (CONVOLUTIONAL, PATCH):
            raise ContractError(f"unknown mode {self.mode!r}")
        self.maps = np.asarray(self.maps, dtype=np.float64)
        self.grid_shape = (int(self.grid_shape[0]), int(self.grid_shape[1]))
        if self.maps.ndim != 3:
            raise ContractError(f"maps must be 3D, got shape {self.maps.shape}")
        if self.mode == CONVOLUTIONAL and self.maps.shape[1:] != self.grid_shape:
            raise ContractError(
                f"convolutional maps {self.maps.shape[1:]} do not match grid {self.grid_shape}"
            )
        if not np.all(np.isfinite(self.maps)):
            raise ContractError("coefficient entries must be finite")

    @property
    def channel_count(self) -> int:
        return self.maps.shape[0] if self.mode == CONVOLUTIONAL else self.maps.shape[2]

    def nonzero_count(self, threshold: float = 0.0) -> int:
        """Number of entries with magnitude strictly above ``threshold``."""
        return int(np.count_nonzero(np.abs(self.maps) > threshold))

    def channel_abs_sums(self) -> np.ndarray:
        """Sum of |z| per channel, in atom storage order."""
        if self.mode == CONVOLUTIONAL:
            return np.abs(self.maps).sum(axis=(1, 2))
        return np.abs(self.maps).sum(axis=(0, 1))

    @classmethod
    def zeros(cls, mode: str, atom_count: int, atom_side: int, grid_shape) -> "CoefficientMaps":
        h, w = grid_shape
        if mode == CONVOLUTIONAL:
            maps = np.zeros((atom_count, h, w))
        else:
            _check_divisible(grid_shape, atom_side)
            maps = np.zeros((h // atom_side, w // atom_side, atom_count))
        return cls(mode, maps, (h, w))


def _check_divisible(grid_shape, k: int):
    h, w = grid_shape
    if h % k or w % k:
        raise ContractError(f"grid shape {(h, w)} is not divisible into {k}x{k} tiles")


def _check_pairing(dict_: Dictionary, z: CoefficientMaps):
    if z.channel_count != dict_.atom_count:
        raise ContractError(
            f"coefficient channels ({z.channel_count}) != atom count ({dict_.atom_count})"
        )


class ConvSynthesis:
    """Convolutional synthesis operator for one dictionary and grid shape.

    Atom FFTs are precomputed once, so repeated applications inside
    iterative solvers cost one batched FFT pass each. Kept free of
    per-call state: apply/adjoint are pure given the inputs.
    """

    mode = CONVOLUTIONAL

    def __init__(self, dict_: Dictionary, grid_shape):
        self.dict = dict_
        self.grid_shape = (int(grid_shape[0]), int(grid_shape[1]))
        h, w = self.grid_shape
        k = dict_.atom_side
        self._anchor = (k - 1) // 2
        self._fshape = (sfft.next_fast_len(h + k - 1), sfft.next_fast_len(w + k - 1))
        self._atom_fft = sfft.rfft2(dict_.atoms, self._fshape)

    def apply(self, z: CoefficientMaps) -> np.ndarray:
        if z.mode != CONVOLUTIONAL:
            raise ContractError("ConvSynthesis needs convolutional coefficients")
        _check_pairing(self.dict, z)
        if z.grid_shape != self.grid_shape:
            raise ContractError(f"coefficients bound to {z.grid_shape}, operator to {self.grid_shape}")
        h, w = self.grid_shape
        s = self._anchor
        zf = sfft.rfft2(z.maps, self._fshape)
        full = sfft.irfft2((zf * self._atom_fft).sum(axis=0), self._fshape)
        return full[s:s + h, s:s + w]

    def adjoint(self, residual: np.ndarray) -> CoefficientMaps:
        residual = np.asarray(residual, dtype=np.float64)
        if residual.shape != self.grid_shape:
            raise ContractError(f"residual shape {residual.shape} != grid {self.grid_shape}")
        h, w = self.grid_shape
        s = self._anchor
        padded = np.zeros(self._fshape)
        padded[s:s + h, s:s + w] = residual
        rf = sfft.rfft2(padded)
        maps = sfft.irfft2(rf[None] * np.conj(self._atom_fft), self._fshape)[:, :h, :w]
        return CoefficientMaps(CONVOLUTIONAL, maps, self.grid_shape)

    def dict_gradient(self, z: CoefficientMaps, residual: np.ndarray) -> np.ndarray:
        """Gradient of ||S(z) - x||^2 in atom coordinates, residual = S(z) - x."""
        k = self.dict.atom_side
        h, w = self.grid_shape
        s = self._anchor
        padded = np.zeros(self._fshape)
        padded[s:s + h, s:s + w] = np.asarray(residual, dtype=np.float64)
        rf = sfft.rfft2(padded)
        zf = sfft.rfft2(z.maps, self._fshape)
        corr = sfft.irfft2(rf[None] * np.conj(zf), self._fshape)
        return 2.0 * corr[:, :k, :k]

    def zeros(self) -> CoefficientMaps:
        return CoefficientMaps.zeros(CONVOLUTIONAL, self.dict.atom_count, self.dict.atom_side, self.grid_shape)


class PatchSynthesis:
    """Non-overlapping patch synthesis: stride-k tiling of the grid."""

    mode = PATCH

    def __init__(self, dict_: Dictionary, grid_shape):
        self.dict = dict_
        self.grid_shape = (int(grid_shape[0]), int(grid_shape[1]))
        _check_divisible(self.grid_shape, dict_.atom_side)
        self._flat = dict_.flat()

    def _tiles(self, x: np.ndarray) -> np.ndarray:
        h, w = self.grid_shape
        k = self.dict.atom_side
        return x.reshape(h // k, k, w // k, k).swapaxes(1, 2).reshape(h // k, w // k, k * k)

    def _untile(self, tiles: np.ndarray) -> np.ndarray:
        h, w = self.grid_shape
        k = self.dict.atom_side
        return tiles.reshape(h // k, w // k, k, k).swapaxes(1, 2).reshape(h, w)

    def apply(self, z: CoefficientMaps) -> np.ndarray:
        if z.mode != PATCH:
            raise ContractError("PatchSynthesis needs patch coefficients")
        _check_pairing(self.dict, z)
        h, w = self.grid_shape
        k = self.dict.atom_side
        if z.maps.shape[:2] != (h // k, w // k):
            raise ContractError(
                f"expected one coefficient vector per tile {(h // k, w // k)}, got {z.maps.shape[:2]}"
            )
        return self._untile(z.maps @ self._flat)

    def adjoint(self, residual: np.ndarray) -> CoefficientMaps:
        residual = np.asarray(residual, dtype=np.float64)
        if residual.shape != self.grid_shape:
            raise ContractError(f"residual shape {residual.shape} != grid {self.grid_shape}")
        maps = self._tiles(residual) @ self._flat.T
        return CoefficientMaps(PATCH, maps, self.grid_shape)

    def dict_gradient(self, z: CoefficientMaps, residual: np.ndarray) -> np.ndarray:
        k = self.dict.atom_side
        r_tiles = self._tiles(np.asarray(residual, dtype=np.float64))
        grad = 2.0 * np.einsum("tpm,tpq->mq", z.maps, r_tiles)
        return grad.reshape(self.dict.atom_count, k, k)

    def zeros(self) -> CoefficientMaps:
        return CoefficientMaps.zeros(PATCH, self.dict.atom_count, self.dict.atom_side, self.grid_shape)


def make_synthesis(dict_: Dictionary, mode: str, grid_shape):
    """Factory for the synthesis operator of the requested mode."""
    if mode == CONVOLUTIONAL:
        return ConvSynthesis(dict_, grid_shape)
    if mode == PATCH:
        return PatchSynthesis(dict_, grid_shape)
    raise ContractError(f"unknown mode {mode!r}")


def synthesize_conv(dict_: Dictionary, z: CoefficientMaps) -> ImageGrid:
    """Sum of per-channel convolutions z_i * d_i with "same"-size output."""
    return ImageGrid(ConvSynthesis(dict_, z.grid_shape).apply(z))


def synthesize_patch(dict_: Dictionary, z: CoefficientMaps, grid_shape) -> ImageGrid:
    """Tile-wise synthesis: each k-by-k tile is the atom combination of its z vector."""
    return ImageGrid(PatchSynthesis(dict_, grid_shape).apply(z))


def adjoint_conv(dict_: Dictionary, residual: ImageGrid) -> CoefficientMaps:
    """Adjoint of :func:`synthesize_conv`: per-channel cross-correlation."""
    return ConvSynthesis(dict_, residual.shape).adjoint(residual.values)


def adjoint_patch(dict_: Dictionary, residual: ImageGrid) -> CoefficientMaps:
    """Adjoint of :func:`synthesize_patch`: per-tile atom inner products."""
    return PatchSynthesis(dict_, residual.shape).adjoint(residual.values)


def dict_gradient(dict_: Dictionary, z: CoefficientMaps, x: ImageGrid) -> np.ndarray:
    """Exact gradient of ``atoms -> ||S(z) - x||^2`` in atom coordinates.

    Works in either coefficient mode; returns an array shaped like
    ``dict_.atoms``.
    """
    op = make_synthesis(dict_, z.mode, x.shape)
    residual = op.apply(z) - x.values
    return op.dict_gradient(z, residual)


def normalize_atoms(atoms) -> Dictionary:
    """Rescale every atom to unit Euclidean norm, preserving direction.

    Accepts a Dictionary or a raw (m, k, k) array. Raises
    :class:`ZeroAtomError` when an atom is identically zero.
    """
    values = atoms.atoms if isinstance(atoms, Dictionary) else np.asarray(atoms, dtype=np.float64)
    norms = np.linalg.norm(values.reshape(values.shape[0], -1), axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise ZeroAtomError(zero.tolist())
    return Dictionary(values / norms[:, None, None])
