"""Synthetic hyperspectral scenes with known per-pixel ground truth.

Scenes follow the per-pixel linear mixing model: every pixel is its own
endmember matrix times its abundance vector, plus white Gaussian noise
calibrated to a target SNR.  Abundance maps are spatially correlated;
endmember variability is either a smooth multiplicative factor per
endmember or a smooth additive perturbation, clipped to keep spectra
nonnegative.
"""

import dataclasses
import math

import numpy as np
from scipy.ndimage import gaussian_filter, gaussian_filter1d

from .errors import DegenerateInputError, ShapeError
from .tensor import Tensor3, Tensor4

__all__ = [
    "SceneSpec",
    "SceneTruth",
    "generate_scene",
    "synthetic_library",
    "ABUNDANCE_STYLES",
    "VARIABILITY_MODES",
]

ABUNDANCE_STYLES = ("gaussian-fields", "smooth-patches")
VARIABILITY_MODES = ("none", "multiplicative", "additive")


@dataclasses.dataclass(frozen=True)
class SceneSpec:
    """Recipe for one synthetic scene.

    variability_sigma is the multiplicative-factor std for "multiplicative"
    and the absolute perturbation std (reflectance units) for "additive".
    snr_db may be math.inf for a noiseless cube.
    """

    n1: int
    n2: int
    endmember_library: np.ndarray
    abundance_style: str = "gaussian-fields"
    variability: str = "none"
    variability_sigma: float = 0.0
    snr_db: float = 30.0
    seed: int = 0


@dataclasses.dataclass
class SceneTruth:
    cube: Tensor3
    clean_cube: Tensor3
    abundances: Tensor3
    endmembers: Tensor4
    noise_sigma: float


def synthetic_library(n_bands, n_endmembers, seed=0):
    """Smooth, well-separated nonnegative spectra (Gaussian bumps), L x R."""
    rng = np.random.default_rng(seed)
    grid = np.arange(n_bands, dtype=np.float64)
    lib = np.empty((n_bands, n_endmembers))
    for k in range(n_endmembers):
        spectrum = np.full(n_bands, 0.05)
        home = (k + 0.5) * n_bands / n_endmembers
        for _ in range(3):
            center = home + rng.uniform(-0.15, 0.15) * n_bands
            width = rng.uniform(n_bands / 25, n_bands / 8)
            amp = rng.uniform(0.35, 1.0)
            spectrum += amp * np.exp(-0.5 * ((grid - center) / width) ** 2)
        lib[:, k] = spectrum / spectrum.max()
    return lib


def _project_rows_to_simplex(V):
    """Euclidean projection of each row of V onto the probability simplex."""
    n, d = V.shape
    U = np.sort(V, axis=1)[:, ::-1]
    cssv = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, d + 1)
    cond = U - cssv / ind > 0
    rho = np.count_nonzero(cond, axis=1)
    theta = cssv[np.arange(n), rho - 1] / rho
    return np.maximum(V - theta[:, None], 0.0)


def _smooth_field(rng, n1, n2, sigma):
    field = gaussian_filter(rng.standard_normal((n1, n2)), sigma, mode="reflect")
    std = field.std()
    return field / std if std > 0 else field


def _abundances_gaussian_fields(rng, n1, n2, R):
    sigma = max(min(n1, n2) / 10.0, 1.0)
    fields = np.stack([_smooth_field(rng, n1, n2, sigma) for _ in range(R)], axis=-1)
    return _project_rows_to_simplex(fields.reshape(-1, R) + 1.0 / R).reshape(n1, n2, R)


def _abundances_smooth_patches(rng, n1, n2, R):
    # two Voronoi seeds per endmember; one-hot labels smoothed with a kernel
    # that preserves the pixelwise sum
    centers = np.column_stack([rng.uniform(0, n1, 2 * R), rng.uniform(0, n2, 2 * R)])
    owner = np.arange(2 * R) % R
    ii, jj = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    d2 = (ii[..., None] - centers[:, 0]) ** 2 + (jj[..., None] - centers[:, 1]) ** 2
    labels = owner[np.argmin(d2, axis=-1)]
    onehot = np.zeros((n1, n2, R))
    for k in range(R):
        onehot[..., k] = labels == k
    sigma = max(min(n1, n2) / 12.0, 1.0)
    maps = np.stack(
        [gaussian_filter(onehot[..., k], sigma, mode="reflect") for k in range(R)],
        axis=-1,
    )
    return maps / maps.sum(axis=2, keepdims=True)


def generate_scene(spec):
    """Draw one scene from ``spec``.  Deterministic per seed."""
    lib = np.asarray(spec.endmember_library, dtype=np.float64)
    if lib.ndim != 2:
        raise ShapeError(f"endmember library must be a matrix, got shape {lib.shape}")
    if lib.min() < 0:
        raise DegenerateInputError("endmember spectra must be nonnegative")
    if np.any(np.linalg.norm(lib, axis=0) == 0):
        raise DegenerateInputError("endmember library has a zero column")
    if spec.abundance_style not in ABUNDANCE_STYLES:
        raise ShapeError(f"unknown abundance style {spec.abundance_style!r}")
    if spec.variability not in VARIABILITY_MODES:
        raise ShapeError(f"unknown variability mode {spec.variability!r}")
    if math.isnan(spec.snr_db):
        raise ShapeError("snr_db must be finite or +inf")
    if spec.n1 < 1 or spec.n2 < 1:
        raise ShapeError("scene dims must be positive")

    n1, n2 = spec.n1, spec.n2
    L, R = lib.shape
    rng = np.random.default_rng(spec.seed)

    if spec.abundance_style == "gaussian-fields":
        A = _abundances_gaussian_fields(rng, n1, n2, R)
    else:
        A = _abundances_smooth_patches(rng, n1, n2, R)

    sig = float(spec.variability_sigma)
    if spec.variability == "none" or sig == 0.0:
        M = np.broadcast_to(lib, (n1, n2, L, R)).copy()
    elif spec.variability == "multiplicative":
        psi_sigma = max(min(n1, n2) / 8.0, 1.0)
        M = np.empty((n1, n2, L, R))
        for k in range(R):
            psi = np.maximum(1.0 + sig * _smooth_field(rng, n1, n2, psi_sigma), 0.1)
            M[..., k] = psi[..., None] * lib[:, k]
    else:
        M = np.empty((n1, n2, L, R))
        spatial_sigma = max(min(n1, n2) / 8.0, 1.0)
        for k in range(R):
            pert = np.zeros((n1, n2, L))
            for _ in range(2):
                field = _smooth_field(rng, n1, n2, spatial_sigma)
                profile = gaussian_filter1d(rng.standard_normal(L), max(L / 12.0, 1.0))
                pstd = profile.std()
                if pstd > 0:
                    profile = profile / pstd
                pert += field[..., None] * profile
            pstd = pert.std()
            if pstd > 0:
                pert *= sig / pstd
            M[..., k] = np.maximum(lib[:, k] + pert, 0.0)

    clean = np.einsum("ijlr,ijr->ijl", M, A, optimize=True)
    if math.isinf(spec.snr_db):
        sigma = 0.0
        cube = clean
    else:
        energy = float(np.sum(clean**2))
        sigma = math.sqrt(energy / (n1 * n2 * L * 10.0 ** (spec.snr_db / 10.0)))
        cube = clean + rng.normal(0.0, sigma, size=clean.shape)

    return SceneTruth(
        cube=Tensor3(cube),
        clean_cube=Tensor3(clean),
        abundances=Tensor3(A),
        endmembers=Tensor4(M),
        noise_sigma=sigma,
    )
