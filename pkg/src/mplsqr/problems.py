"""Test problems, noise injection and problem archives.

The 1-D generators discretize the classical first-kind integral equations
used as regularization benchmarks:

``shaw``
    1-D image restoration; midpoint quadrature on ``[-pi/2, pi/2]`` of the
    kernel ``(cos s + cos t)**2 * (sin u / u)**2``, ``u = pi (sin s + sin t)``.
    Severely ill-posed, symmetric.
``deriv2``
    Second derivative; Galerkin discretization with orthonormal box
    functions of the Green's function ``K(s, t) = s (t - 1)`` for ``s < t``
    and ``t (s - 1)`` otherwise, on ``[0, 1]``.  Exact solution ``x(t) = t``.
    Moderately ill-posed, symmetric.
``gravity``
    1-D gravity surveying; ``K(s, t) = d / (d**2 + (s - t)**2)**1.5`` with
    depth ``d = 0.25``, midpoint rule on ``[0, 1]``.  Exact solution
    ``sin(pi t) + 0.5 sin(2 pi t)``.  Severely ill-posed.
``heat``
    Inverse heat equation (Volterra kernel) with ``kappa = 1``; lower
    triangular Toeplitz matrix.  Moderately ill-posed.
``blur2d``
    Spatially invariant image blur with zero boundary conditions; the PSF is
    either Gaussian or a uniform disk, see :func:`make_psf`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import toeplitz

from .operators import BlurOperator, DenseOperator

__all__ = [
    "PROBLEMS",
    "ProblemInstance",
    "shaw",
    "deriv2",
    "gravity",
    "heat",
    "make_psf",
    "test_image",
    "blur2d",
    "generate",
    "add_noise",
    "make_instance",
    "save_instance",
    "load_instance",
]

PROBLEMS = ("shaw", "deriv2", "gravity", "heat", "blur2d")


def shaw(n: int):
    h = np.pi / n
    theta = -np.pi / 2 + (np.arange(n) + 0.5) * h
    co = np.cos(theta)
    psi = np.pi * np.sin(theta)
    ss = psi[:, None] + psi[None, :]
    # np.sinc(z) = sin(pi z)/(pi z), so sin(ss)/ss = sinc(ss/pi), 1 at ss = 0
    A = h * ((co[:, None] + co[None, :]) * np.sinc(ss / np.pi)) ** 2
    A = 0.5 * (A + A.T)
    x = 2.0 * np.exp(-6.0 * (theta - 0.8) ** 2) + np.exp(-2.0 * (theta + 0.5) ** 2)
    return A, x


def deriv2(n: int):
    h = 1.0 / n
    i = np.arange(1, n + 1, dtype=np.float64)
    # A[i, j] for i > j: h**2 (j - 1/2) ((i - 1/2) h - 1)
    A = h**2 * np.outer((i - 0.5) * h - 1.0, i - 0.5)
    A = np.tril(A, -1)
    A = A + A.T
    A[np.diag_indices(n)] = h**2 * ((i**2 - i + 0.25) * h - (i - 2.0 / 3.0))
    x = h**1.5 * (i - 0.5)
    return A, x


def gravity(n: int, depth: float = 0.25):
    h = 1.0 / n
    t = h * (np.arange(n) + 0.5)
    s = t
    A = h * depth / (depth**2 + (s[:, None] - t[None, :]) ** 2) ** 1.5
    x = np.sin(np.pi * t) + 0.5 * np.sin(2 * np.pi * t)
    return A, x


def heat(n: int, kappa: float = 1.0):
    h = 1.0 / n
    t = h * (np.arange(n) + 0.5)
    c = h / (2 * kappa * np.sqrt(np.pi))
    d = 1.0 / (4 * kappa**2)
    k = c * t**-1.5 * np.exp(-d / t)
    r = np.zeros(n)
    r[0] = k[0]
    A = toeplitz(k, r)
    x = np.zeros(n)
    ti = np.arange(1, n // 2 + 1) * 20.0 / n
    x[: n // 2] = np.where(
        ti < 2,
        0.75 * ti**2 / 4,
        np.where(ti < 3, 0.75 + (ti - 2) * (3 - ti), 0.75 * np.exp(-(ti - 3) * 2)),
    )
    return A, x


# ---------------------------------------------------------------------------
# 2-D deblurring

def make_psf(kind: str = "gaussian", *, sigma: float = 2.0, radius: float = 4.0):
    """Normalized point-spread function.

    ``gaussian`` -- isotropic Gaussian of standard deviation ``sigma`` pixels,
    truncated at ``3 sigma`` (stands in for a medium speckle blur).
    ``disk`` -- uniform out-of-focus disk of the given ``radius`` in pixels.
    """
    if kind == "gaussian":
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        r = max(1, int(np.ceil(3 * sigma)))
        g = np.arange(-r, r + 1)
        P = np.exp(-(g[:, None] ** 2 + g[None, :] ** 2) / (2 * sigma**2))
    elif kind == "disk":
        if radius <= 0:
            raise ValueError("radius must be positive")
        r = int(np.ceil(radius))
        g = np.arange(-r, r + 1)
        P = ((g[:, None] ** 2 + g[None, :] ** 2) <= radius**2).astype(np.float64)
    else:
        raise ValueError(f"unknown psf {kind!r}")
    return P / P.sum()


def test_image(name: str, N: int) -> np.ndarray:
    """Grayscale test image scaled to ``[0, 1]`` and resized to ``N x N``.

    The images come from :mod:`skimage.data` (centre-cropped to a square).
    """
    from skimage import color, data, transform

    if name in ("camera", "cameraman"):
        img = data.camera().astype(np.float64)
    elif name == "hubble":
        img = color.rgb2gray(data.hubble_deep_field())
    elif name == "rocket":
        img = color.rgb2gray(data.rocket())
    elif name == "moon":
        img = data.moon().astype(np.float64)
    elif name == "phantom":
        img = data.shepp_logan_phantom()
    else:
        raise ValueError(f"unknown image {name!r}")
    h, w = img.shape
    c = min(h, w)
    img = img[(h - c) // 2 : (h - c) // 2 + c, (w - c) // 2 : (w - c) // 2 + c]
    img = transform.resize(img, (N, N), anti_aliasing=True)
    img = img - img.min()
    return img / img.max()


TEST_IMAGES = ("rocket", "cameraman", "moon", "phantom", "hubble")

# a photo of a spacecraft stands in for the telescope picture under the
# speckle-like blur; the deep-field starfield restores poorly at small N
_BLUR_DEFAULTS = {
    "gaussian": {"image": "rocket"},
    "disk": {"image": "cameraman"},
}


def blur2d(n: int, blur_params: dict | None = None):
    N = int(round(np.sqrt(n)))
    if N * N != n:
        raise ValueError(f"blur2d needs n to be a perfect square, got {n}")
    p = dict(blur_params or {})
    kind = p.pop("psf", "gaussian")
    image = p.pop("image", _BLUR_DEFAULTS.get(kind, {}).get("image", "phantom"))
    # defaults scale with the image so that the blur level is size independent
    if kind == "gaussian":
        psf = make_psf("gaussian", sigma=float(p.pop("sigma", N / 32)))
    else:
        psf = make_psf(kind, radius=float(p.pop("radius", N / 16)))
    if p:
        raise ValueError(f"unknown blur parameters {sorted(p)}")
    return BlurOperator(psf, N), test_image(image, N).reshape(-1)


def generate(problem: str, n: int, blur_params: dict | None = None):
    """Return ``(A, x_ex)`` for a named test problem.

    ``A`` is a :class:`DenseOperator` for the 1-D problems and a
    :class:`BlurOperator` for ``blur2d`` (where ``n`` is the number of
    pixels).
    """
    if problem not in PROBLEMS:
        raise ValueError(f"unknown problem {problem!r}; choose from {PROBLEMS}")
    if int(n) != n or n < 4:
        raise ValueError(f"invalid size {n}")
    n = int(n)
    if problem == "blur2d":
        return blur2d(n, blur_params)
    if blur_params:
        raise ValueError("blur_params only apply to blur2d")
    A, x = {"shaw": shaw, "deriv2": deriv2, "gravity": gravity, "heat": heat}[problem](n)
    return DenseOperator(A), x


def add_noise(b_ex, eps: float, seed):
    """White Gaussian noise scaled so that ``||e|| = eps ||b_ex||``.

    Returns ``(b, e)``.  ``e`` is taken as ``b - b_ex`` after forming ``b``,
    so ``b - b_ex - e`` is exactly zero in floating point.
    """
    if not 0 < eps < 1:
        raise ValueError(f"noise level must lie in (0, 1), got {eps}")
    b_ex = np.asarray(b_ex, dtype=np.float64)
    nb = np.linalg.norm(b_ex)
    if nb == 0:
        raise ValueError("b_ex must be nonzero")
    g = np.random.default_rng(seed).standard_normal(b_ex.shape)
    b = b_ex + (eps * nb / np.linalg.norm(g)) * g
    return b, b - b_ex


@dataclass(frozen=True)
class ProblemInstance:
    """A noisy linear problem ``b = A x_ex + e``."""

    name: str
    A: object
    x_ex: np.ndarray
    b_ex: np.ndarray
    b: np.ndarray
    e: np.ndarray
    eps: float
    seed: int | None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        m, n = self.A.shape
        if m < n:
            raise ValueError("only problems with m >= n are supported")
        for a in (self.x_ex, self.b_ex, self.b, self.e):
            a.setflags(write=False)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def noise_norm(self) -> float:
        return float(np.linalg.norm(self.e))


def make_instance(problem: str, n: int, eps: float, seed: int, blur_params: dict | None = None):
    A, x_ex = generate(problem, n, blur_params)
    b_ex = A.matvec(x_ex)
    b, e = add_noise(b_ex, eps, seed)
    params = {"n": int(n)}
    if blur_params:
        params["blur_params"] = dict(blur_params)
    return ProblemInstance(problem, A, x_ex, b_ex, b, e, float(eps), seed, params)


def save_instance(path, inst: ProblemInstance) -> Path:
    """Write an instance to a ``.npz`` archive so a run can be replayed."""
    path = Path(path)
    meta = {
        "name": inst.name,
        "eps": inst.eps,
        "seed": inst.seed,
        "params": inst.params,
    }
    arrays = {"x_ex": inst.x_ex, "b_ex": inst.b_ex, "b": inst.b, "e": inst.e}
    if isinstance(inst.A, BlurOperator):
        meta["operator"] = {"kind": "blur", "N": inst.A.N, "boundary": "zero"}
        arrays["psf"] = inst.A.psf
    else:
        meta["operator"] = {"kind": "dense", "layout": "row-major"}
        arrays["A"] = inst.A.to_dense()
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)
    return path


def load_instance(path) -> ProblemInstance:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        op = meta["operator"]
        if op["kind"] == "blur":
            if op.get("boundary", "zero") != "zero":
                raise ValueError("only zero boundary conditions are supported")
            A = BlurOperator(z["psf"], op["N"])
        elif op["kind"] == "dense":
            A = DenseOperator(z["A"])
        else:
            raise ValueError(f"unknown operator kind {op['kind']!r}")
        return ProblemInstance(
            meta["name"],
            A,
            z["x_ex"].copy(),
            z["b_ex"].copy(),
            z["b"].copy(),
            z["e"].copy(),
            float(meta["eps"]),
            meta["seed"],
            meta["params"],
        )
