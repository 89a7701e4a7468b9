"""Problem instance construction and image I/O.

Random sparse-recovery instances (minimize a strongly convex quadratic plus
the l1 norm subject to underdetermined linear equations), the discrete
total-variation denoising model (forward-difference gradient operator,
column-major vectorization, seeded noise), and portable graymap files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .linalg import CsrMatrix

__all__ = [
    "L1L2Instance",
    "RofInstance",
    "gen_l1l2",
    "discrete_gradient",
    "image_to_vec",
    "vec_to_image",
    "shapes_image",
    "add_noise",
    "gen_rof",
    "rof_from_image",
    "pgm_read",
    "pgm_write",
    "l1l2_recipe",
    "rof_recipe",
    "build_instance",
    "save_recipe",
    "load_recipe",
]


@dataclass
class L1L2Instance:
    """Equality-constrained sparse recovery data: ``A x = b`` with ``m < n``.

    ``x_true`` is the planted sparse generator of ``b`` when the instance was
    synthesized.  ``dense()`` caches a dense copy of ``A`` for the direct
    inner solvers.
    """

    A: CsrMatrix
    b: np.ndarray
    rho: float
    seed: int
    x_true: Optional[np.ndarray] = None
    _dense: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.A.to_dense()
        return self._dense


@dataclass
class RofInstance:
    """Total-variation denoising data on an ``m x n`` pixel grid.

    ``image`` is the observed (noisy) grid; ``grad`` the stacked discrete
    gradient operator; ``clean`` the ground truth when synthesized.
    """

    image: np.ndarray
    rho: float
    grad: CsrMatrix
    seed: int
    clean: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.image.shape

    @property
    def xi(self) -> np.ndarray:
        return image_to_vec(self.image)


def gen_l1l2(m: int, n: int, rho: float, sparsity: float, seed: int) -> L1L2Instance:
    """Random instance: standard-normal ``A``, planted sparse solution.

    The planted vector has ``ceil(sparsity * n)`` nonzeros at uniformly
    chosen positions with standard-normal values, and ``b = A x_true``.
    """
    if not 0 < m < n:
        raise ValueError("require 0 < m < n")
    if not 0.0 < sparsity < 1.0:
        raise ValueError("sparsity must lie in (0, 1)")
    if rho <= 0:
        raise ValueError("rho must be positive")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    k = math.ceil(sparsity * n)
    positions = rng.choice(n, size=k, replace=False)
    values = rng.standard_normal(k)
    x_true = np.zeros(n)
    x_true[positions] = values
    b = A @ x_true
    inst = L1L2Instance(CsrMatrix.from_dense(A), b, float(rho), int(seed), x_true)
    inst._dense = A
    return inst


def _forward_difference(m: int) -> sp.csr_matrix:
    """m x m forward-difference matrix with a zero last row."""
    rows = np.repeat(np.arange(m - 1), 2)
    cols = np.empty(2 * (m - 1), dtype=np.int64)
    cols[0::2] = np.arange(m - 1)
    cols[1::2] = np.arange(1, m)
    vals = np.tile([-1.0, 1.0], m - 1)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))


def discrete_gradient(m: int, n: int) -> CsrMatrix:
    """Stacked forward differences on an ``m x n`` grid, column-major order.

    Returns the ``2mn x mn`` matrix whose top block takes differences down
    each column (zero at the bottom boundary) and whose lower block takes
    differences across rows (zero at the right boundary).
    """
    if m < 2 or n < 2:
        raise ValueError("grid must be at least 2 x 2")
    d_m = _forward_difference(m)
    d_n = _forward_difference(n)
    vertical = sp.kron(sp.identity(n, format="csr"), d_m, format="csr")
    horizontal = sp.kron(d_n, sp.identity(m, format="csr"), format="csr")
    return CsrMatrix.from_scipy(sp.vstack([vertical, horizontal], format="csr"))


def image_to_vec(image: np.ndarray) -> np.ndarray:
    """Flatten a grid by columns."""
    return np.asarray(image, dtype=float).ravel(order="F")


def vec_to_image(vec: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`image_to_vec` for the given grid shape."""
    return np.asarray(vec, dtype=float).reshape(shape, order="F")


def shapes_image(size: int = 64) -> np.ndarray:
    """Deterministic piecewise-constant test image: rectangles plus a disk.

    Values lie in [0, 255]; the flat regions make the total-variation
    structure easy to recover.
    """
    if size < 8:
        raise ValueError("size must be at least 8")
    img = np.full((size, size), 30.0)
    img[size // 8 : size // 2, size // 6 : size // 2] = 200.0
    img[5 * size // 8 : 7 * size // 8, size // 8 : 5 * size // 8] = 120.0
    rows, cols = np.ogrid[0:size, 0:size]
    center = (size // 4, 3 * size // 4)
    disk = (rows - center[0]) ** 2 + (cols - center[1]) ** 2 <= (size // 6) ** 2
    img[disk] = 255.0
    return img


def add_noise(image: np.ndarray, seed: int, scale: float = 10.0) -> np.ndarray:
    """Add seeded Gaussian noise, ``scale`` times standard normal per pixel."""
    image = np.asarray(image, dtype=float)
    if not np.all(np.isfinite(image)):
        raise ValueError("image must be finite")
    rng = np.random.default_rng(seed)
    return image + scale * rng.standard_normal(image.shape)


def gen_rof(size: int, rho: float, seed: int, noise_scale: float = 10.0) -> RofInstance:
    """Synthetic denoising instance: noisy shapes image plus its gradient operator."""
    clean = shapes_image(size)
    noisy = add_noise(clean, seed, noise_scale)
    return RofInstance(noisy, float(rho), discrete_gradient(size, size), int(seed), clean)


def rof_from_image(image: np.ndarray, rho: float, seed: int = 0) -> RofInstance:
    """Denoising instance around a given observed grid (no extra noise)."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("image must be a 2-D grid")
    m, n = image.shape
    return RofInstance(image, float(rho), discrete_gradient(m, n), int(seed))


# -- portable graymap I/O -------------------------------------------------

def _pgm_tokens(data: bytes):
    """Yield header tokens, skipping '#' comments, tracking the byte offset."""
    i = 0
    while True:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        if i >= len(data):
            raise ValueError("malformed header: unexpected end of file")
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        yield data[i:j].decode("ascii"), j
        i = j


def pgm_read(path: str) -> np.ndarray:
    """Read a P2 (ASCII) or P5 (binary) graymap as a float grid.

    Samples are returned as stored when the file's maximum value is at most
    255, and rescaled onto [0, 255] otherwise.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = _pgm_tokens(data)
    magic, _ = next(tokens)
    if magic not in ("P2", "P5"):
        raise ValueError(f"unsupported graymap magic {magic!r}")
    try:
        width, _ = next(tokens)
        height, _ = next(tokens)
        maxval, offset = next(tokens)
        width, height, maxval = int(width), int(height), int(maxval)
    except (StopIteration, ValueError) as exc:
        raise ValueError("malformed header") from exc
    if width <= 0 or height <= 0 or not 0 < maxval <= 65535:
        raise ValueError("malformed header: bad dimensions or maxval")
    count = width * height

    if magic == "P2":
        fields = data[offset:].split()
        if len(fields) < count:
            raise ValueError("truncated payload")
        samples = np.array([int(f) for f in fields[:count]], dtype=float)
    else:
        payload = data[offset + 1 :]
        itemsize = 1 if maxval <= 255 else 2
        if len(payload) < count * itemsize:
            raise ValueError("truncated payload")
        dtype = np.uint8 if itemsize == 1 else np.dtype(">u2")
        samples = np.frombuffer(payload[: count * itemsize], dtype=dtype).astype(float)

    if np.any(samples > maxval):
        raise ValueError("sample exceeds declared maximum")
    grid = samples.reshape((height, width))
    if maxval > 255:
        grid = grid * (255.0 / maxval)
    return grid


def pgm_write(path: str, image: np.ndarray, maxval: int = 255, binary: bool = True) -> None:
    """Write a grid as a P5 (binary) or P2 (ASCII) graymap.

    Values are rounded to the nearest integer and clipped to [0, maxval];
    a two-byte big-endian payload is used when ``maxval`` exceeds 255.
    """
    if not 0 < maxval <= 65535:
        raise ValueError("maxval must lie in [1, 65535]")
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("image must be a 2-D grid")
    height, width = image.shape
    samples = np.clip(np.rint(image), 0, maxval).astype(np.int64)
    header = f"{'P5' if binary else 'P2'}\n{width} {height}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            dtype = np.uint8 if maxval <= 255 else np.dtype(">u2")
            fh.write(samples.astype(dtype).tobytes())
        else:
            lines = [" ".join(str(v) for v in row) for row in samples]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


# -- instance recipes (JSON) ----------------------------------------------

def l1l2_recipe(m: int, n: int, rho: float, sparsity: float, seed: int) -> dict:
    """Serializable description of a random sparse-recovery instance."""
    return {
        "kind": "l1l2",
        "m": int(m),
        "n": int(n),
        "rho": float(rho),
        "sparsity": float(sparsity),
        "seed": int(seed),
    }


def rof_recipe(size: int, rho: float, seed: int, noise_scale: float = 10.0) -> dict:
    """Serializable description of a synthetic denoising instance."""
    return {
        "kind": "rof",
        "m": int(size),
        "n": int(size),
        "rho": float(rho),
        "seed": int(seed),
        "noise_scale": float(noise_scale),
    }


def build_instance(recipe: dict):
    """Reconstruct an instance from its recipe document."""
    kind = recipe.get("kind")
    if kind == "l1l2":
        return gen_l1l2(
            recipe["m"], recipe["n"], recipe["rho"], recipe["sparsity"], recipe["seed"]
        )
    if kind == "rof":
        return gen_rof(recipe["m"], recipe["rho"], recipe["seed"], recipe.get("noise_scale", 10.0))
    raise ValueError(f"unknown instance kind {kind!r}")


def save_recipe(path: str, recipe: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(recipe, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_recipe(path: str) -> dict:
    with open(path, "r", encoding="ascii") as fh:
        recipe = json.load(fh)
    if not isinstance(recipe, dict) or "kind" not in recipe:
        raise ValueError("instance document must be an object with a 'kind' field")
    return recipe
