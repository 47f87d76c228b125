"""Dense linear algebra helpers and seeded randomness.

Matrices are plain ``float64`` numpy arrays in C (row-major) order.

Randomness uses numpy's ``PCG64`` bit generator seeded through
``SeedSequence``. Sub-streams are derived from the global seed plus a purpose
tag and integer ids: the tag is hashed with CRC-32 and the resulting entropy
list ``[seed, crc32(tag), *ids]`` seeds a fresh ``SeedSequence``.  Both PCG64
and the SeedSequence hashing are fixed, documented algorithms, so a given
``(seed, tag, ids)`` triple draws the same numbers on every platform.
"""
from __future__ import annotations

import zlib

import numpy as np


class ShapeError(ValueError):
    """Raised when array dimensions do not conform."""


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def derive_rng(seed: int, tag: str, *ids: int) -> np.random.Generator:
    """Independent generator for ``(seed, tag, *ids)``.

    >>> a = derive_rng(0, "layer", 1, 2).standard_normal()
    >>> b = derive_rng(0, "layer", 1, 2).standard_normal()
    >>> a == b
    True
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode("utf-8"))]
    entropy.extend(int(i) for i in ids)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def orthogonal_init(rows: int, cols: int, rng: np.random.Generator,
                    gain: float = 1.0) -> np.ndarray:
    """Matrix with orthonormal columns (Saxe et al. style).

    A ``rows x cols`` standard Gaussian draw is QR-factorised (Householder,
    LAPACK ``geqrf``) and each column of Q is multiplied by the sign of the
    matching diagonal entry of R, which makes the result unique for a given
    draw.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"dimensions must be positive, got ({rows}, {cols})")
    if cols > rows:
        raise ShapeError(f"orthogonal_init needs cols <= rows, got ({rows}, {cols})")
    a = rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(a, mode="reduced")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    if gain != 1.0:
        q = q * gain
    return np.ascontiguousarray(q)
