"""Dataset generation and ingestion.

Synthetic generators draw their Gaussians by Box-Muller from the seeded
uniform stream (recorded in the meta dict) so that replaying a meta
record reproduces the data bit for bit even if numpy's own normal
sampler changes. MNIST-style data comes in as standard IDX containers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernel
from .kernel import KernelSpec
from .numerics import chol_lower

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


class IdxError(ValueError):
    """Base class for IDX container problems."""


class IdxMagicError(IdxError):
    """File does not start with the expected IDX magic number."""


class IdxTruncatedError(IdxError):
    """File ended before the declared payload was read."""


class IdxCountMismatchError(IdxError):
    """Image and label files declare different item counts."""


@dataclass(frozen=True)
class LabeledData:
    """Points, labels, and the provenance needed to regenerate them."""

    X: np.ndarray
    y: np.ndarray
    meta: dict


def _standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Box-Muller standard normals from the generator's uniform stream."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape))
    half = (count + 1) // 2
    u1 = 1.0 - rng.random(half)  # in (0, 1], keeps the log finite
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return z[:count].reshape(shape)


def gen_grf(n: int, sigma_x: float, sigma_y: float, spec: KernelSpec, seed: int) -> LabeledData:
    """Gaussian-random-field regression data in 2-d.

    X rows are i.i.d. N(0, sigma_x^2 I_2); labels are one draw from the
    kernel prior, y = L z with L L^T = K + sigma_y^2 I.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not sigma_x > 0:
        raise ValueError(f"sigma_x must be positive, got {sigma_x}")
    if sigma_y < 0:
        raise ValueError(f"sigma_y must be nonnegative, got {sigma_y}")
    rng = np.random.default_rng(seed)
    X = sigma_x * _standard_normal(rng, (n, 2))
    K = kernel.gram(spec, X, X)
    L = chol_lower(K, jitter=sigma_y**2)
    y = L @ _standard_normal(rng, n)
    meta = {
        "generator": "grf",
        "n": n,
        "sigma_x": sigma_x,
        "sigma_y": sigma_y,
        "lengthscale": spec.lengthscale,
        "family": spec.family,
        "seed": int(seed),
        "gaussian": "box-muller",
    }
    return LabeledData(X=X, y=y, meta=meta)


def gen_two_clusters(n: int, sigma_x: float, seed: int) -> LabeledData:
    """Two clamped Gaussian clusters with labels -1 / +1.

    Cluster 1 is centered at (-2, 0) with first coordinate clamped to
    <= -0.4; cluster 2 at (2, 0) clamped to >= 0.4, leaving a margin.
    """
    if n % 2 != 0:
        raise ValueError(f"n must be even, got {n}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    rng = np.random.default_rng(seed)
    half = n // 2
    c1 = np.array([-2.0, 0.0]) + sigma_x * _standard_normal(rng, (half, 2))
    c1[:, 0] = np.minimum(c1[:, 0], -0.4)
    c2 = np.array([2.0, 0.0]) + sigma_x * _standard_normal(rng, (half, 2))
    c2[:, 0] = np.maximum(c2[:, 0], 0.4)
    X = np.vstack([c1, c2])
    y = np.concatenate([-np.ones(half), np.ones(half)])
    meta = {
        "generator": "two-clusters",
        "n": n,
        "sigma_x": sigma_x,
        "seed": int(seed),
        "gaussian": "box-muller",
    }
    return LabeledData(X=X, y=y, meta=meta)


def replay(meta: dict) -> LabeledData:
    """Regenerate a synthetic dataset from its meta record."""
    name = meta.get("generator")
    if name == "grf":
        spec = KernelSpec(lengthscale=meta["lengthscale"], family=meta["family"])
        return gen_grf(meta["n"], meta["sigma_x"], meta["sigma_y"], spec, meta["seed"])
    if name == "two-clusters":
        return gen_two_clusters(meta["n"], meta["sigma_x"], meta["seed"])
    raise ValueError(f"cannot replay generator {name!r}")


def _read_exact(handle, nbytes: int, path) -> bytes:
    data = handle.read(nbytes)
    if len(data) < nbytes:
        raise IdxTruncatedError(f"{path}: expected {nbytes} more bytes, got {len(data)}")
    return data


def load_mnist_idx(images_path, labels_path):
    """Read an IDX image/label pair.

    Returns (images, labels) with images flattened to (count, rows*cols)
    float64 scaled to [0, 1] and labels as uint8.
    """
    with open(images_path, "rb") as handle:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(handle, 16, images_path))
        if magic != IDX_IMAGE_MAGIC:
            raise IdxMagicError(f"{images_path}: bad image magic {magic}, expected {IDX_IMAGE_MAGIC}")
        payload = _read_exact(handle, count * rows * cols, images_path)
    images = np.frombuffer(payload, dtype=np.uint8).astype(float) / 255.0
    images = images.reshape(count, rows * cols)

    with open(labels_path, "rb") as handle:
        magic, label_count = struct.unpack(">II", _read_exact(handle, 8, labels_path))
        if magic != IDX_LABEL_MAGIC:
            raise IdxMagicError(f"{labels_path}: bad label magic {magic}, expected {IDX_LABEL_MAGIC}")
        labels = np.frombuffer(_read_exact(handle, label_count, labels_path), dtype=np.uint8)

    if count != label_count:
        raise IdxCountMismatchError(
            f"image count {count} != label count {label_count}"
        )
    return images, labels


def write_idx_images(path, images: np.ndarray) -> None:
    """Write uint8 images of shape (count, rows, cols) as an IDX file."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(path, "wb") as handle:
        handle.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, count, rows, cols))
        handle.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    """Write uint8 labels of shape (count,) as an IDX file."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as handle:
        handle.write(struct.pack(">II", IDX_LABEL_MAGIC, labels.shape[0]))
        handle.write(labels.tobytes())


def binary_subset(data, class_a: int, class_b: int, n: int, seed: int) -> LabeledData:
    """Balanced two-class subset with labels -1 (class_a) / +1 (class_b)."""
    images, labels = data
    if n % 2 != 0:
        raise ValueError(f"n must be even, got {n}")
    rng = np.random.default_rng(seed)
    half = n // 2
    parts = []
    for cls, sign in ((class_a, -1.0), (class_b, 1.0)):
        idx = np.flatnonzero(labels == cls)
        if idx.shape[0] < half:
            raise ValueError(
                f"insufficient examples of class {cls}: need {half}, have {idx.shape[0]}"
            )
        sel = rng.choice(idx, size=half, replace=False)
        parts.append((images[sel], np.full(half, sign)))
    X = np.vstack([parts[0][0], parts[1][0]])
    y = np.concatenate([parts[0][1], parts[1][1]])
    meta = {
        "generator": "binary-subset",
        "class_a": int(class_a),
        "class_b": int(class_b),
        "n": n,
        "seed": int(seed),
    }
    return LabeledData(X=X, y=y, meta=meta)
