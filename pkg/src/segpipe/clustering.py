"""K-means over pixel RGB values: the pseudo-label generator.

Lloyd's algorithm with k-means++ seeding from the package's own seeded
PRNG, so a (pixels, k, seed, max_iters, tol) tuple always yields the same
model, bit for bit. Distances are squared Euclidean in raw RGB.
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, ParameterError
from .rng import XorShift64Star


@dataclass(eq=False)
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, 3) float64, RGB in [0, 255]
    inertia: float
    iterations_run: int
    seed: int
    # inertia after every assignment step, for monotonicity checks
    inertia_history: list = field(default_factory=list, repr=False)

    def to_text(self) -> str:
        """Line 1: 'k seed iterations inertia'; then k lines 'r g b' (6 decimals)."""
        lines = [f"{self.k} {self.seed} {self.iterations_run} {self.inertia:.6f}"]
        for r, g, b in self.centroids:
            lines.append(f"{r:.6f} {g:.6f} {b:.6f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise FormatError("empty cluster model text")
        head = lines[0].split()
        if len(head) != 4:
            raise FormatError("cluster model line 1 must be 'k seed iterations inertia'")
        try:
            k, seed, iterations = int(head[0]), int(head[1]), int(head[2])
            inertia = float(head[3])
        except ValueError as exc:
            raise FormatError(f"cluster model header: {exc}") from None
        if len(lines) != 1 + k:
            raise FormatError(f"expected {k} centroid lines, found {len(lines) - 1}")
        centroids = np.empty((k, 3), dtype=np.float64)
        for i, ln in enumerate(lines[1:]):
            parts = ln.split()
            if len(parts) != 3:
                raise FormatError(f"centroid line {i + 2} must hold 3 floats")
            centroids[i] = [float(p) for p in parts]
        return cls(k=k, centroids=centroids, inertia=inertia,
                   iterations_run=iterations, seed=seed)


def save_cluster_model(model: ClusterModel, path) -> None:
    Path(path).write_text(model.to_text(), encoding="utf-8")


def load_cluster_model(path) -> ClusterModel:
    return ClusterModel.from_text(Path(path).read_text(encoding="utf-8"))


def _assign(points, centroids):
    """Nearest centroid per point; returns (squared distances, labels)."""
    diff = points[:, None, :] - centroids[None, :, :]
    d2 = (diff * diff).sum(axis=2)
    labels = d2.argmin(axis=1)  # argmin takes the lowest index on ties
    return d2[np.arange(points.shape[0]), labels], labels


def _plusplus_init(points, k, rng):
    """k-means++ seeding: next centroid chosen with probability ~ D^2."""
    m = points.shape[0]
    centroids = np.empty((k, 3), dtype=np.float64)
    centroids[0] = points[rng.randrange(m)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = rng.randrange(m)
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, m - 1)
        centroids[i] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def kmeans_fit(pixels, k: int, seed: int = 42, max_iters: int = 100,
               tol: float = 0.5) -> ClusterModel:
    """Fit k RGB centroids with Lloyd's algorithm.

    Stops when the largest centroid shift falls below tol (RGB units) or
    after max_iters iterations. If k exceeds the number of distinct colors
    it is reduced to that count (with a warning). Inertia is re-measured
    after the final update, so model.inertia matches a fresh assignment.
    """
    points = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] == 0:
        raise DataError("cannot fit k-means on an empty pixel set")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if k > 256:
        raise ParameterError(f"k must be <= 256 so labels fit one byte, got {k}")
    n_distinct = np.unique(points, axis=0).shape[0]
    if k > n_distinct:
        warnings.warn(
            f"k={k} exceeds the {n_distinct} distinct colors in the data; "
            f"fitting k={n_distinct}",
            stacklevel=2,
        )
        k = n_distinct

    rng = XorShift64Star(seed)
    centroids = _plusplus_init(points, k, rng)
    history = []
    iterations = 0
    for _ in range(max_iters):
        d2, labels = _assign(points, centroids)
        inertia = float(d2.sum())
        if history:
            assert inertia <= history[-1] + 1e-6 * max(1.0, history[-1]), \
                "k-means inertia increased between iterations"
        history.append(inertia)

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros((k, 3), dtype=np.float64)
        np.add.at(sums, labels, points)
        new_centroids = centroids.copy()
        nonempty = counts > 0
        new_centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            # move each empty centroid onto the worst-fit point
            worst = d2.copy()
            for c in np.flatnonzero(~nonempty):
                idx = int(np.argmax(worst))
                new_centroids[c] = points[idx]
                worst[idx] = -1.0

        iterations += 1
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < tol:
            break

    d2, _ = _assign(points, centroids)
    final_inertia = float(d2.sum())
    if history:
        assert final_inertia <= history[-1] + 1e-6 * max(1.0, history[-1])
    history.append(final_inertia)
    return ClusterModel(k=k, centroids=centroids, inertia=final_inertia,
                        iterations_run=iterations, seed=seed,
                        inertia_history=history)


def kmeans_assign(image: np.ndarray, model: ClusterModel) -> np.ndarray:
    """Label every pixel with its nearest centroid (lowest index on ties)."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DataError(f"image must be (H, W, 3), got {image.shape}")
    h, w = image.shape[:2]
    flat = image.reshape(-1, 3).astype(np.float64)
    diff = flat[:, None, :] - model.centroids[None, :, :]
    labels = (diff * diff).sum(axis=2).argmin(axis=1)
    return labels.astype(np.uint8).reshape(h, w)


def recolor(labels: np.ndarray, colors) -> np.ndarray:
    """Paint labels with colors[label]; float colors are rounded half-up.

    colors is a (k, 3) array: centroids (float, rounded half-up to 8 bit)
    or palette colors (integer, used verbatim).
    """
    labels = np.asarray(labels)
    colors = np.asarray(colors)
    if colors.ndim != 2 or colors.shape[1] != 3:
        raise DataError(f"colors must be (k, 3), got {colors.shape}")
    if labels.size and int(labels.max()) >= colors.shape[0]:
        raise DataError(
            f"label {int(labels.max())} out of range for {colors.shape[0]} colors"
        )
    if np.issubdtype(colors.dtype, np.floating):
        table = np.clip(np.floor(colors + 0.5), 0, 255).astype(np.uint8)
    else:
        if colors.size and (int(colors.min()) < 0 or int(colors.max()) > 255):
            raise DataError("integer colors must lie in [0, 255]")
        table = colors.astype(np.uint8)
    return table[labels]
