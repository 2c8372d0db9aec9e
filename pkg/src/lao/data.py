"""Datasets: IDX / CSV loading, the 3-vs-5 task, normalization, folds, generators."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import ConfigurationError, DataFormatError, InvalidInputError, LabeledInstance

IDX_IMAGES_MAGIC = 2051  # 0x00000803
IDX_LABELS_MAGIC = 2049  # 0x00000801

CERT_L2 = "l2"
CERT_LINF = "linf"
NORM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of labeled instances stored as a dense matrix.

    ``pixel_scale`` is set for raw image data (255 for MNIST bytes) and is
    cleared once the data has been normalized.
    """

    X: np.ndarray
    y: np.ndarray
    norm_certificate: str | None = None
    pixel_scale: float | None = None
    raw_labels: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or X.shape[1] < 1:
            raise InvalidInputError("X must be a 2-d array with at least one column")
        if y.shape != (X.shape[0],):
            raise InvalidInputError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.norm_certificate is not None:
            verify_certificate(self)

    def __len__(self):
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def label_bound(self) -> float:
        return float(np.abs(self.y).max()) if len(self) else 0.0

    def instance(self, t: int) -> LabeledInstance:
        return LabeledInstance(self.X[t], self.y[t])

    def __iter__(self):
        for t in range(len(self)):
            yield self.instance(t)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.intp)
        raw = None if self.raw_labels is None else self.raw_labels[indices]
        return replace(self, X=self.X[indices], y=self.y[indices], raw_labels=raw)


def max_norm(X: np.ndarray, kind: str) -> float:
    if X.shape[0] == 0:
        return 0.0
    if kind == CERT_L2:
        return float(np.sqrt(np.einsum("ij,ij->i", X, X)).max())
    if kind == CERT_LINF:
        return float(np.abs(X).max())
    raise ConfigurationError(f"unknown norm target {kind!r}")


def verify_certificate(ds: Dataset) -> None:
    """Full scan: every instance must satisfy the claimed norm bound."""
    if ds.norm_certificate is None:
        raise ConfigurationError("dataset has not been normalized")
    worst = max_norm(ds.X, ds.norm_certificate)
    if worst > 1.0 + NORM_TOLERANCE:
        raise ConfigurationError(
            f"dataset claims {ds.norm_certificate} norm <= 1 but an instance has norm {worst:.6g}"
        )


# --------------------------------------------------------------------------- IDX


def _read_idx_header(buf: bytes, path, expected_magic: int, ndims: int):
    if len(buf) < 4 + 4 * ndims:
        raise DataFormatError(f"{path}: truncated header at offset {len(buf)}")
    (magic,) = struct.unpack_from(">i", buf, 0)
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: bad magic number {magic} at offset 0 (expected {expected_magic})"
        )
    dims = struct.unpack_from(f">{ndims}i", buf, 4)
    return dims, 4 + 4 * ndims


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image file and its label file (MNIST layout)."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    img = images_path.read_bytes()
    lab = labels_path.read_bytes()
    (n_img, rows, cols), off_img = _read_idx_header(img, images_path, IDX_IMAGES_MAGIC, 3)
    (n_lab,), off_lab = _read_idx_header(lab, labels_path, IDX_LABELS_MAGIC, 1)
    if n_img != n_lab:
        raise DataFormatError(
            f"{labels_path}: label count {n_lab} at offset 4 does not match image count {n_img}"
        )
    need = off_img + n_img * rows * cols
    if len(img) < need:
        raise DataFormatError(f"{images_path}: truncated pixel data at offset {len(img)} (need {need} bytes)")
    if len(lab) < off_lab + n_lab:
        raise DataFormatError(f"{labels_path}: truncated label data at offset {len(lab)}")
    pixels = np.frombuffer(img, dtype=np.uint8, count=n_img * rows * cols, offset=off_img)
    labels = np.frombuffer(lab, dtype=np.uint8, count=n_lab, offset=off_lab)
    X = pixels.reshape(n_img, rows * cols).astype(float)
    return Dataset(X, labels.astype(float), pixel_scale=255.0, raw_labels=labels.astype(int))


def write_idx(images_path, labels_path, images: np.ndarray, labels) -> None:
    """Write uint8 images of shape ``(n, rows, cols)`` and labels as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">4i", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2i", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes())


# --------------------------------------------------------------------------- CSV


def load_csv(path) -> Dataset:
    """Comma-separated rows, last column is the target; a header row is optional."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise DataFormatError(f"{path}: non-numeric value on line {lineno}") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2:
        raise DataFormatError(f"{path}: need at least one attribute column and a target column")
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataFormatError(f"{path}: row {i + 1} has {len(r)} columns, expected {width}")
    arr = np.array(rows)
    return Dataset(arr[:, :-1], arr[:, -1])


def save_csv(ds: Dataset, path, header: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow([f"x{i}" for i in range(ds.d)] + ["y"])
        for x, y in zip(ds.X, ds.y):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])


# --------------------------------------------------------------------------- tasks


def make_binary_task(ds: Dataset, pos_digit: int, neg_digit: int) -> Dataset:
    """Keep two digit classes; ``pos_digit -> +1``, ``neg_digit -> -1``."""
    for digit in (pos_digit, neg_digit):
        if not 0 <= digit <= 9:
            raise ConfigurationError(f"digit {digit} outside 0-9")
    if pos_digit == neg_digit:
        raise ConfigurationError("positive and negative digits must differ")
    raw = ds.raw_labels if ds.raw_labels is not None else ds.y.astype(int)
    keep = np.flatnonzero((raw == pos_digit) | (raw == neg_digit))
    if keep.size == 0:
        raise ConfigurationError(f"no instances labeled {pos_digit} or {neg_digit}")
    y = np.where(raw[keep] == pos_digit, 1.0, -1.0)
    return replace(ds, X=ds.X[keep], y=y, raw_labels=raw[keep])


def normalize(ds: Dataset, target: str) -> Dataset:
    """Rescale attributes so every instance has norm <= 1 in ``target`` ("l2" or "linf").

    A single global scale is used, so linear relations between x and y are
    preserved up to the weight scale.  Raw pixel data is divided by its pixel
    scale for ``linf``.
    """
    if target not in (CERT_L2, CERT_LINF):
        raise ConfigurationError(f"normalization target must be 'l2' or 'linf', got {target!r}")
    if target == CERT_LINF and ds.pixel_scale:
        scale = ds.pixel_scale
        if max_norm(ds.X, CERT_LINF) == 0:
            raise ConfigurationError("cannot normalize an all-zero dataset")
    else:
        scale = max_norm(ds.X, target)
        if scale == 0:
            raise ConfigurationError("cannot normalize an all-zero dataset")
    X = ds.X if scale == 1.0 else ds.X / scale
    return replace(ds, X=X, norm_certificate=target, pixel_scale=None)


# --------------------------------------------------------------------------- splits


@dataclass(frozen=True)
class FoldPlan:
    fold_count: int
    assignment: np.ndarray

    def fold(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(train indices, validation indices) for fold ``i``, each in original order."""
        val = np.flatnonzero(self.assignment == i)
        train = np.flatnonzero(self.assignment != i)
        return train, val

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.fold_count)


def kfold(ds, folds: int = 10, seed: int = 0) -> FoldPlan:
    n = len(ds)
    if folds < 2:
        raise ConfigurationError(f"need at least 2 folds, got {folds}")
    if folds > n:
        raise ConfigurationError(f"{folds} folds requested for only {n} instances")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.intp)
    assignment[perm] = np.arange(n) % folds
    return FoldPlan(folds, assignment)


def split_indices(n: int, train_fraction: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random (train, test) index arrays; train keeps the permuted order."""
    if not 0 < train_fraction < 1:
        raise ConfigurationError("train_fraction must lie strictly between 0 and 1")
    n_train = int(round(n * train_fraction))
    if n_train == 0 or n_train == n:
        raise ConfigurationError(f"split of {n} instances at {train_fraction} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return perm[:n_train], perm[n_train:]


def split(ds: Dataset, train_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    train, test = split_indices(len(ds), train_fraction, seed)
    return ds.subset(train), ds.subset(test)


# --------------------------------------------------------------------------- generators


def _unit_sphere(rng, m, d):
    Z = rng.standard_normal((m, d))
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return Z / norms


def synth_linear(
    d: int,
    m: int,
    sparsity: int | None = None,
    noise_sd: float = 0.0,
    norm_target: str = CERT_L2,
    seed: int = 0,
    B: float = 1.0,
):
    """Linear-model data ``y = w*.x + noise`` with ``|y|`` clamped to ``B``.

    For ``l2`` the instances lie on the unit sphere and ``||w*||_2 = B``; for
    ``linf`` they are uniform on the cube ``[-1, 1]^d`` and ``||w*||_1 = B``.
    Returns ``(dataset, w_star)``; the dataset carries the matching certificate.
    """
    sparsity = d if sparsity is None else sparsity
    if not 1 <= sparsity <= d:
        raise ConfigurationError(f"sparsity must be in [1, {d}], got {sparsity}")
    if m < 1:
        raise ConfigurationError("m must be positive")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(d, size=sparsity, replace=False))
    w_star = np.zeros(d)
    w_star[support] = rng.standard_normal(sparsity)
    if norm_target == CERT_L2:
        w_star *= B / np.linalg.norm(w_star)
        X = _unit_sphere(rng, m, d)
    elif norm_target == CERT_LINF:
        w_star *= B / np.abs(w_star).sum()
        X = rng.uniform(-1.0, 1.0, size=(m, d))
    else:
        raise ConfigurationError(f"unknown norm target {norm_target!r}")
    y = X @ w_star
    if noise_sd > 0:
        y = y + noise_sd * rng.standard_normal(m)
    y = np.clip(y, -B, B)
    return Dataset(X, y, norm_certificate=norm_target), w_star


@dataclass(frozen=True)
class LowerBoundInstance:
    """Hard distribution: ``x = r_i e_i`` for ``i`` uniform on a hidden support, ``y = 1``."""

    d: int
    epsilon: float
    support: np.ndarray
    signs: np.ndarray
    w_star: np.ndarray

    def sample(self, m: int, seed: int = 0) -> Dataset:
        rng = np.random.default_rng(seed)
        pick = rng.integers(0, self.support.size, size=m)
        X = np.zeros((m, self.d))
        X[np.arange(m), self.support[pick]] = self.signs[pick]
        return Dataset(X, np.ones(m), norm_certificate=CERT_L2)

    def stream(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        while True:
            p = rng.integers(0, self.support.size)
            x = np.zeros(self.d)
            x[self.support[p]] = self.signs[p]
            yield LabeledInstance(x, 1.0)


def synth_lower_bound(d: int, epsilon: float, seed: int = 0) -> LowerBoundInstance:
    if not 0 < epsilon <= 1:
        raise ConfigurationError("epsilon must lie in (0, 1]")
    size = math.ceil(1.0 / epsilon**2 - 1e-9)
    if size > d:
        raise ConfigurationError(f"support size ceil(1/eps^2) = {size} exceeds d = {d}")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(d, size=size, replace=False))
    signs = rng.choice([-1.0, 1.0], size=size)
    w_star = np.zeros(d)
    w_star[support] = epsilon * signs
    return LowerBoundInstance(d, epsilon, support, signs, w_star)


def _arc(cx, cy, r, a0, a1, n=40):
    a = np.radians(np.linspace(a0, a1, n))
    return np.stack([cx + r * np.cos(a), cy + r * np.sin(a)], axis=1)


def _segment(p, q, n=20):
    s = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - s) * np.asarray(p) + s * np.asarray(q)


def _digit_strokes(digit: int, rng) -> np.ndarray:
    """Pen path of a jittered 3 or 5 in a [-1, 1] box, y pointing up."""
    j = lambda s: rng.normal(0.0, s)  # noqa: E731
    if digit == 3:
        return np.concatenate([
            _arc(j(0.05), 0.5 + j(0.05), 0.45 + j(0.06), 160 + j(15), -90 + j(10)),
            _arc(j(0.05), -0.45 + j(0.05), 0.52 + j(0.06), 90 + j(10), -160 + j(15)),
        ])
    top, left, mid = 0.95 + j(0.05), -0.45 + j(0.08), 0.1 + j(0.08)
    return np.concatenate([
        _segment((0.55 + j(0.1), top + j(0.05)), (left, top)),
        _segment((left, top), (left - 0.05 + j(0.05), mid)),
        _arc(j(0.05), -0.4 + j(0.05), 0.52 + j(0.06), 125 + j(12), -155 + j(15), n=50),
    ])


def _render_digit(digit: int, rng, side: int) -> np.ndarray:
    pts = _digit_strokes(digit, rng)
    angle = np.radians(rng.normal(0.0, 10.0))
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    skew = np.array([[rng.uniform(0.75, 1.05), rng.normal(0.0, 0.2)], [0.0, rng.uniform(0.85, 1.05)]])
    pts = pts @ (rot @ skew).T
    shift = rng.uniform(-1.5, 1.5, size=2)
    scale = 9.0 * side / 28
    cols = side / 2 - 0.5 + scale * pts[:, 0] + shift[0]
    rows = side / 2 - 0.5 - scale * pts[:, 1] + shift[1]
    width = rng.uniform(0.9, 1.7)
    gr, gc = np.mgrid[0:side, 0:side]
    d2 = (gr.ravel()[:, None] - rows[None, :]) ** 2 + (gc.ravel()[:, None] - cols[None, :]) ** 2
    img = np.exp(-d2.min(axis=1) / (2 * width**2)) * rng.uniform(0.8, 1.0)
    img[img < 0.1] = 0.0
    return np.round(255 * img)


def digits_surrogate(n: int = 2000, seed: int = 0, side: int = 28) -> Dataset:
    """Stand-in for MNIST "3 vs 5" when the real files are unavailable.

    Renders pen strokes of 3s and 5s with random shape jitter, rotation,
    shear, scale, translation and stroke width onto a ``side x side`` grid
    of 0-255 bytes (the IDX loader's convention).  ``raw_labels`` holds the
    digits; ``y`` is already -1 for 3 and +1 for 5.
    """
    rng = np.random.default_rng(seed)
    labels = rng.choice([3, 5], size=n)
    X = np.array([_render_digit(int(digit), rng, side) for digit in labels])
    y = np.where(labels == 5, 1.0, -1.0)
    return Dataset(X, y, pixel_scale=255.0, raw_labels=labels)
