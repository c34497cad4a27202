"""Feature data containers, CSV ingestion, scaling and synthetic generators.

Every generator is a pure function of its arguments: the same seed always
yields bit-identical arrays.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

DEFAULT_GRID = 8

# shape-cloud geometry inside the unit square
CIRCLE_CENTER = (0.5, 0.5)
CIRCLE_RADII = (0.25, 0.45)
LINE_HEIGHTS = (0.3, 0.7)
LINE_SPAN = (0.1, 0.9)
SQUARE_HALF_WIDTHS = (0.25, 0.45)


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """An immutable feature matrix with optional dense integer labels."""

    features: np.ndarray
    labels: np.ndarray | None = None
    feature_names: list[str] | None = None
    meta: str = ""
    class_names: list[str] | None = None

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64, copy=True)
        if x.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {x.shape}")
        if x.shape[1] < 1:
            raise DataError("features must have at least one column")
        object.__setattr__(self, "features", _readonly(x))
        if self.labels is not None:
            y = np.array(self.labels, dtype=np.int64, copy=True)
            if y.shape != (x.shape[0],):
                raise DataError(f"labels have shape {y.shape}, expected ({x.shape[0]},)")
            if y.size and y.min() < 0:
                raise DataError("labels must be non-negative class ids")
            if y.size:
                present = np.unique(y)
                if present.size != int(y.max()) + 1:
                    raise DataError(f"class ids must be dense 0..K-1, got {present.tolist()}")
            object.__setattr__(self, "labels", _readonly(y))
        if self.feature_names is not None and len(self.feature_names) != x.shape[1]:
            raise DataError(
                f"{len(self.feature_names)} feature names for {x.shape[1]} columns"
            )

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        if self.labels is None or self.labels.size == 0:
            return 0
        return int(self.labels.max()) + 1

    def subset(self, index) -> Dataset:
        return Dataset(
            self.features[index],
            None if self.labels is None else self.labels[index],
            self.feature_names,
            self.meta,
            self.class_names,
        )

    def with_labels(self, labels, meta: str | None = None) -> Dataset:
        return Dataset(self.features, labels, self.feature_names,
                       self.meta if meta is None else meta, self.class_names)


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature minimum and maximum fitted on training data."""

    minimum: np.ndarray
    maximum: np.ndarray

    def transform(self, d: Dataset) -> Dataset:
        """Apply the affine map without clipping, so shifted data stays visible."""
        if d.n_features != self.minimum.size:
            raise DataError(
                f"scaler fitted on {self.minimum.size} features, data has {d.n_features}"
            )
        span = self.maximum - self.minimum
        safe = np.where(span > 0, span, 1.0)
        scaled = (d.features - self.minimum) / safe
        scaled[:, span <= 0] = 0.0
        return Dataset(scaled, d.labels, d.feature_names, d.meta, d.class_names)

    def to_dict(self) -> dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> ScalerParams:
        return cls(np.asarray(obj["min"], dtype=np.float64),
                   np.asarray(obj["max"], dtype=np.float64))


def fit_scaler(d: Dataset) -> ScalerParams:
    if d.n_samples < 1:
        raise DataError("cannot fit a scaler on an empty dataset")
    return ScalerParams(d.features.min(axis=0).copy(), d.features.max(axis=0).copy())


def minmax_scale(d: Dataset) -> tuple[Dataset, ScalerParams]:
    """Rescale every feature to [0, 1]; constant features map to 0."""
    params = fit_scaler(d)
    return params.transform(d), params


# ---------------------------------------------------------------------------
# CSV


def _parse_label_column(header: list[str] | None, label_column, width: int) -> int:
    if isinstance(label_column, int) or (isinstance(label_column, str) and label_column.isdigit()
                                         and (header is None or label_column not in header)):
        idx = int(label_column)
        if not 0 <= idx < width:
            raise DataError(f"label column index {idx} out of range for {width} columns")
        return idx
    if header is None:
        raise DataError(f"label column {label_column!r} given by name but file has no header")
    try:
        return header.index(label_column)
    except ValueError:
        raise DataError(f"label column {label_column!r} not found in header {header}") from None


def encode_labels(raw: Sequence[str]) -> tuple[np.ndarray, list[str]]:
    """Map label strings to dense ids.

    All-integer labels keep their numeric order (so 0..K-1 stays the
    identity); anything else is numbered by first appearance.
    """
    try:
        ints = [int(v) for v in raw]
    except ValueError:
        ints = None
    if ints is not None:
        names = sorted(set(ints))
        lookup = {v: i for i, v in enumerate(names)}
        return np.array([lookup[v] for v in ints], dtype=np.int64), [str(v) for v in names]
    lookup: dict[str, int] = {}
    for v in raw:
        lookup.setdefault(v, len(lookup))
    return np.array([lookup[v] for v in raw], dtype=np.int64), list(lookup)


def load_csv(path, label_column: int | str | None = None, has_header: bool = True) -> Dataset:
    """Read a numeric CSV file into a :class:`Dataset`.

    Args:
        path: file to read.
        label_column: column holding class labels, by header name or 0-based
            index; ``None`` means the file has no labels.
        has_header: whether the first row names the columns.

    Raises:
        DataError: on an empty file, a row of the wrong width or a cell that
            is not a finite number. Row numbers in messages are 1-based file
            lines.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh)]
    # tolerate trailing blank lines only
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise DataError(f"{path}: empty file")
    header = None
    first_line = 1
    if has_header:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(header) if header is not None else len(rows[0])
    lab = None if label_column is None else _parse_label_column(header, label_column, width)
    if lab is not None and width < 2:
        raise DataError(f"{path}: a label column needs at least one feature column beside it")

    feats = np.empty((len(rows), width - (lab is not None)), dtype=np.float64)
    raw_labels: list[str] = []
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise DataError(f"{path}: row {line} has {len(row)} cells, expected {width}")
        k = 0
        for j, cell in enumerate(row):
            if j == lab:
                cell = cell.strip()
                if not cell:
                    raise DataError(f"{path}: row {line}, column {j}: empty label")
                raw_labels.append(cell)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {line}, column {j}: cannot parse {cell!r} as a number"
                ) from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {line}, column {j}: non-finite value {cell!r}")
            feats[i, k] = v
            k += 1

    names = None
    if header is not None:
        names = [h for j, h in enumerate(header) if j != lab]
    labels = class_names = None
    if lab is not None:
        labels, class_names = encode_labels(raw_labels)
    return Dataset(feats, labels, names, meta=f"csv:{path.name}", class_names=class_names)


def save_csv(d: Dataset, path, label_name: str = "label") -> None:
    names = d.feature_names or [f"x{j}" for j in range(d.n_features)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + ([label_name] if d.labels is not None else []))
        for i in range(d.n_samples):
            row = [repr(float(v)) for v in d.features[i]]
            if d.labels is not None:
                row.append(str(int(d.labels[i])))
            w.writerow(row)


# ---------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class HypercubeSpec:
    """Training cube [a1, b1]^n and the shifted test cube [a2, b1 + a2 - a1]^n."""

    n: int
    a1: float = 0.0
    b1: float = 1.0
    a2: float = 0.0
    count: int = 1000
    seed: int = 0
    grid: int = DEFAULT_GRID

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"dimension must be >= 1, got {self.n}")
        if not self.b1 > self.a1:
            raise ValueError(f"need b1 > a1, got a1={self.a1}, b1={self.b1}")
        if not self.a1 <= self.a2 <= self.b1:
            raise ValueError(f"need a1 <= a2 <= b1, got a2={self.a2}")
        if self.count < 2:
            raise ValueError(f"count must be >= 2, got {self.count}")
        if self.grid < 1:
            raise ValueError(f"grid must be >= 1, got {self.grid}")


def checkerboard_labels(x: np.ndarray, a1: float, b1: float, grid: int = DEFAULT_GRID) -> np.ndarray:
    """Parity of the grid cell each row falls in (grid cells per axis)."""
    cell = np.floor((np.asarray(x) - a1) / (b1 - a1) * grid).astype(np.int64)
    return (cell.sum(axis=1) % 2).astype(np.int64)


def gen_uniform_hypercube(spec: HypercubeSpec,
                          offset_mode: Literal["train", "test"] = "train") -> Dataset:
    rng = np.random.default_rng([spec.seed, 0 if offset_mode == "train" else 1])
    if offset_mode == "train":
        x = rng.uniform(spec.a1, spec.b1, size=(spec.count, spec.n))
        y = checkerboard_labels(x, spec.a1, spec.b1, spec.grid)
        if np.unique(y).size == 1:
            # a single populated cell; labels must stay dense
            y = np.zeros_like(y)
        return Dataset(x, y, meta=f"hypercube-train:{spec}")
    if offset_mode != "test":
        raise ValueError(f"offset_mode must be 'train' or 'test', got {offset_mode!r}")
    hi = spec.b1 + spec.a2 - spec.a1
    x = rng.uniform(spec.a2, hi, size=(spec.count, spec.n))
    return Dataset(x, None, meta=f"hypercube-test:{spec}")


def gen_noise(dim: int, count: int, kind: Literal["gaussian", "uniform"] = "uniform",
              clip: tuple[float, float] | None = None, seed: int = 0) -> Dataset:
    """Unlabeled i.i.d. noise: standard Gaussian or Uniform[0, 1)."""
    if dim < 1 or count < 1:
        raise ValueError(f"dim and count must be >= 1, got dim={dim}, count={count}")
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        x = rng.standard_normal((count, dim))
    elif kind == "uniform":
        x = rng.random((count, dim))
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    if clip is not None:
        x = np.clip(x, clip[0], clip[1])
    return Dataset(x, meta=f"noise:{kind}")


def _shape_points(shape: str, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    m = labels.size
    cx, cy = CIRCLE_CENTER
    if shape == "circles":
        theta = rng.uniform(0.0, 2 * np.pi, m)
        r = np.asarray(CIRCLE_RADII)[labels]
        return np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])
    if shape == "lines":
        x = rng.uniform(LINE_SPAN[0], LINE_SPAN[1], m)
        return np.column_stack([x, np.asarray(LINE_HEIGHTS)[labels]])
    if shape == "squares":
        h = np.asarray(SQUARE_HALF_WIDTHS)[labels]
        # position along the perimeter in units of half-width, 8 per square
        s = rng.uniform(0.0, 8.0, m)
        side = np.floor(s / 2.0).astype(np.int64)
        u = s - 2.0 * side - 1.0  # in [-1, 1)
        px = np.select([side == 0, side == 1, side == 2], [u, np.ones(m), -u], -np.ones(m))
        py = np.select([side == 0, side == 1, side == 2], [-np.ones(m), u, np.ones(m)], -u)
        return np.column_stack([cx + h * px, cy + h * py])
    raise ValueError(f"unknown shape {shape!r}; expected circles, lines or squares")


def gen_shape_cloud(shape: Literal["circles", "lines", "squares"], n: int, count: int,
                    noise_sigma: float = 0.05, seed: int = 0) -> Dataset:
    """Point cloud in R^n whose first two coordinates trace a pair of shapes.

    Label 0 is the inner circle / lower line / inner square, label 1 the
    other one. The first two coordinates carry N(0, noise_sigma^2) jitter;
    the remaining ``n - 2`` coordinates are pure N(0, noise_sigma^2) noise.
    """
    if n < 2:
        raise ValueError(f"shape clouds need n >= 2, got {n}")
    if count < 2:
        raise ValueError(f"count must be >= 2, got {count}")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(count) % 2)
    base = _shape_points(shape, labels, rng)
    x = np.empty((count, n))
    x[:, :2] = base + rng.normal(0.0, noise_sigma, size=(count, 2))
    x[:, 2:] = rng.normal(0.0, noise_sigma, size=(count, n - 2))
    return Dataset(x, labels, meta=f"shape:{shape}:n={n}:sigma={noise_sigma}")


def gen_tabular(count: int, n_features: int = 8, n_classes: int = 3, seed: int = 0,
                class_separation: float = 0.5) -> Dataset:
    """Synthetic tabular data: skewed, correlated class-conditional features.

    Each class draws latent factors around its own center; features are
    random mixtures of the factors pushed through heavy-tailed marginals
    (exp / square), which is what raw business tables tend to look like.
    ``class_separation`` is the spread of class centers in units of the
    within-class spread; the default leaves the classes overlapping, so
    fully grown trees keep splitting throughout the data region.
    """
    if count < n_classes:
        raise ValueError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    n_latent = max(2, n_features // 2)
    centers = rng.normal(0.0, class_separation, size=(n_classes, n_latent))
    mixing = rng.normal(0.0, 1.0, size=(n_latent, n_features)) / np.sqrt(n_latent)
    y = np.arange(count) % n_classes
    y = rng.permutation(y)
    z = centers[y] + rng.normal(0.0, 1.0, size=(count, n_latent))
    x = z @ mixing
    kinds = np.arange(n_features) % 3
    x[:, kinds == 1] = np.exp(x[:, kinds == 1])
    x[:, kinds == 2] = x[:, kinds == 2] ** 2
    return Dataset(x, y, meta=f"tabular:count={count}:n={n_features}:k={n_classes}:seed={seed}")


def shuffle_labels(d: Dataset, seed: int = 0) -> Dataset:
    """Return a copy with labels randomly permuted; features untouched."""
    if d.labels is None:
        raise DataError("cannot shuffle labels of an unlabeled dataset")
    rng = np.random.default_rng(seed)
    return d.with_labels(rng.permutation(d.labels), meta=f"{d.meta}|shuffled:{seed}")


def train_test_split(d: Dataset, test_fraction: float = 0.5, seed: int = 0) -> tuple[Dataset, Dataset]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(d.n_samples)
    k = int(round(d.n_samples * (1.0 - test_fraction)))
    return d.subset(np.sort(order[:k])), d.subset(np.sort(order[k:]))
