"""Datasets, ingestion, synthetic generation, normalization and splitting."""

from __future__ import annotations

import csv
import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from . import spectral
from .errors import ConfigError, DataError, DimensionError, SchemaError
from .rng import check_seed, make_rng

log = logging.getLogger(__name__)

CROP_CLASSES = ("sugarcane", "wheat", "potato", "mustard", "maize", "cotton")

# per-crop row totals of the ASEN confusion matrix; they sum to 50,835
REFERENCE_CLASS_COUNTS = (8315, 18984, 3270, 6221, 4053, 9992)

SYNTH_BANDS = ("blue", "green", "red", "nir", "swir1", "swir2")


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    label: str
    latitude: float | None = None
    longitude: float | None = None
    source: str | None = None


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable table of feature vectors with integer-coded labels.

    ``y[i]`` indexes into ``class_names``. Optional per-row metadata
    (coordinates, source ids) travels alongside and is subset with the rows.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]
    provenance: Mapping[str, Any] = field(default_factory=dict)
    latitude: np.ndarray | None = None
    longitude: np.ndarray | None = None
    source: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim != 2:
            raise DimensionError(f"feature matrix must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DimensionError(f"label vector shape {y.shape} does not match {X.shape[0]} rows")
        feature_names = tuple(self.feature_names)
        class_names = tuple(self.class_names)
        if len(feature_names) != X.shape[1]:
            raise DimensionError(
                f"{len(feature_names)} feature names for {X.shape[1]} feature columns")
        if len(set(feature_names)) != len(feature_names):
            raise DataError("feature names are not distinct")
        if len(set(class_names)) != len(class_names) or not class_names:
            raise DataError("class names must be distinct and non-empty")
        if not np.all(np.isfinite(X)):
            raise DataError("feature matrix contains non-finite values")
        if y.size and (not np.issubdtype(y.dtype, np.integer)
                       or y.min() < 0 or y.max() >= len(class_names)):
            raise DataError("labels must be integer codes into class_names")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "y", _readonly(y.astype(np.int64)))
        object.__setattr__(self, "feature_names", feature_names)
        object.__setattr__(self, "class_names", class_names)
        object.__setattr__(self, "provenance", dict(self.provenance))
        for name in ("latitude", "longitude"):
            arr = getattr(self, name)
            if arr is not None:
                object.__setattr__(self, name, _readonly(np.asarray(arr, dtype=np.float64)))

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def sample(self, i: int) -> LabeledSample:
        return LabeledSample(
            features=self.X[i],
            label=self.class_names[self.y[i]],
            latitude=None if self.latitude is None else float(self.latitude[i]),
            longitude=None if self.longitude is None else float(self.longitude[i]),
            source=None if self.source is None else self.source[i],
        )

    def __iter__(self):
        return (self.sample(i) for i in range(len(self)))

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            X=self.X[idx], y=self.y[idx],
            feature_names=self.feature_names, class_names=self.class_names,
            provenance=self.provenance,
            latitude=None if self.latitude is None else self.latitude[idx],
            longitude=None if self.longitude is None else self.longitude[idx],
            source=None if self.source is None else tuple(self.source[i] for i in idx),
        )

    def select_features(self, names: Sequence[str]) -> "Dataset":
        try:
            cols = [self.feature_names.index(n) for n in names]
        except ValueError as exc:
            raise ConfigError(f"feature not in dataset: {exc}") from None
        return Dataset(
            X=self.X[:, cols], y=self.y,
            feature_names=tuple(names), class_names=self.class_names,
            provenance=self.provenance, latitude=self.latitude,
            longitude=self.longitude, source=self.source,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

def _resolve_classes(labels: list[str], class_names: Sequence[str] | None) -> tuple[str, ...]:
    if class_names is not None:
        return tuple(class_names)
    present = set(labels)
    if present <= set(CROP_CLASSES):
        return tuple(c for c in CROP_CLASSES if c in present)
    return tuple(sorted(present))


def load_csv(
    path: str | Path,
    feature_names: Sequence[str] = spectral.DEFAULT_FEATURES,
    label_column: str = "label",
    mapping: spectral.BandMapping | None = None,
    class_names: Sequence[str] | None = None,
    lat_column: str | None = None,
    lon_column: str | None = None,
    source_column: str | None = None,
) -> Dataset:
    """Read a per-sample reflectance table and derive the selected features.

    Band features and index inputs are read through ``mapping`` (Landsat 8
    column names by default). Any other selected name is read verbatim as a
    column of the same name. Rows are dropped, and counted in
    ``provenance["dropped"]``, when a cell is empty, unparseable, non-finite,
    a reflectance is negative, the label is undeclared, or a selected index
    has a degenerate denominator.
    """
    mapping = mapping or spectral.BandMapping.landsat8()
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")

    band_feats = [n for n in feature_names
                  if n in spectral.BAND_NAMES or n in spectral.INDEX_NAMES]
    raw_feats = [n for n in feature_names if n not in band_feats]
    spectral.check_feature_names(feature_names, raw_feats)
    bands = spectral.required_bands(band_feats)
    mapping.require(bands)
    band_cols = {b: mapping.column(b) for b in bands}

    dropped = {"missing": 0, "unparseable": 0, "non_finite": 0,
               "negative_reflectance": 0, "unknown_label": 0, "degenerate_index": 0}
    band_vals: dict[str, list[float]] = {b: [] for b in bands}
    raw_vals: dict[str, list[float]] = {n: [] for n in raw_feats}
    labels: list[str] = []
    lats: list[float] = []
    lons: list[float] = []
    sources: list[str] = []
    declared = None if class_names is None else set(class_names)

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: no header row")
        header = set(reader.fieldnames)
        needed = list(band_cols.values()) + raw_feats + [label_column]
        needed += [c for c in (lat_column, lon_column, source_column) if c]
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")

        for row in reader:
            cells = {b: row[c] for b, c in band_cols.items()}
            cells.update({n: row[n] for n in raw_feats})
            for c in (lat_column, lon_column):
                if c:
                    cells[c] = row[c]
            label = (row[label_column] or "").strip()
            if not label or any(v is None or not v.strip() for v in cells.values()):
                dropped["missing"] += 1
                continue
            try:
                parsed = {k: float(v) for k, v in cells.items()}
            except ValueError:
                dropped["unparseable"] += 1
                continue
            if not all(math.isfinite(v) for v in parsed.values()):
                dropped["non_finite"] += 1
                continue
            if any(parsed[b] < 0 for b in bands if b in spectral.REFLECTANCE_BANDS):
                dropped["negative_reflectance"] += 1
                continue
            if declared is not None and label not in declared:
                dropped["unknown_label"] += 1
                continue
            for b in bands:
                band_vals[b].append(parsed[b])
            for n in raw_feats:
                raw_vals[n].append(parsed[n])
            if lat_column:
                lats.append(parsed[lat_column])
            if lon_column:
                lons.append(parsed[lon_column])
            if source_column:
                sources.append(row[source_column])
            labels.append(label)

    n_rows = len(labels)
    if n_rows:
        X, ok = spectral.feature_matrix(
            {b: np.asarray(v) for b, v in band_vals.items()},
            feature_names,
            {n: np.asarray(v) for n, v in raw_vals.items()},
        )
        dropped["degenerate_index"] = int((~ok).sum())
    else:
        X, ok = np.empty((0, len(feature_names))), np.zeros(0, dtype=bool)
    if not ok.any():
        raise DataError(f"{path}: no valid rows")

    for reason, count in dropped.items():
        if count:
            log.warning("%s: dropped %d rows (%s)", path, count, reason)

    keep = np.flatnonzero(ok)
    labels = [labels[i] for i in keep]
    classes = _resolve_classes(labels, class_names)
    code = {c: i for i, c in enumerate(classes)}
    return Dataset(
        X=X[keep],
        y=np.array([code[l] for l in labels], dtype=np.int64),
        feature_names=tuple(feature_names),
        class_names=classes,
        provenance={"source": str(path), "rows_read": n_rows + sum(
            v for k, v in dropped.items() if k != "degenerate_index"),
            "dropped": dropped},
        latitude=np.asarray(lats)[keep] if lat_column else None,
        longitude=np.asarray(lons)[keep] if lon_column else None,
        source=tuple(sources[i] for i in keep) if source_column else None,
    )


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------

# Mean reflectance over SYNTH_BANDS, loosely shaped like mid-season crops.
_DEFAULT_MEANS = (
    (0.050, 0.085, 0.060, 0.380, 0.230, 0.120),  # sugarcane
    (0.060, 0.095, 0.075, 0.330, 0.205, 0.110),  # wheat
    (0.055, 0.090, 0.065, 0.300, 0.190, 0.115),  # potato
    (0.060, 0.100, 0.070, 0.305, 0.200, 0.120),  # mustard
    (0.065, 0.090, 0.085, 0.340, 0.225, 0.135),  # maize
    (0.058, 0.092, 0.068, 0.295, 0.198, 0.118),  # cotton
)
_DEFAULT_SCALES = (0.018, 0.014, 0.022, 0.016, 0.020, 0.024)


def proportional_counts(total: int, weights: Sequence[int] = REFERENCE_CLASS_COUNTS) -> tuple[int, ...]:
    """Split ``total`` in proportion to ``weights`` by largest remainder."""
    w = [Fraction(int(x)) for x in weights]
    exact = [total * x / sum(w) for x in w]
    counts = [math.floor(e) for e in exact]
    order = sorted(range(len(w)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return tuple(counts)


@dataclass(frozen=True)
class SyntheticSpec:
    """Class-conditional diagonal Gaussians over the six reflective bands.

    ``confusion`` in [0, 1] pulls the means of each group in
    ``confused_groups`` toward the group centroid (1 makes them coincide).
    ``noise_features`` appends that many standard-normal columns that carry
    no class signal.
    """

    class_names: tuple[str, ...] = CROP_CLASSES
    means: tuple[tuple[float, ...], ...] = _DEFAULT_MEANS
    scales: tuple[float, ...] = _DEFAULT_SCALES
    counts: tuple[int, ...] = proportional_counts(12_000)
    confusion: float = 0.0
    confused_groups: tuple[tuple[str, ...], ...] = (("potato", "mustard", "cotton"),)
    noise_features: int = 0

    def __post_init__(self):
        for name in ("class_names", "scales", "counts"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "means", tuple(tuple(float(v) for v in m) for m in self.means))
        object.__setattr__(self, "confused_groups",
                           tuple(tuple(g) for g in self.confused_groups))
        C = len(self.class_names)
        if C == 0:
            raise ConfigError("synthetic spec has zero classes")
        if len(set(self.class_names)) != C:
            raise ConfigError("synthetic class names must be distinct")
        if len(self.means) != C or len(self.scales) != C or len(self.counts) != C:
            raise ConfigError("means, scales and counts need one entry per class")
        for m in self.means:
            if len(m) != len(SYNTH_BANDS):
                raise ConfigError(f"each mean vector needs {len(SYNTH_BANDS)} bands")
            if any(not 0.0 <= v <= 1.0 for v in m):
                raise ConfigError("mean reflectances must lie in [0, 1]")
        if any(c <= 0 for c in self.counts):
            raise ConfigError("class counts must be positive")
        if any(s < 0 for s in self.scales):
            raise ConfigError("scales must be non-negative")
        if not 0.0 <= self.confusion <= 1.0:
            raise ConfigError("confusion knob must lie in [0, 1]")
        for g in self.confused_groups:
            unknown = set(g) - set(self.class_names)
            if unknown:
                raise ConfigError(f"confused group names unknown classes {sorted(unknown)}")
        if self.noise_features < 0:
            raise ConfigError("noise_features must be >= 0")

    @property
    def noise_names(self) -> tuple[str, ...]:
        return tuple(f"noise{i}" for i in range(self.noise_features))

    def effective_means(self) -> np.ndarray:
        means = np.array(self.means, dtype=np.float64)
        out = means.copy()
        for group in self.confused_groups:
            rows = [self.class_names.index(c) for c in group]
            centroid = means[rows].mean(axis=0)
            out[rows] = means[rows] + self.confusion * (centroid - means[rows])
        return out

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "means": [list(m) for m in self.means],
            "scales": list(self.scales),
            "counts": list(self.counts),
            "confusion": self.confusion,
            "confused_groups": [list(g) for g in self.confused_groups],
            "noise_features": self.noise_features,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SyntheticSpec":
        known = {"class_names", "means", "scales", "counts", "confusion",
                 "confused_groups", "noise_features"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthetic spec keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items()})


def synthetic_bands(spec: SyntheticSpec, seed: int) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray], np.ndarray]:
    """Draw raw band columns, noise columns and labels for ``spec``.

    Draws whose default-feature indices would be degenerate are redrawn, so
    the class counts are met exactly.
    """
    rng = make_rng(check_seed(seed))
    means = spec.effective_means()
    blocks, labels = [], []
    for c, n in enumerate(spec.counts):
        got = np.empty((0, len(SYNTH_BANDS)))
        while got.shape[0] < n:
            need = n - got.shape[0]
            draw = rng.normal(means[c], spec.scales[c], size=(need, len(SYNTH_BANDS)))
            draw = np.clip(draw, 0.0, 1.0)
            cols = dict(zip(SYNTH_BANDS, draw.T))
            _, valid = spectral.index_arrays(cols)
            ok = np.logical_and.reduce(list(valid.values()))
            got = np.vstack([got, draw[ok]])
        blocks.append(got)
        labels.append(np.full(n, c, dtype=np.int64))
    table = np.vstack(blocks)
    noise = rng.standard_normal((table.shape[0], spec.noise_features))
    bands = dict(zip(SYNTH_BANDS, (np.ascontiguousarray(col) for col in table.T)))
    extra = {name: np.ascontiguousarray(noise[:, j]) for j, name in enumerate(spec.noise_names)}
    return bands, extra, np.concatenate(labels)


def generate_synthetic(
    spec: SyntheticSpec,
    seed: int,
    feature_names: Sequence[str] | None = None,
) -> Dataset:
    if feature_names is None:
        feature_names = spectral.DEFAULT_FEATURES + spec.noise_names
    bands, extra, y = synthetic_bands(spec, seed)
    X, ok = spectral.feature_matrix(bands, feature_names, extra)
    if not ok.all():  # only possible for indices outside the redraw check
        log.warning("synthetic: dropped %d rows with degenerate indices", int((~ok).sum()))
    return Dataset(
        X=X[ok], y=y[ok], feature_names=tuple(feature_names),
        class_names=spec.class_names,
        provenance={"source": "synthetic", "seed": int(seed), "spec": spec.to_dict()},
    )


# --------------------------------------------------------------------------
# Normalization
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NormalizationParams:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = _readonly(np.asarray(self.mean, dtype=np.float64))
        std = _readonly(np.asarray(self.std, dtype=np.float64))
        if mean.shape != std.shape or mean.ndim != 1:
            raise DimensionError("mean and std must be 1-D of equal length")
        if np.any(std < 0):
            raise DataError("standard deviations must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def divisor(self) -> np.ndarray:
        # constant features map to 0 instead of dividing by zero
        return np.where(self.std == 0, 1.0, self.std)

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z) * self.divisor + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "NormalizationParams":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


def fit_normalizer(X: np.ndarray) -> NormalizationParams:
    """Per-feature population mean and standard deviation."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("cannot fit a normalizer on an empty sample")
    if X.shape[0] < 2:
        raise DataError("fitting a normalizer needs at least 2 samples")
    return NormalizationParams(X.mean(axis=0), X.std(axis=0, ddof=0))


def apply_normalizer(params: NormalizationParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != params.mean.shape[0]:
        raise DimensionError(
            f"normalizer fitted on {params.mean.shape[0]} features, got {X.shape[-1]}")
    return (X - params.mean) / params.divisor


# --------------------------------------------------------------------------
# Splitting and bootstrap
# --------------------------------------------------------------------------

DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)
SPLIT_ROLES = ("train", "val", "test")


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS

    def role(self, name: str) -> np.ndarray:
        if name not in SPLIT_ROLES:
            raise ConfigError(f"unknown split role {name!r}; expected one of {SPLIT_ROLES}")
        return getattr(self, name)

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def digest(self) -> str:
        """SHA-256 over the role assignment; guards against test leakage."""
        h = hashlib.sha256()
        for name in SPLIT_ROLES:
            idx = np.ascontiguousarray(self.role(name), dtype="<i8")
            h.update(name.encode())
            h.update(len(idx).to_bytes(8, "little"))
            h.update(idx.tobytes())
        return h.hexdigest()


def _exact_fractions(fractions: Sequence[float]) -> list[Fraction]:
    fr = [Fraction(repr(float(f))) for f in fractions]
    if len(fr) != 3 or any(f <= 0 for f in fr):
        raise ConfigError("split fractions must be three positive numbers")
    if abs(float(sum(fr)) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {float(sum(fr))}")
    # absorb representation error so allocations sum exactly
    fr[0] += 1 - sum(fr)
    return fr


def _place_units(row_need, support, col_need) -> np.ndarray | None:
    """0/1 matrix on ``support`` with the given row/column sums, via max-flow."""
    C = len(row_need)
    n = C + 5  # source, classes, 3 splits, sink
    cap = np.zeros((n, n), dtype=np.int32)
    for c in range(C):
        cap[0, 1 + c] = row_need[c]
        for j in range(3):
            if support[c][j]:
                cap[1 + c, 1 + C + j] = 1
    for j in range(3):
        cap[1 + C + j, n - 1] = col_need[j]
    flow = maximum_flow(csr_matrix(cap), 0, n - 1)
    if flow.flow_value != sum(row_need):
        return None
    f = flow.flow.toarray()
    return np.array([[max(int(f[1 + c, 1 + C + j]), 0) for j in range(3)] for c in range(C)])


def split_allocation(class_counts: Sequence[int], fractions: Sequence[float] = DEFAULT_FRACTIONS) -> np.ndarray:
    """Per-class, per-split sample counts (classes x 3).

    Each cell is the floor or the ceiling of its exact share ``n_c * f_j``
    (never moved off an exact integer), rows sum to the class counts, and
    split totals are the largest-remainder rounding of ``N * f_j`` whenever
    such a table exists. Otherwise the nearest feasible rounding of the
    totals is used; one always exists for two-way tables.
    """
    fr = _exact_fractions(fractions)
    counts = [int(c) for c in class_counts]
    N = sum(counts)
    exact = [[n * f for f in fr] for n in counts]
    alloc = np.array([[math.floor(e) for e in row] for row in exact], dtype=np.int64)
    frac = [[e - math.floor(e) for e in row] for row in exact]
    support = [[r > 0 for r in row] for row in frac]
    row_need = [n - int(a.sum()) for n, a in zip(counts, alloc)]
    col_exact = [N * f - int(alloc[:, j].sum()) for j, f in enumerate(fr)]
    base = [math.floor(x) for x in col_exact]
    ups = sum(row_need) - sum(base)
    # candidate column roundings, largest remainders first
    options = [j for j in range(3) if col_exact[j] > base[j]]
    choices = sorted(itertools.combinations(options, ups),
                     key=lambda js: (-sum(col_exact[j] - base[j] for j in js), js))
    for js in choices:
        col_need = [base[j] + (j in js) for j in range(3)]
        placed = _place_units(row_need, support, col_need)
        if placed is not None:
            return alloc + placed
    raise AssertionError("no controlled rounding found for split allocation")


def stratified_split(
    y: np.ndarray,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 0,
    class_names: Sequence[str] | None = None,
) -> DatasetSplit:
    y = np.asarray(y)
    n_classes = int(y.max()) + 1 if y.size else 0
    counts = np.bincount(y, minlength=n_classes) if y.size else np.zeros(0, dtype=int)
    for c, n in enumerate(counts):
        if 0 < n < 3:
            name = class_names[c] if class_names is not None else str(c)
            raise DataError(f"class {name!r} has {n} samples; stratified split needs >= 3")
    alloc = split_allocation(counts, fractions)
    rng = make_rng(check_seed(seed), "split")
    parts: list[list[np.ndarray]] = [[], [], []]
    for c in range(n_classes):
        members = rng.permutation(np.flatnonzero(y == c))
        start = 0
        for j in range(3):
            parts[j].append(members[start:start + alloc[c, j]])
            start += alloc[c, j]
    train, val, test = (np.sort(np.concatenate(p)) if p else np.zeros(0, dtype=np.int64)
                        for p in parts)
    return DatasetSplit(train=train, val=val, test=test,
                        fractions=tuple(float(f) for f in fractions))


def bootstrap_sample(indices: np.ndarray, seed: int) -> np.ndarray:
    """Draw ``len(indices)`` entries of ``indices`` uniformly with replacement."""
    indices = np.asarray(indices)
    if indices.size == 0:
        raise DataError("cannot bootstrap an empty training set")
    rng = make_rng(check_seed(seed))
    return indices[rng.integers(0, indices.size, size=indices.size)]
