"""Vegetation indices and feature-vector assembly.

All formulas are written over semantic band names (``nir``, ``red``, ...).
Which sensor band plays which role is decided once, by :class:`BandMapping`,
when rows are ingested. The default mapping follows Landsat 8/9 numbering
(NIR = band 5, red = band 4, green = band 3, blue = band 2).

Landsat 8/9 carries no red-edge band, so RENDVI and NDRE are both computed
as nd(NIR, red) and duplicate NDVI. PRI is nd(red, NIR) and is therefore the
exact negation of NDVI. These duplicates are kept as separate outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, DegenerateIndexError

BAND_NAMES = (
    "coastal", "blue", "green", "red", "nir", "swir1", "swir2",
    "pan", "cirrus", "tir1", "tir2",
)
# bands whose values are surface/TOA reflectance and must be >= 0
REFLECTANCE_BANDS = ("coastal", "blue", "green", "red", "nir", "swir1", "swir2")
MAPPABLE_BANDS = REFLECTANCE_BANDS

INDEX_NAMES = ("ndvi", "evi", "savi", "gndvi", "rendvi", "msavi", "ndwi", "ndre", "sr", "pri")

# semantic bands each index reads
INDEX_INPUTS: dict[str, tuple[str, ...]] = {
    "ndvi": ("nir", "red"),
    "evi": ("nir", "red", "blue"),
    "savi": ("nir", "red"),
    "gndvi": ("nir", "green"),
    "rendvi": ("nir", "red"),
    "msavi": ("nir", "red"),
    "ndwi": ("green", "nir"),
    "ndre": ("nir", "red"),
    "sr": ("nir", "red"),
    "pri": ("red", "nir"),
}

DEFAULT_FEATURES = (
    "blue", "green", "red", "nir", "swir1", "swir2",
    "ndvi", "evi", "savi", "gndvi", "ndre",
)

ND_INDICES = ("ndvi", "gndvi", "rendvi", "ndwi", "ndre", "pri")

# Landsat 8/9 OLI band numbers
LANDSAT8_COLUMNS = {
    "coastal": "B1", "blue": "B2", "green": "B3", "red": "B4",
    "nir": "B5", "swir1": "B6", "swir2": "B7",
}


@dataclass(frozen=True)
class BandRecord:
    """Reflectance of one pixel or field, keyed by semantic band."""

    blue: float
    green: float
    red: float
    nir: float
    swir1: float
    swir2: float
    coastal: float | None = None
    pan: float | None = None
    cirrus: float | None = None
    tir1: float | None = None
    tir2: float | None = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            value = float(value)
            if not math.isfinite(value):
                raise DataError(f"band {f.name} is not finite: {value!r}")
            if f.name in REFLECTANCE_BANDS and value < 0:
                raise DataError(f"reflectance band {f.name} is negative: {value!r}")
            object.__setattr__(self, f.name, value)

    def get(self, band: str) -> float:
        value = getattr(self, band)
        if value is None:
            raise DataError(f"band {band} is not present in this record")
        return value


@dataclass(frozen=True)
class BandMapping:
    """Assignment of semantic bands to source column names."""

    columns: Mapping[str, str]

    def __post_init__(self):
        cols = dict(self.columns)
        unknown = set(cols) - set(MAPPABLE_BANDS)
        if unknown:
            raise ConfigError(f"unknown semantic bands in mapping: {sorted(unknown)}")
        if len(set(cols.values())) != len(cols):
            raise ConfigError("band mapping must be injective (two bands share a column)")
        object.__setattr__(self, "columns", cols)

    @classmethod
    def landsat8(cls) -> "BandMapping":
        return cls(dict(LANDSAT8_COLUMNS))

    @classmethod
    def identity(cls) -> "BandMapping":
        return cls({b: b for b in MAPPABLE_BANDS})

    def column(self, band: str) -> str:
        try:
            return self.columns[band]
        except KeyError:
            raise ConfigError(f"semantic band {band!r} is not mapped to any column") from None

    def require(self, bands: Iterable[str]) -> None:
        missing = [b for b in bands if b not in self.columns]
        if missing:
            raise ConfigError(f"bands used by the selected features are not mapped: {missing}")

    def to_dict(self) -> dict[str, str]:
        return dict(self.columns)


@dataclass(frozen=True)
class IndexVector:
    """The ten vegetation indices of one record.

    A value of ``None`` marks an index whose denominator was degenerate.
    """

    ndvi: float | None
    evi: float | None
    savi: float | None
    gndvi: float | None
    rendvi: float | None
    msavi: float | None
    ndwi: float | None
    ndre: float | None
    sr: float | None
    pri: float | None

    @property
    def degenerate(self) -> tuple[str, ...]:
        return tuple(n for n in INDEX_NAMES if getattr(self, n) is None)

    def as_dict(self) -> dict[str, float | None]:
        return {n: getattr(self, n) for n in INDEX_NAMES}


def normalized_difference(a: float, b: float) -> float:
    """Return ``(a - b) / (a + b)``; raises on a zero denominator."""
    if a < 0 or b < 0:
        raise DataError(f"normalized difference needs non-negative inputs, got ({a}, {b})")
    den = a + b
    if den == 0:
        raise DegenerateIndexError("normalized difference of two zero reflectances")
    return (a - b) / den


def _nd(a, b):
    return (a - b) / (a + b), (a + b) != 0


def index_arrays(bands: Mapping[str, np.ndarray], names: Iterable[str] = INDEX_NAMES):
    """Vectorized index computation.

    Returns ``(values, valid)``, two dicts keyed by index name. Entries of
    ``values`` where ``valid`` is False are NaN and must not be used.
    """
    values: dict[str, np.ndarray] = {}
    valid: dict[str, np.ndarray] = {}
    nir = np.asarray(bands.get("nir"), dtype=np.float64) if "nir" in bands else None
    red = np.asarray(bands.get("red"), dtype=np.float64) if "red" in bands else None
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for name in names:
            if name not in INDEX_INPUTS:
                raise ConfigError(f"unknown index {name!r}")
            missing = [b for b in INDEX_INPUTS[name] if b not in bands]
            if missing:
                raise ConfigError(f"index {name} needs bands {missing}")
            if name in ("ndvi", "rendvi", "ndre"):
                v, ok = _nd(nir, red)
            elif name == "pri":
                v, ok = _nd(red, nir)
            elif name == "gndvi":
                v, ok = _nd(nir, np.asarray(bands["green"], dtype=np.float64))
            elif name == "ndwi":
                v, ok = _nd(np.asarray(bands["green"], dtype=np.float64), nir)
            elif name == "evi":
                blue = np.asarray(bands["blue"], dtype=np.float64)
                den = nir + 6 * red - 7.5 * blue + 1
                v, ok = 2.5 * ((nir - red) / den), den > 0
            elif name == "savi":
                v = ((nir - red) / (nir + red + 0.5)) * 1.5
                ok = (nir + red + 0.5) > 0
            elif name == "msavi":
                t = 2 * nir + 1
                radicand = t * t - 8 * (nir - red)
                if np.any(radicand < 0):
                    # impossible for non-negative reflectance
                    raise ArithmeticError("negative MSAVI radicand; inputs violate reflectance >= 0")
                v = 0.5 * (t - np.sqrt(radicand))
                ok = np.ones_like(v, dtype=bool)
            elif name == "sr":
                v, ok = nir / red, red != 0
            ok = np.asarray(ok, dtype=bool) & np.isfinite(v)
            values[name] = np.where(ok, v, np.nan)
            valid[name] = ok
    return values, valid


def compute_indices(rec: BandRecord) -> IndexVector:
    bands = {b: np.float64(rec.get(b)) for b in ("blue", "green", "red", "nir")}
    values, valid = index_arrays(bands)
    return IndexVector(**{
        n: float(values[n]) if bool(valid[n]) else None for n in INDEX_NAMES
    })


def check_feature_names(selection: Sequence[str], extra: Iterable[str] = ()) -> tuple[str, ...]:
    """Validate a feature selection; ``extra`` lists allowed raw column names."""
    allowed = set(BAND_NAMES) | set(INDEX_NAMES) | set(extra)
    selection = tuple(selection)
    if not selection:
        raise ConfigError("feature selection is empty")
    unknown = [n for n in selection if n not in allowed]
    if unknown:
        raise ConfigError(f"unknown feature names: {unknown}")
    if len(set(selection)) != len(selection):
        raise ConfigError("feature selection contains duplicates")
    return selection


def required_bands(selection: Iterable[str]) -> tuple[str, ...]:
    need: list[str] = []
    for name in selection:
        deps = INDEX_INPUTS.get(name, (name,) if name in BAND_NAMES else ())
        for b in deps:
            if b not in need:
                need.append(b)
    return tuple(need)


def build_feature_vector(
    rec: BandRecord,
    idx: IndexVector,
    selection: Sequence[str] = DEFAULT_FEATURES,
) -> np.ndarray:
    selection = check_feature_names(selection)
    out = np.empty(len(selection), dtype=np.float64)
    for i, name in enumerate(selection):
        value = getattr(idx, name) if name in INDEX_NAMES else rec.get(name)
        if value is None:
            raise DegenerateIndexError(f"index {name} is not computable for this record")
        out[i] = value
    return out


def feature_matrix(
    bands: Mapping[str, np.ndarray],
    selection: Sequence[str],
    extra: Mapping[str, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Assemble an (n, d) feature matrix from per-band columns.

    Returns the matrix and a boolean mask of rows whose selected indices
    were all computable. Columns not named as a band or index are taken
    verbatim from ``extra``.
    """
    extra = extra or {}
    selection = check_feature_names(selection, extra.keys())
    wanted = [n for n in selection if n in INDEX_NAMES]
    values, valid = index_arrays(bands, wanted) if wanted else ({}, {})
    n = len(next(iter(bands.values()))) if bands else len(next(iter(extra.values())))
    X = np.empty((n, len(selection)), dtype=np.float64)
    ok = np.ones(n, dtype=bool)
    for j, name in enumerate(selection):
        if name in INDEX_NAMES:
            X[:, j] = values[name]
            ok &= valid[name]
        elif name in extra:
            X[:, j] = extra[name]
        else:
            X[:, j] = bands[name]
    return X, ok
