import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asen import spectral
from asen.errors import ConfigError, DataError, DegenerateIndexError
from asen.spectral import BandMapping, BandRecord, compute_indices

REC = BandRecord(blue=0.05, green=0.2, red=0.1, nir=0.5, swir1=0.3, swir2=0.15)


def test_indices_match_hand_values():
    idx = compute_indices(REC)
    assert idx.ndvi == pytest.approx(0.4 / 0.6, abs=1e-12)
    assert idx.evi == pytest.approx(1.0 / 1.725, abs=1e-12)
    assert idx.savi == pytest.approx(0.4 / 1.1 * 1.5, abs=1e-12)
    assert idx.gndvi == pytest.approx(0.3 / 0.7, abs=1e-12)
    assert idx.sr == pytest.approx(5.0, abs=1e-12)
    assert idx.msavi == pytest.approx(0.5 * (2 - math.sqrt(0.8)), abs=1e-12)
    assert idx.ndwi == pytest.approx(-0.3 / 0.7, abs=1e-12)
    assert idx.pri == -idx.ndvi
    assert idx.rendvi == idx.ndvi == idx.ndre
    assert idx.degenerate == ()


def test_zero_denominators_are_flagged_not_raised():
    idx = compute_indices(BandRecord(blue=0.0, green=0.0, red=0.0, nir=0.0, swir1=0.0, swir2=0.0))
    for name in ("ndvi", "gndvi", "ndwi", "pri", "sr", "rendvi", "ndre"):
        assert getattr(idx, name) is None
    assert idx.msavi == 0.0
    assert idx.savi == 0.0
    with pytest.raises(DegenerateIndexError):
        spectral.build_feature_vector(BandRecord(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
                                      idx, ("ndvi",))


def test_evi_non_positive_denominator_is_degenerate():
    # nir + 6 red - 7.5 blue + 1 <= 0
    idx = compute_indices(BandRecord(blue=1.0, green=0.1, red=0.0, nir=0.0, swir1=0.1, swir2=0.1))
    assert idx.evi is None
    assert "evi" in idx.degenerate


def test_normalized_difference_raises_on_zero_sum():
    assert spectral.normalized_difference(3.0, 1.0) == 0.5
    with pytest.raises(ArithmeticError):
        spectral.normalized_difference(0.0, 0.0)


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), -0.01])
def test_band_record_validation(bad):
    with pytest.raises(DataError):
        BandRecord(blue=bad, green=0.1, red=0.1, nir=0.1, swir1=0.1, swir2=0.1)


def test_band_record_optional_bands():
    assert REC.coastal is None
    with pytest.raises(DataError):
        REC.get("coastal")


def test_feature_vector_order_follows_selection():
    idx = compute_indices(REC)
    v = spectral.build_feature_vector(REC, idx, ("ndvi", "red", "nir"))
    np.testing.assert_array_equal(v, [idx.ndvi, 0.1, 0.5])
    v = spectral.build_feature_vector(REC, idx)
    assert v.shape == (len(spectral.DEFAULT_FEATURES),)


def test_feature_name_validation():
    with pytest.raises(ConfigError):
        spectral.check_feature_names(["ndvi", "bogus"])
    with pytest.raises(ConfigError):
        spectral.check_feature_names(["ndvi", "ndvi"])
    with pytest.raises(ConfigError):
        spectral.check_feature_names([])
    assert spectral.check_feature_names(["noise0"], ["noise0"]) == ("noise0",)


def test_required_bands():
    assert set(spectral.required_bands(["evi"])) == {"nir", "red", "blue"}
    assert set(spectral.required_bands(["gndvi", "swir1"])) == {"nir", "green", "swir1"}


def test_band_mapping():
    m = BandMapping.landsat8()
    assert m.column("nir") == "B5"
    assert m.column("red") == "B4"
    with pytest.raises(ConfigError):
        BandMapping({"red": "X", "nir": "X"})
    with pytest.raises(ConfigError):
        BandMapping({"ultraviolet": "U"})
    with pytest.raises(ConfigError):
        BandMapping({"red": "B4"}).require(["nir"])


def test_feature_matrix_masks_degenerate_rows():
    bands = {b: np.array([0.1, 0.0]) for b in ("blue", "green", "red", "nir")}
    X, ok = spectral.feature_matrix(bands, ("red", "ndvi"))
    assert ok.tolist() == [True, False]
    assert X[0, 0] == 0.1 and X[0, 1] == 0.0


def test_vectorized_matches_scalar(rng):
    cols = {b: rng.uniform(0, 1, 200) for b in ("blue", "green", "red", "nir")}
    values, valid = spectral.index_arrays(cols)
    for i in range(200):
        rec = BandRecord(blue=cols["blue"][i], green=cols["green"][i], red=cols["red"][i],
                         nir=cols["nir"][i], swir1=0.1, swir2=0.1)
        idx = compute_indices(rec)
        for name in spectral.INDEX_NAMES:
            got = getattr(idx, name)
            if valid[name][i]:
                assert got == values[name][i]
            else:
                assert got is None


reflectance = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(reflectance, reflectance, reflectance, reflectance)
def test_index_identities_property(blue, green, red, nir):
    idx = compute_indices(BandRecord(blue=blue, green=green, red=red, nir=nir, swir1=0.0, swir2=0.0))
    if idx.ndvi is not None:
        assert idx.pri == -idx.ndvi
        assert -1.0 <= idx.ndvi <= 1.0
    assert idx.ndre == idx.rendvi
    for name in ("gndvi", "ndwi"):
        v = getattr(idx, name)
        assert v is None or -1.0 <= v <= 1.0
    assert idx.msavi is not None and math.isfinite(idx.msavi)


@settings(max_examples=200, deadline=None)
@given(reflectance)
def test_msavi_zero_when_nir_equals_red(x):
    idx = compute_indices(BandRecord(blue=0.1, green=0.1, red=x, nir=x, swir1=0.1, swir2=0.1))
    assert idx.msavi == 0.0
