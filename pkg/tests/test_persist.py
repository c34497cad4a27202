import json
import struct

import numpy as np
import pytest

from tood import persist
from tood.datasets import gen_tabular
from tood.forest import ForestConfig, apply, fit


@pytest.fixture(scope="module")
def model():
    return fit(gen_tabular(200, n_features=4, seed=1), ForestConfig(n_estimators=7, seed=2))


def test_round_trip_is_exact(model, tmp_path):
    path = tmp_path / "m.tood"
    persist.save(model, path)
    back = persist.load(path)
    assert back.structurally_equal(model)
    X = np.random.default_rng(0).random((50, 4))
    np.testing.assert_array_equal(apply(back, X), apply(model, X))
    assert back.fingerprint() == model.fingerprint()
    assert persist.to_bytes(back) == persist.to_bytes(model)


def _split(blob):
    (hlen,) = struct.unpack_from("<I", blob, 8)
    return json.loads(blob[12:12 + hlen]), blob[12 + hlen:]


def _join(head, payload):
    h = json.dumps(head, sort_keys=True).encode()
    return persist.MAGIC + struct.pack("<I", len(h)) + h + payload


def test_version_mismatch(model):
    head, payload = _split(persist.to_bytes(model))
    head["format_version"] = 99
    with pytest.raises(persist.ModelVersionError, match="99"):
        persist.from_bytes(_join(head, payload))


@pytest.mark.parametrize("cut", [3, 20, -1, -500])
def test_truncation_detected(model, cut):
    blob = persist.to_bytes(model)
    with pytest.raises(persist.ModelFormatError):
        persist.from_bytes(blob[:cut])


def test_corruption_detected(model):
    blob = bytearray(persist.to_bytes(model))
    blob[-9] ^= 0xFF
    with pytest.raises(persist.ModelFormatError, match="checksum"):
        persist.from_bytes(bytes(blob))
    with pytest.raises(persist.ModelFormatError, match="magic"):
        persist.from_bytes(b"NOTAMODEL" + bytes(blob[9:]))
