import json

import numpy as np
import pytest

from lda_fas import io as aio
from lda_fas.errors import ConfigurationError
from lda_fas.lda_head import init_bank
from lda_fas.model import init_params
from lda_fas.synthdata import default_fig1_spec, sample_mixture


class TestRoundTrips:
    def test_samples(self, tmp_path):
        s = sample_mixture(default_fig1_spec(), 50, 0)
        aio.write_samples(tmp_path / "s.csv", s)
        r = aio.read_samples(tmp_path / "s.csv")
        np.testing.assert_array_equal(r.x, s.x)  # repr floats round-trip exactly
        for name in ("y", "spoof_type", "illum", "cluster"):
            np.testing.assert_array_equal(getattr(r, name), getattr(s, name))

    def test_bank(self, tmp_path):
        b = init_bank(3, 5, 1)
        aio.write_bank(tmp_path / "b.csv", b)
        r = aio.read_bank(tmp_path / "b.csv")
        np.testing.assert_array_equal(r.live, b.live)
        np.testing.assert_array_equal(r.spoof, b.spoof)

    def test_model(self, tmp_path):
        p = init_params([2, 4, 3], 0)
        aio.write_model(tmp_path / "m.json", p)
        q = aio.read_model(tmp_path / "m.json")
        for a, b in zip(p.weights + p.biases, q.weights + q.biases):
            np.testing.assert_array_equal(a, b)

    def test_json_is_sorted_and_atomic(self, tmp_path):
        aio.write_json(tmp_path / "x.json", {"b": 1, "a": 2})
        text = (tmp_path / "x.json").read_text()
        assert text.index('"a"') < text.index('"b"')
        assert [p.name for p in tmp_path.iterdir()] == ["x.json"]  # no temp leftovers


class TestErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            aio.read_samples(tmp_path / "nope.csv")

    def test_malformed_json(self, tmp_path):
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigurationError):
            aio.read_json(tmp_path / "bad.json")

    def test_bank_without_spoof(self, tmp_path):
        (tmp_path / "b.csv").write_text("class,index,c0\nlive,0,1.0\n")
        with pytest.raises(ConfigurationError):
            aio.read_bank(tmp_path / "b.csv")

    def test_samples_missing_columns(self, tmp_path):
        (tmp_path / "s.csv").write_text("x0,y\n1.0,0\n")
        with pytest.raises(ConfigurationError):
            aio.read_samples(tmp_path / "s.csv")

    def test_model_missing_keys(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"weights": [[[1.0]]]}))
        with pytest.raises(ConfigurationError):
            aio.read_model(tmp_path / "m.json")
