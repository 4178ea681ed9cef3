import json

import numpy as np
import pytest

from injectcheck.errors import CsvFormatError
from injectcheck.io import (
    conv_from_dict,
    dumps_json,
    format_matrix_csv,
    load_layer,
    load_network,
    network_from_obj,
    network_to_obj,
    parse_matrix_csv,
    read_vector_csv,
)


class TestMatrixCsv:
    def test_comments_and_blank_lines(self):
        M = parse_matrix_csv("# seed=3\n1, 2\n\n-3.5,4e-1\n")
        np.testing.assert_array_equal(M, [[1, 2], [-3.5, 0.4]])

    def test_bad_token_position(self):
        with pytest.raises(CsvFormatError) as exc:
            parse_matrix_csv("1,2\n3,x\n")
        assert (exc.value.line, exc.value.column) == (2, 3)

    def test_ragged(self):
        with pytest.raises(CsvFormatError):
            parse_matrix_csv("1,2\n3\n")

    def test_empty(self):
        with pytest.raises(CsvFormatError):
            parse_matrix_csv("# nothing\n")

    def test_nonfinite(self):
        with pytest.raises(CsvFormatError):
            parse_matrix_csv("1,inf\n")

    def test_round_trip_is_exact(self):
        M = np.random.default_rng(0).standard_normal((4, 3))
        np.testing.assert_array_equal(parse_matrix_csv(format_matrix_csv(M, ["seed=1"])), M)

    def test_vector_as_column(self, tmp_path):
        p = tmp_path / "b.csv"
        p.write_text("1\n2\n3\n")
        np.testing.assert_array_equal(read_vector_csv(p), [1, 2, 3])


class TestJson:
    def test_floats_have_17_digits(self):
        text = dumps_json({"x": 0.1, "v": [1, 2.5], "flag": True, "none": None})
        doc = json.loads(text)
        assert doc == {"x": 0.1, "v": [1, 2.5], "flag": True, "none": None}
        assert "0.10000000000000001" in text

    def test_numpy_scalars(self):
        assert json.loads(dumps_json({"a": np.float64(2.0), "b": np.int64(3)})) == {"a": 2.0, "b": 3}


class TestDocuments:
    def test_layer_with_csv_reference(self, tmp_path):
        (tmp_path / "w.csv").write_text("1,0\n0,1\n-1,0\n0,-1\n")
        (tmp_path / "layer.json").write_text(json.dumps({"weight": "w.csv", "bias": [0, 0, 0, 0]}))
        layer = load_layer(tmp_path / "layer.json")
        assert layer.weight.shape == (4, 2) and layer.activation == "relu"

    def test_network_round_trip(self, tmp_path):
        obj = {"layers": [{"weight": [[1, 0], [0, 1], [-1, 0], [0, -1]]},
                          {"weight": np.eye(4).tolist(), "activation": "leaky_relu", "alpha": 0.2},
                          {"weight": [[1, 1, 1, 1]], "final": True}]}
        net = network_from_obj(obj)
        again = network_from_obj(json.loads(dumps_json(network_to_obj(net, seed=4))))
        assert again.layers[1].alpha == 0.2
        np.testing.assert_array_equal(again.final, [[1, 1, 1, 1]])
        (tmp_path / "net.json").write_text(json.dumps(obj["layers"]))
        assert load_network(tmp_path / "net.json").out_dim == 1

    def test_conv_bank(self):
        spec = conv_from_dict({"kernels": [{"shape": [1, 2], "values": [1, -1]}],
                               "signal_shape": [3, 3], "boundary": "periodic"})
        assert spec.kernels[0].width == (1, 2)
        assert spec.signal_shape == (3, 3) and spec.boundary == "periodic"
