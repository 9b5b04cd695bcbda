"""Canonical JSON checkpoints, PGM images, CSV exports."""

import json

import numpy as np
import pytest

from simdsparse.checkpoint import (FORMAT_VERSION, heatmap_image,
                                   load_checkpoint, read_pgm,
                                   save_checkpoint, write_matrix_csv,
                                   write_pgm, write_trace_csv)
from simdsparse.model import init_params
from simdsparse.pruning import apply_mask, compute_group_mask


@pytest.fixture
def ckpt_state():
    rng = np.random.default_rng(0)
    params = init_params(rng, hidden=8, bands=2, samples_per_step=2,
                         cond_dim=4)
    masks = {"fc1": compute_group_mask(params["fc1"], 4, 0.5)}
    params["fc1"] = apply_mask(params["fc1"], masks["fc1"])
    config = {"hidden": 8, "seed": 0, "data": {"seq_len": 64}}
    return config, params, masks


class TestCheckpointRoundTrip:
    def test_save_load_save_is_byte_identical(self, tmp_path, ckpt_state):
        config, params, masks = ckpt_state
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        save_checkpoint(p1, config, 1234, params, masks, group_size=4)
        loaded = load_checkpoint(p1)
        save_checkpoint(p2, loaded["config"], loaded["step"],
                        loaded["params"], loaded["masks"],
                        loaded["group_size"])
        assert p1.read_bytes() == p2.read_bytes()

    def test_values_float32_exact(self, tmp_path, ckpt_state):
        config, params, masks = ckpt_state
        path = tmp_path / "c.json"
        save_checkpoint(path, config, 7, params, masks, group_size=4)
        loaded = load_checkpoint(path)
        assert loaded["step"] == 7
        assert loaded["config"] == config
        assert loaded["group_size"] == 4
        for name, w in params.items():
            got = loaded["params"][name]
            assert got.dtype == np.float32
            np.testing.assert_array_equal(got, w, err_msg=name)
        np.testing.assert_array_equal(loaded["masks"]["fc1"], masks["fc1"])

    def test_canonical_layout(self, tmp_path, ckpt_state):
        config, params, masks = ckpt_state
        path = tmp_path / "d.json"
        save_checkpoint(path, config, 1, params, masks, group_size=4)
        text = path.read_text()
        assert text.endswith("\n")
        obj = json.loads(text)
        assert obj["format_version"] == FORMAT_VERSION
        # sorted keys and compact separators
        assert text[:-1] == json.dumps(obj, sort_keys=True,
                                       separators=(",", ":"))

    def test_rejects_non_group_constant_mask(self, tmp_path, ckpt_state):
        config, params, masks = ckpt_state
        bad = masks["fc1"].copy()
        bad[0, 0] = 1 - bad[0, 0]
        with pytest.raises(ValueError, match="group"):
            save_checkpoint(tmp_path / "e.json", config, 1, params,
                            {"fc1": bad}, group_size=4)

    def test_load_validates_structure(self, tmp_path):
        path = tmp_path / "f.json"
        path.write_text("{not json")
        with pytest.raises(ValueError, match="JSON"):
            load_checkpoint(path)

        path.write_text(json.dumps({"format_version": 99}))
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)

        obj = {"format_version": FORMAT_VERSION, "config": {}, "step": 0,
               "matrices": {"w": {"rows": 2, "cols": 2, "values": [1.0]}},
               "vectors": {}, "masks": {}}
        path.write_text(json.dumps(obj))
        with pytest.raises(ValueError, match="w"):
            load_checkpoint(path)

        obj = {"format_version": FORMAT_VERSION, "config": {}, "step": 0,
               "matrices": {}, "vectors": {}}
        path.write_text(json.dumps(obj))
        with pytest.raises(ValueError, match="masks"):
            load_checkpoint(path)


class TestHeatmap:
    def test_pixel_formula(self):
        w = np.array([[0.0, 1.0], [-2.0, 0.5]])
        img = heatmap_image(w)
        assert img.dtype == np.uint8
        # round(255 * |w| / 2.0)
        np.testing.assert_array_equal(img, [[0, 128], [255, 64]])

    def test_all_zero_matrix(self):
        img = heatmap_image(np.zeros((3, 4)))
        np.testing.assert_array_equal(img, 0)

    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 256, (5, 9)).astype(np.uint8)
        path = tmp_path / "x.pgm"
        write_pgm(path, img)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n9 5\n255\n")
        assert len(raw) == len(b"P5\n9 5\n255\n") + 45
        np.testing.assert_array_equal(read_pgm(path), img)


class TestCsv:
    def test_matrix_csv_exact_repr(self, tmp_path):
        w = np.array([[0.1, -2.5, 0.0]], np.float32)
        path = tmp_path / "w.csv"
        write_matrix_csv(path, w)
        lines = path.read_text().splitlines()
        assert len(lines) == 1
        back = np.array([[float(v) for v in lines[0].split(",")]],
                        np.float32)
        np.testing.assert_array_equal(back, w)
        # masked zeros must serialize as exact zeros
        assert lines[0].split(",")[2] == "0.0"

    def test_trace_csv_schema(self, tmp_path):
        rows = [{"step": 1, "nll": 2.5, "reg": 100.0, "total": 2.51,
                 "sparsity": 0.0},
                {"step": 2, "nll": 2.25, "reg": 99.0, "total": 2.26,
                 "sparsity": 0.5}]
        path = tmp_path / "t.csv"
        write_trace_csv(path, rows)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,nll,reg,total,sparsity"
        assert lines[1] == "1,2.5,100.0,2.51,0.0"
        assert len(lines) == 3
