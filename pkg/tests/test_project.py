import json

import numpy as np
import pytest
from PIL import Image

from flim.detect import BoundingBox
from flim.model import (
    FlimModel,
    GroundTruth,
    KernelBank,
    Layer,
    LayerSpec,
    Marker,
    MarkerBoundsError,
    MarkerSet,
    MissingImageError,
    ModelChecksumError,
    ModelFormatError,
    ModelVersionError,
    NormStats,
    Pooling,
    PostprocConfig,
    ProjectFormatError,
)
from flim.project import (
    count_parameters,
    load_model,
    load_project,
    save_model,
    save_project,
)


def write_png(path, height=100, width=100):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.zeros((height, width), dtype=np.uint8), mode="L").save(path)


def make_project_dir(root, image_ids=("a", "b")):
    for image_id in image_ids:
        write_png(root / "images" / f"{image_id}.png")
    return root


def unit_bank(n, k, c, seed=0):
    rng = np.random.default_rng(seed)
    kernels = rng.normal(size=(n, k, k, c))
    kernels /= np.linalg.norm(kernels.reshape(n, -1), axis=1)[:, None, None, None]
    return KernelBank(kernels=kernels.astype(np.float32),
                      provenance=[f"m{i}" for i in range(n)])


def make_layer(n, k, c, selected=None, seed=0):
    return Layer(spec=LayerSpec(kernel_size=k, dilation=1, kernels_per_marker=1,
                                kernels_total=n, pooling=Pooling("max", 3)),
                 norm_stats=NormStats(mean=np.zeros(c), std=np.ones(c)),
                 bank=unit_bank(n, k, c, seed),
                 selected=list(range(n)) if selected is None else selected)


class TestProjectRoundTrip:
    def test_empty_project_loads(self, tmp_path):
        make_project_dir(tmp_path, ("x", "y", "z"))
        project = load_project(tmp_path)
        assert sorted(project.images) == ["x", "y", "z"]
        assert project.markers == {}

    def test_round_trip_is_byte_identical(self, tmp_path):
        make_project_dir(tmp_path, ("a",))
        project = load_project(tmp_path)
        project.markers["a"] = MarkerSet("a", [
            Marker(2, [(5, 6), (1, 2)]),
            Marker(1, [(0, 0)]),
        ])
        project.ground_truth["a"] = GroundTruth("a", [BoundingBox(1, 2, 9, 8)])
        save_project(project)
        first = (tmp_path / "markers" / "a.json").read_bytes()
        reloaded = load_project(tmp_path)
        assert reloaded.markers["a"].to_json() == project.markers["a"].to_json()
        save_project(reloaded)
        assert (tmp_path / "markers" / "a.json").read_bytes() == first
        assert reloaded.ground_truth["a"].to_json() == project.ground_truth["a"].to_json()

    def test_save_to_new_dir_copies_images(self, tmp_path):
        src = make_project_dir(tmp_path / "src", ("a",))
        project = load_project(src)
        dst = tmp_path / "dst"
        save_project(project, dst)
        assert (dst / "images" / "a.png").exists()
        assert load_project(dst).image_ids() == ["a"]


class TestProjectValidation:
    def test_out_of_bounds_marker_names_image_and_marker(self, tmp_path):
        make_project_dir(tmp_path, ("a",))
        (tmp_path / "markers").mkdir()
        (tmp_path / "markers" / "a.json").write_text(json.dumps(
            {"image_id": "a", "markers": [{"marker_id": 3, "pixels": [[999, 0]]}]}))
        with pytest.raises(MarkerBoundsError) as err:
            load_project(tmp_path)
        assert "'a'" in str(err.value) and "3" in str(err.value)

    def test_dangling_image_reference(self, tmp_path):
        make_project_dir(tmp_path, ("a",))
        (tmp_path / "markers").mkdir()
        (tmp_path / "markers" / "ghost.json").write_text(json.dumps(
            {"image_id": "ghost", "markers": [{"marker_id": 1, "pixels": [[0, 0]]}]}))
        with pytest.raises(MissingImageError):
            load_project(tmp_path)

    def test_malformed_json(self, tmp_path):
        make_project_dir(tmp_path, ("a",))
        (tmp_path / "markers").mkdir()
        (tmp_path / "markers" / "a.json").write_text("{ not json")
        with pytest.raises(ProjectFormatError):
            load_project(tmp_path)

    @pytest.mark.parametrize("markers", [
        [{"marker_id": 1, "pixels": [[0, 0]]}, {"marker_id": 1, "pixels": [[1, 1]]}],
        [{"marker_id": 1, "pixels": []}],
        [{"marker_id": 1, "pixels": [[2, 2], [2, 2]]}],
    ])
    def test_marker_invariants(self, tmp_path, markers):
        make_project_dir(tmp_path, ("a",))
        (tmp_path / "markers").mkdir()
        (tmp_path / "markers" / "a.json").write_text(json.dumps(
            {"image_id": "a", "markers": markers}))
        with pytest.raises(ProjectFormatError):
            load_project(tmp_path)

    def test_gt_outside_bounds(self, tmp_path):
        make_project_dir(tmp_path, ("a",))
        (tmp_path / "gt").mkdir()
        (tmp_path / "gt" / "a.json").write_text(json.dumps(
            {"image_id": "a", "boxes": [{"x1": 0, "y1": 0, "x2": 101, "y2": 10}]}))
        with pytest.raises(ProjectFormatError):
            load_project(tmp_path)


class TestModelSerialization:
    def test_weights_payload_size(self, tmp_path):
        model = FlimModel(layers=[make_layer(2, 3, 3)])
        save_model(model, tmp_path)
        size = (tmp_path / "weights.bin").stat().st_size
        # 16-byte header + payload + 4-byte CRC; payload is exactly 2*27*4 bytes
        assert size == 16 + 2 * 27 * 4 + 4

    def test_weights_round_trip_bit_exact(self, tmp_path):
        model = FlimModel(layers=[make_layer(3, 3, 1, seed=1),
                                  make_layer(5, 3, 3, selected=[0, 2], seed=2)],
                          heuristic="ship",
                          postproc=PostprocConfig(0.0, 50))
        save_model(model, tmp_path)
        loaded = load_model(tmp_path)
        assert loaded.heuristic == "ship"
        assert loaded.postproc == model.postproc
        assert len(loaded.layers) == 2
        for got, want in zip(loaded.layers, model.layers):
            assert got.spec == want.spec
            assert got.selected == want.selected
            assert got.bank.provenance == want.bank.provenance
            assert got.bank.kernels.tobytes() == want.bank.kernels.tobytes()
            np.testing.assert_array_equal(got.norm_stats.mean, want.norm_stats.mean)
            np.testing.assert_array_equal(got.norm_stats.std, want.norm_stats.std)

    def test_truncated_weights(self, tmp_path):
        save_model(FlimModel(layers=[make_layer(2, 3, 1)]), tmp_path)
        blob = (tmp_path / "weights.bin").read_bytes()
        (tmp_path / "weights.bin").write_bytes(blob[:-10])
        with pytest.raises(ModelFormatError):
            load_model(tmp_path)

    def test_corrupted_weights_fail_checksum(self, tmp_path):
        save_model(FlimModel(layers=[make_layer(2, 3, 1)]), tmp_path)
        blob = bytearray((tmp_path / "weights.bin").read_bytes())
        blob[20] ^= 0xFF
        (tmp_path / "weights.bin").write_bytes(bytes(blob))
        with pytest.raises(ModelChecksumError):
            load_model(tmp_path)

    def test_version_mismatch(self, tmp_path):
        import struct
        import zlib

        save_model(FlimModel(layers=[make_layer(2, 3, 1)]), tmp_path)
        blob = bytearray((tmp_path / "weights.bin").read_bytes())[:-4]
        struct.pack_into("<I", blob, 4, 99)
        blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
        (tmp_path / "weights.bin").write_bytes(bytes(blob))
        with pytest.raises(ModelVersionError):
            load_model(tmp_path)

    def test_bad_magic(self, tmp_path):
        save_model(FlimModel(layers=[make_layer(2, 3, 1)]), tmp_path)
        blob = bytearray((tmp_path / "weights.bin").read_bytes())
        blob[0:4] = b"NOPE"
        (tmp_path / "weights.bin").write_bytes(bytes(blob))
        with pytest.raises(ModelFormatError):
            load_model(tmp_path)


class TestCountParameters:
    def test_single_layer(self):
        model = FlimModel(layers=[make_layer(10, 3, 3, selected=list(range(8)))])
        assert count_parameters(model, selected_only=True) == 8 * 3 * 3 * 3

    def test_two_layers(self):
        model = FlimModel(layers=[make_layer(4, 3, 3), make_layer(6, 3, 4)])
        assert count_parameters(model, selected_only=False) == 108 + 216 == 324

    def test_selected_vs_all_differ_by_deselected(self):
        model = FlimModel(layers=[make_layer(10, 3, 2, selected=[1, 5, 7]),
                                  make_layer(8, 5, 3, selected=[0, 4])])
        all_params = count_parameters(model, selected_only=False)
        kept = count_parameters(model, selected_only=True)
        deselected = (10 - 3) * 3 * 3 * 2 + (8 - 2) * 5 * 5 * 3
        assert all_params - kept == deselected

    def test_empty_model_raises(self):
        with pytest.raises(ValueError):
            count_parameters(FlimModel(layers=[]))
