import numpy as np
import pytest

from uvdiff import rng
from uvdiff.formats import (
    latent_to_rgb,
    read_gbuffer,
    read_latent,
    sha256_file,
    write_gbuffer,
    write_latent,
)
from uvdiff.rasterizer import rasterize_frame

from conftest import facing_quad_scene, grid_gbuffer


class TestGBufferFormat:
    def test_round_trip(self, tmp_path):
        gbuf = rasterize_frame(facing_quad_scene(1), 0, 24, 20)
        path = tmp_path / "frame.gbuf"
        write_gbuffer(gbuf, path)
        loaded = read_gbuffer(path)
        assert loaded.width == 24 and loaded.height == 20
        assert np.array_equal(loaded.object_id, gbuf.object_id)
        # payload is f32
        assert np.allclose(loaded.uv, gbuf.uv, atol=1e-6)
        assert np.allclose(loaded.depth[gbuf.coverage], gbuf.depth[gbuf.coverage], rtol=1e-6)
        assert np.all(np.isinf(loaded.depth[~gbuf.coverage]))
        loaded.validate()

    def test_header_layout(self, tmp_path):
        gbuf = grid_gbuffer(4, 6)
        path = tmp_path / "frame.gbuf"
        write_gbuffer(gbuf, path)
        raw = path.read_bytes()
        assert raw[:4] == b"GBUF"
        assert int.from_bytes(raw[4:8], "little") == 1   # version
        assert int.from_bytes(raw[8:12], "little") == 6  # width
        assert int.from_bytes(raw[12:16], "little") == 4  # height
        n = 24
        assert len(raw) == 16 + 4 * n + 4 * n + 2 * n + 4 * n

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.gbuf"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            read_gbuffer(path)

    def test_truncation_rejected(self, tmp_path):
        gbuf = grid_gbuffer(4, 4)
        path = tmp_path / "frame.gbuf"
        write_gbuffer(gbuf, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ValueError, match="expected"):
            read_gbuffer(path)


class TestLatentFormat:
    def test_round_trip_exact_at_f32(self, tmp_path):
        latent = rng.normal_field((12, 10, 4), 0, "latent-io").astype(np.float32).astype(np.float64)
        path = tmp_path / "z.latf"
        write_latent(latent, path)
        loaded = read_latent(path)
        assert loaded.shape == (12, 10, 4)
        assert np.array_equal(loaded, latent)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "z.latf"
        write_latent(np.zeros((3, 5, 2)), path)
        raw = path.read_bytes()
        assert raw[:4] == b"LATF"
        assert int.from_bytes(raw[8:12], "little") == 5  # width
        assert int.from_bytes(raw[12:16], "little") == 3  # height
        assert int.from_bytes(raw[16:20], "little") == 2  # channels
        assert len(raw) == 20 + 4 * 15 * 2

    def test_identical_arrays_identical_files(self, tmp_path):
        latent = rng.normal_field((8, 8, 4), 1, "latent-io")
        write_latent(latent, tmp_path / "a.latf")
        write_latent(latent.copy(), tmp_path / "b.latf")
        assert sha256_file(tmp_path / "a.latf") == sha256_file(tmp_path / "b.latf")


class TestVisualization:
    def test_rgb_shape_and_range(self):
        latent = rng.normal_field((16, 16, 4), 2, "vis") * 3
        rgb = latent_to_rgb(latent)
        assert rgb.shape == (16, 16, 3)
        assert rgb.dtype == np.uint8

    def test_single_channel_broadcasts(self):
        rgb = latent_to_rgb(np.zeros((4, 4, 1)))
        assert rgb.shape == (4, 4, 3)
        assert np.all(rgb == 128)  # latent 0 maps to mid-gray

    def test_deterministic(self):
        latent = rng.normal_field((8, 8, 4), 3, "vis")
        assert np.array_equal(latent_to_rgb(latent), latent_to_rgb(latent.copy()))
