import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curveret import spectral
from curveret.curvelet import (
    IntegrityError,
    TilingConfig,
    TilingError,
    build_wedge_masks,
    default_tiling,
    forward,
    geometric_wedges,
    inverse,
    label_plane,
    max_scales,
    processed_half_plane,
    tile_count,
)
from curveret.imageio import Image

from conftest import random_tiling


def self_conjugate(n1, n2):
    ci, cj = spectral.conjugate_index(n1), spectral.conjugate_index(n2)
    return (ci[:, None] == np.arange(n1)[:, None]) & (cj[None, :] == np.arange(n2)[None, :])


def plane_energy_of_tiles(coeffs):
    return sum(float((c ** 2).sum()) for _, c in coeffs.tiles)


class TestTilingConfig:
    def test_default_boundaries(self):
        cfg = default_tiling(256, 256, 5)
        assert cfg.V == (8, 16, 32, 64, 128)
        assert cfg.H == cfg.V
        assert default_tiling(128, 128, 3).V == (16, 32, 64)

    def test_rectangular_default(self):
        cfg = default_tiling(128, 64, 3)
        assert cfg.V == (16, 32, 64)
        assert cfg.H == (8, 16, 32)

    @pytest.mark.parametrize("bad", [
        dict(V=(4, 4), H=(8, 32)),
        dict(V=(3, 32), H=(8, 32)),
        dict(V=(8, 33), H=(8, 32)),
        dict(V=(8, 32), H=(8, 32), A=((5, 4),)),
        dict(V=(8, 32), H=(8, 32), outer_mode="lowpass"),
    ])
    def test_invalid(self, bad):
        kw = dict(dims=(64, 64), V=(8, 32), H=(8, 32), A=((4, 4),), outer_mode="periodic")
        kw.update(bad)
        with pytest.raises(TilingError):
            TilingConfig(**kw)

    def test_too_many_scales(self):
        with pytest.raises(TilingError):
            default_tiling(64, 64, max_scales(64, 64) + 1)

    def test_text_roundtrip(self, rng, tmp_path):
        for _ in range(10):
            cfg = random_tiling(rng, 96, 80)
            assert TilingConfig.from_text(cfg.to_text()) == cfg
            cfg.save(tmp_path / "t.txt")
            assert TilingConfig.load(tmp_path / "t.txt").fingerprint() == cfg.fingerprint()

    def test_fingerprint_sensitive(self):
        a = default_tiling(64, 64, 3)
        assert a.fingerprint() != a.with_divisions(2, 1, 8).fingerprint()
        assert a.fingerprint() != a.with_locations((8, 14, 32), a.H).fingerprint()


class TestTileCount:
    def test_two_scale_periodic(self):
        cfg = default_tiling(64, 64, 2, 4, "periodic")
        assert tile_count(cfg) == 18
        assert len(forward(Image(np.zeros((64, 64))), cfg)) == 18

    def test_two_scale_highpass(self):
        cfg = default_tiling(64, 64, 2, 4, "highpass")
        assert tile_count(cfg) == 4
        assert len(build_wedge_masks(cfg)) == 4

    def test_formula(self, rng):
        for _ in range(20):
            cfg = random_tiling(rng, 128, 96)
            expected = 1 + sum(sum(a) for a in cfg.A[:-1])
            expected += sum(cfg.A[-1]) if cfg.outer_mode == "periodic" else 1
            assert tile_count(cfg) == 2 * expected == len(build_wedge_masks(cfg))


class TestPartition:
    @pytest.mark.parametrize("dims", [(64, 64), (63, 65), (64, 50), (33, 48)])
    def test_half_plane_cover(self, dims, rng):
        n1, n2 = dims
        cfg = random_tiling(rng, n1, n2)
        P = processed_half_plane(cfg)
        ci, cj = spectral.conjugate_index(n1), spectral.conjugate_index(n2)
        Pc = P[ci][:, cj]
        sc = self_conjugate(n1, n2)
        assert np.all(P | Pc)
        assert np.all((P & Pc) == sc)

    @pytest.mark.parametrize("dims", [(64, 64), (63, 65), (48, 31)])
    def test_masks_disjoint(self, dims, rng):
        cfg = random_tiling(rng, *dims)
        count = np.zeros(dims, int)
        for g in build_wedge_masks(cfg)[::2]:
            count += g.support(dims)
        assert count.max() == 1
        assert np.array_equal(count == 1, processed_half_plane(cfg))

    def test_scale_membership(self, rng):
        # Oracle: the scale of each bin is the smallest rectangle holding it.
        n1, n2 = 80, 72
        cfg = random_tiling(rng, n1, n2, J=4)
        k1, k2 = spectral.frequency_grid(n1, n2)
        labels = label_plane(cfg)
        scales = [s for s, _, _ in geometric_wedges(cfg)]
        for i in range(n1):
            for j in range(n2):
                if labels[i, j] < 0:
                    continue
                a, b = abs(k1[i, j]), abs(k2[i, j])
                expected = next((s + 1 for s in range(cfg.J - 1)
                                 if a <= cfg.V[s] and b <= cfg.H[s]), cfg.J)
                assert scales[labels[i, j]] == expected

    def test_wedge_order_follows_angle(self):
        n = 65
        cfg = default_tiling(n, n, 3, 8)
        k1, k2 = spectral.frequency_grid(n, n)
        labels = label_plane(cfg)
        wedges = geometric_wedges(cfg)
        for s in (2, 3):
            V, H = cfg.V[s - 1], cfg.H[s - 1]
            for q in (1, 2):
                ids = [i for i, w in enumerate(wedges) if w[:2] == (s, q)]
                sel = np.isin(labels, ids)
                if q == 1:
                    key = (k2[sel] * V) / (k1[sel] * H)
                else:
                    key = -(k1[sel] * H) / (k2[sel] * V)
                order = np.argsort(key, kind="stable")
                assert np.all(np.diff(labels[sel][order]) >= 0)

    def test_roughly_equal_wedges(self):
        cfg = default_tiling(64, 64, 2, 4, "periodic")
        counts = [g.bin_count for g in build_wedge_masks(cfg)[::2] if g.quadrant]
        assert len(counts) == 8
        assert max(counts) / min(counts) < 1.3

    def test_quadrant_one_holds_row_frequencies(self):
        cfg = default_tiling(64, 64, 2)
        labels = label_plane(cfg)
        wedges = geometric_wedges(cfg)
        # a purely vertical frequency (k2 = 0, k1 > 0): horizontal stripes
        assert wedges[labels[32 + 20, 32]][1] == 1
        assert wedges[labels[32, 32 + 20]][1] == 2


class TestTransform:
    @pytest.mark.parametrize("dims", [(64, 64), (63, 65), (64, 49), (40, 56)])
    @pytest.mark.parametrize("mode", ["periodic", "highpass"])
    def test_perfect_reconstruction(self, dims, mode, rng):
        img = Image(rng.random(dims))
        for _ in range(3):
            cfg = random_tiling(rng, *dims, mode=mode)
            err = np.abs(inverse(forward(img, cfg)).pixels - img.pixels).max()
            assert err <= 1e-10

    def test_zero_image(self):
        cfg = default_tiling(64, 64, 3)
        coeffs = forward(Image(np.zeros((64, 64))), cfg)
        assert all(not np.any(c) for _, c in coeffs.tiles)
        assert not np.any(inverse(coeffs).pixels)

    def test_energy_split(self, rng):
        n1, n2 = 64, 62
        img = Image(rng.random((n1, n2)))
        cfg = random_tiling(rng, n1, n2)
        coeffs = forward(img, cfg)
        X = spectral.fft2(img)
        sc = self_conjugate(n1, n2)
        self_energy = float((np.abs(X[sc]) ** 2).sum())
        total = 2 * plane_energy_of_tiles(coeffs) - self_energy
        assert total == pytest.approx(float((img.pixels ** 2).sum()), rel=1e-10)

    def test_single_wedge_sinusoid(self):
        n = 64
        cfg = default_tiling(n, n, 3)
        y, x = np.mgrid[0:n, 0:n]
        k = (5, 22)
        img = Image(np.cos(2 * np.pi * (k[0] * y / n + k[1] * x / n)))
        coeffs = forward(img, cfg)
        energies = np.array([float((np.abs(c) ** 2).sum()) for _, c in coeffs.wedges()])
        assert energies.max() / energies.sum() > 0.999
        gid = label_plane(cfg)[n // 2 + k[0], n // 2 + k[1]]
        if gid < 0:
            gid = label_plane(cfg)[n // 2 - k[0], n // 2 - k[1]]
        assert int(np.argmax(energies)) == gid

    def test_zeroed_wedge_energy(self, rng):
        n = 64
        img = Image(rng.random((n, n)))
        cfg = default_tiling(n, n, 3)
        coeffs = forward(img, cfg)
        X = spectral.fft2(img)
        g0 = coeffs.tiles[6][0]
        key = (g0.scale, g0.quadrant, g0.wedge_index)
        killed = coeffs.map_tiles(
            lambda g, c: np.zeros_like(c) if (g.scale, g.quadrant, g.wedge_index) == key else c)
        out = inverse(killed)
        removed = float((np.abs(X[g0.support((n, n))]) ** 2).sum())
        assert float(((img.pixels - out.pixels) ** 2).sum()) == pytest.approx(2 * removed, rel=1e-9)

    def test_linearity(self, rng):
        cfg = default_tiling(48, 48, 3)
        a, b = rng.random((48, 48)), rng.random((48, 48))
        fa, fb, fab = forward(a, cfg), forward(b, cfg), forward(2.0 * a - 0.5 * b, cfg)
        for (_, ca), (_, cb), (_, cab) in zip(fa.tiles, fb.tiles, fab.tiles):
            np.testing.assert_allclose(cab, 2.0 * ca - 0.5 * cb, atol=1e-12)

    def test_shape_mismatch(self, noise_image):
        with pytest.raises(ValueError):
            forward(noise_image, default_tiling(32, 32, 2))

    def test_integrity_check(self, noise_image):
        coeffs = forward(noise_image, default_tiling(64, 64, 3))
        coeffs.tiles.pop()
        with pytest.raises(IntegrityError):
            inverse(coeffs)


@settings(max_examples=40, deadline=None)
@given(n1=st.integers(16, 70), n2=st.integers(16, 70), seed=st.integers(0, 2 ** 32 - 1))
def test_reconstruction_property(n1, n2, seed):
    rng = np.random.default_rng(seed)
    cfg = random_tiling(rng, n1, n2)
    img = rng.standard_normal((n1, n2))
    assert np.abs(inverse(forward(img, cfg)).pixels - img).max() <= 1e-8
