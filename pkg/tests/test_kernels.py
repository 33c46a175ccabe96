"""Backend parity: the numba kernels must reproduce the NumPy reference exactly."""

import numpy as np
import pytest

from traj_atlas.kernels import numpy_backend

try:
    from traj_atlas.kernels import numba_backend

    BACKENDS = [numpy_backend, numba_backend]
except ImportError:  # pragma: no cover
    numba_backend = None
    BACKENDS = [numpy_backend]

needs_numba = pytest.mark.skipif(numba_backend is None, reason="numba unavailable")


def random_polylines(rng, n_traj, h, w):
    px, py, offsets = [], [], [0]
    for _ in range(n_traj):
        n = int(rng.integers(2, 12))
        px.extend(rng.integers(-3, w + 3, n))
        py.extend(rng.integers(-3, h + 3, n))
        offsets.append(len(px))
    return (
        np.asarray(px, dtype=np.int64),
        np.asarray(py, dtype=np.int64),
        np.asarray(offsets, dtype=np.int64),
    )


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_rasterize_parity(seed):
    rng = np.random.default_rng(seed)
    h, w = 40, 55
    px, py, offsets = random_polylines(rng, 8, h, w)
    a = numpy_backend.rasterize(h, w, px, py, offsets)
    b = numba_backend.rasterize(h, w, px, py, offsets)
    assert np.array_equal(a, b)


@needs_numba
@pytest.mark.parametrize("radius", [1, 2, 3])
def test_morphology_parity(radius):
    rng = np.random.default_rng(radius)
    img = rng.integers(0, 6, size=(37, 41)).astype(np.float64)
    assert np.array_equal(numpy_backend.erode(img, radius), numba_backend.erode(img, radius))
    assert np.array_equal(numpy_backend.dilate(img, radius), numba_backend.dilate(img, radius))


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_thin_parity(seed):
    rng = np.random.default_rng(seed)
    img = (rng.random((50, 60)) < 0.45).astype(np.uint8)
    assert np.array_equal(numpy_backend.thin(img), numba_backend.thin(img))


@needs_numba
def test_segments_dist_parity():
    rng = np.random.default_rng(3)
    px, py = rng.normal(0, 10, 40), rng.normal(0, 10, 40)
    ax, ay = rng.normal(0, 10, 25), rng.normal(0, 10, 25)
    bx, by = ax + rng.normal(0, 5, 25), ay + rng.normal(0, 5, 25)
    bx[0], by[0] = ax[0], ay[0]  # degenerate zero-length segment
    a = numpy_backend.segments_dist_sq(px, py, ax, ay, bx, by)
    b = numba_backend.segments_dist_sq(px, py, ax, ay, bx, by)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.NAME)
class TestKernelContracts:
    def test_rasterize_dedup_per_polyline(self, backend):
        # a polyline that doubles back still counts each pixel once
        px = np.array([0, 5, 0], dtype=np.int64)
        py = np.array([2, 2, 2], dtype=np.int64)
        counts = backend.rasterize(5, 7, px, py, np.array([0, 3], dtype=np.int64))
        assert counts.max() == 1
        assert counts.sum() == 6

    def test_rasterize_out_of_grid_skipped(self, backend):
        px = np.array([-5, 3], dtype=np.int64)
        py = np.array([1, 1], dtype=np.int64)
        counts = backend.rasterize(3, 5, px, py, np.array([0, 2], dtype=np.int64))
        assert counts[1, :4].sum() == 4
        assert counts.sum() == 4

    def test_erode_dilate_against_bruteforce(self, backend):
        rng = np.random.default_rng(11)
        img = rng.integers(0, 5, size=(12, 14)).astype(np.float64)
        r = 2
        pad = np.pad(img, r, constant_values=0.0)
        for op, fn in (("min", backend.erode), ("max", backend.dilate)):
            got = fn(img, r)
            for y in range(img.shape[0]):
                for x in range(img.shape[1]):
                    win = pad[y : y + 2 * r + 1, x : x + 2 * r + 1]
                    want = win.min() if op == "min" else win.max()
                    assert got[y, x] == want

    def test_distance_matches_pointwise(self, backend):
        p = np.array([[0.0, 1.0]])
        seg = np.array([[0.0, 0.0, 2.0, 0.0]])
        d2 = backend.segments_dist_sq(p[:, 0], p[:, 1], seg[:, 0], seg[:, 1], seg[:, 2], seg[:, 3])
        assert d2[0, 0] == pytest.approx(1.0)
        # beyond the segment end, distance is to the endpoint
        d2 = backend.segments_dist_sq(
            np.array([5.0]), np.array([0.0]), seg[:, 0], seg[:, 1], seg[:, 2], seg[:, 3]
        )
        assert d2[0, 0] == pytest.approx(9.0)
