import math

import numpy as np
import pytest

from curveret import spectral
from curveret.imageio import Image


def dft_oracle(x):
    """Unitary centered DFT by explicit matrix products."""
    n1, n2 = x.shape
    k1 = np.arange(n1) - n1 // 2
    k2 = np.arange(n2) - n2 // 2
    F1 = np.exp(-2j * np.pi * np.outer(k1, np.arange(n1)) / n1) / math.sqrt(n1)
    F2 = np.exp(-2j * np.pi * np.outer(np.arange(n2), k2) / n2) / math.sqrt(n2)
    return F1 @ x @ F2


@pytest.mark.parametrize("shape", [(8, 8), (9, 12), (15, 10)])
def test_fft_matches_matrix_dft(shape):
    x = np.random.default_rng(0).random(shape)
    np.testing.assert_allclose(spectral.fft2(x), dft_oracle(x), atol=1e-12)


def test_constant_image():
    N, c = 16, 0.7
    X = spectral.fft2(Image(np.full((N, N), c)))
    assert X[N // 2, N // 2] == pytest.approx(c * N)
    X[N // 2, N // 2] = 0
    assert np.abs(X).max() < 1e-12


def test_zero():
    assert not np.any(spectral.fft2(np.zeros((8, 8))))
    assert not np.any(spectral.ifft2(np.zeros((8, 8), complex)))


@pytest.mark.parametrize("shape", [(8, 8), (9, 12), (16, 11)])
def test_hermitian(shape):
    X = spectral.fft2(np.random.default_rng(1).random(shape))
    ci, cj = spectral.conjugate_index(shape[0]), spectral.conjugate_index(shape[1])
    np.testing.assert_allclose(X, np.conj(X[ci][:, cj]), atol=1e-12)


def test_center_bin_inverse():
    N, v = 16, 3.0
    X = np.zeros((N, N), complex)
    X[N // 2, N // 2] = v
    np.testing.assert_allclose(spectral.ifft2(X), v / N, atol=1e-15)


def test_roundtrips_and_parseval(noise_image):
    x = noise_image.pixels
    X = spectral.fft2(x)
    assert np.abs(spectral.ifft2(X) - x).max() <= 1e-10
    assert np.abs(spectral.fft2(spectral.ifft2(X)) - X).max() <= 1e-10
    assert np.sum(np.abs(X) ** 2) == pytest.approx(np.sum(x ** 2), rel=1e-9)


def test_non_hermitian_rejected():
    X = np.zeros((8, 8), complex)
    X[4, 5] = 1.0
    with pytest.raises(ValueError):
        spectral.ifft2(X)
    assert spectral.ifft2_complex(X).shape == (8, 8)


def test_log_magnitude():
    X = np.zeros((8, 8), complex)
    assert not np.any(spectral.log_magnitude(X))
    X[2, 3] = (math.e - 1) * 1j
    assert spectral.log_magnitude(X)[2, 3] == pytest.approx(1.0)
    a = spectral.log_magnitude(np.array([3.0 + 4j]))
    b = spectral.log_magnitude(np.array([-2.0]))
    assert a[0] > b[0]
