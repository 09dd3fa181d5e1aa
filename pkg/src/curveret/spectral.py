"""Centered, unitary 2-D DFT helpers.

The DC bin sits at ``(N1 // 2, N2 // 2)`` after :func:`fft2`; both
directions use ``1/sqrt(N1 * N2)`` scaling so Parseval holds exactly.
"""

import numpy as np

from .imageio import as_array

IMAG_TOL = 1e-10


def fft2(img) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft2(as_array(img), norm="ortho"))


def ifft2_complex(spec: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(np.fft.ifftshift(spec), norm="ortho")


def ifft2(spec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2` for Hermitian spectra, returning a real grid.

    Raises ValueError if the imaginary residue is not negligible, which
    means the input was not the spectrum of a real image.
    """
    out = ifft2_complex(spec)
    scale = max(1.0, float(np.abs(out.real).max(initial=0.0)))
    if np.abs(out.imag).max(initial=0.0) > IMAG_TOL * scale:
        raise ValueError("spectrum is not Hermitian; use ifft2_complex")
    return out.real.copy()


def log_magnitude(spec: np.ndarray) -> np.ndarray:
    return np.log1p(np.abs(spec))


def conjugate_index(n: int) -> np.ndarray:
    """Index map i -> j with freq(j) = -freq(i) (mod n) in centered layout."""
    c = n // 2
    k = np.arange(n) - c
    return (-k + c) % n


def frequency_grid(n1: int, n2: int) -> tuple[np.ndarray, np.ndarray]:
    """Signed integer frequency coordinates (k1 rows, k2 columns), centered."""
    k1 = np.arange(n1) - n1 // 2
    k2 = np.arange(n2) - n2 // 2
    return np.meshgrid(k1, k2, indexing="ij")
