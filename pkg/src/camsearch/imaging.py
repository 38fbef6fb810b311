"""Synthetic noise environment, image synthesis and the picture-count law.

Frames are plain 2-D float arrays with intensities in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import BadKernel, DimensionMismatch, EmptyList, FrameTooSmall

# second-difference kernel; white noise of std s gives a response of std 6*s
NOISE_KERNEL = np.array([[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]])
MAD_TO_STD = 0.6745


@dataclass(frozen=True)
class Well:
    center: tuple
    depth: float
    width: float

    def __post_init__(self):
        if self.depth < 0 or self.width <= 0:
            raise ValueError("Well depth must be >= 0 and width > 0")


@dataclass(frozen=True)
class NoiseField:
    sigma_base: float
    wells: tuple = ()
    sigma_floor: float = 1e-3

    def __post_init__(self):
        if self.sigma_floor <= 0:
            raise ValueError("NoiseField.sigma_floor must be > 0")
        if self.wells and sum(w.depth for w in self.wells) >= self.sigma_base - self.sigma_floor:
            raise ValueError("NoiseField wells: depth sum must stay below sigma_base - sigma_floor")


@dataclass(frozen=True)
class NoiseTarget:
    sigma_reduced: float = 0.01

    def __post_init__(self):
        if not self.sigma_reduced > 0:
            raise ValueError("NoiseTarget.sigma_reduced must be > 0")


def field_sigma(fld: NoiseField, p) -> np.ndarray | float:
    """Single-image noise std at camera position(s) ``p``."""
    pts = np.asarray(p, dtype=float)
    flat = np.atleast_2d(pts)
    sigma = np.full(len(flat), float(fld.sigma_base))
    for w in fld.wells:
        r2 = np.sum((flat - np.asarray(w.center, dtype=float)) ** 2, axis=1)
        sigma -= w.depth * np.exp(-r2 / (2 * w.width**2))
    sigma = np.maximum(sigma, fld.sigma_floor)
    return float(sigma[0]) if pts.ndim == 1 else sigma


def synthetic_scene(size: int, seed, n_rects: int = 6, low: float = 0.35, high: float = 0.65,
                    rect_px: tuple = (None, None)) -> np.ndarray:
    """Smooth gradient with sharp-edged rectangles, kept inside [low, high].

    ``rect_px`` bounds the rectangle side lengths in pixels; by default they span
    size/8 to size/3.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    angle = rng.uniform(0, 2 * np.pi)
    img = 0.5 + 0.06 * (np.cos(angle) * (xx - 0.5) + np.sin(angle) * (yy - 0.5))
    lo_px = rect_px[0] or max(2, size // 8)
    hi_px = rect_px[1] or max(lo_px + 1, size // 3)
    for _ in range(n_rects):
        w, h = rng.integers(lo_px, hi_px + 1, size=2)
        x0, y0 = rng.integers(0, size - min(w, size) + 1), rng.integers(0, size - min(h, size) + 1)
        img[y0:y0 + h, x0:x0 + w] += rng.choice([-1.0, 1.0]) * rng.uniform(0.04, 0.1)
    return np.clip(img, low, high)


def synth_image(fld: NoiseField, p, ground_truth: np.ndarray, seed) -> np.ndarray:
    """One noisy shot taken from camera position ``p``."""
    sigma = field_sigma(fld, np.asarray(p, dtype=float))
    rng = np.random.default_rng(seed)
    noisy = ground_truth + sigma * rng.standard_normal(ground_truth.shape)
    return np.clip(noisy, 0.0, 1.0)


def noisy_frames(ground_truth: np.ndarray, sigma: float, count: int, rng: np.random.Generator):
    """Yield ``count`` clamped noisy copies of ``ground_truth`` (float32 draws)."""
    truth = ground_truth.astype(np.float32)
    for _ in range(count):
        frame = rng.standard_normal(truth.shape, dtype=np.float32)
        frame *= np.float32(sigma)
        frame += truth
        np.clip(frame, 0.0, 1.0, out=frame)
        yield frame


def running_average(frames) -> np.ndarray:
    """Pixelwise mean of an iterable of frames without holding them all in memory."""
    total, n = None, 0
    for f in frames:
        if total is None:
            total = np.zeros(f.shape, dtype=np.float64)
        elif f.shape != total.shape:
            raise DimensionMismatch(f"frame {n} has shape {f.shape}, expected {total.shape}")
        total += f
        n += 1
    if n == 0:
        raise EmptyList("no frames to average")
    return total / n


def average_images(frames) -> np.ndarray:
    if len(frames) == 0:
        raise EmptyList("no frames to average")
    shape = np.shape(frames[0])
    for i, f in enumerate(frames):
        if np.shape(f) != shape:
            raise DimensionMismatch(f"frame {i} has shape {np.shape(f)}, expected {shape}")
    return np.mean(np.asarray(frames, dtype=float), axis=0)


def estimate_sigma(frame: np.ndarray) -> float:
    """Noise std from the robust spread of a second-difference filter response."""
    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 2 or min(frame.shape) < 3:
        raise FrameTooSmall(f"frame {frame.shape} is smaller than 3x3")
    resp = ndimage.correlate(frame, NOISE_KERNEL, mode="nearest")[1:-1, 1:-1]
    return float(np.median(np.abs(resp)) / (MAD_TO_STD * 6.0))


def picture_count(sigma_a: float, target: NoiseTarget) -> int:
    """Whole number of shots whose average brings sigma_a down to the target."""
    if sigma_a < 0:
        raise ValueError("sigma_a must be >= 0")
    ratio2 = (sigma_a / target.sigma_reduced) ** 2
    # absorb float noise so that exact multiples do not round up
    return max(1, math.ceil(ratio2 * (1 - 1e-12)))


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    if size < 3 or size % 2 == 0:
        raise BadKernel(f"kernel size must be odd and >= 3, got {size}")
    if not sigma > 0:
        raise BadKernel(f"kernel sigma must be > 0, got {sigma}")
    ax = np.arange(size) - size // 2
    g = np.exp(-(ax**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def gaussian_filter(frame: np.ndarray, size: int = 5, sigma: float = 1.0) -> np.ndarray:
    """Normalized Gaussian convolution with mirror padding at the borders."""
    return ndimage.convolve(np.asarray(frame, dtype=float), gaussian_kernel(size, sigma), mode="mirror")


def radial_power_spectrum(frame: np.ndarray):
    """(bin index, frequency in cycles/pixel, mean power) for radial bins 0..N/2.

    Non-square or non-power-of-two frames are padded with their mean. Power is
    |F|^2 / (number of pixels), so white noise of variance s^2 is flat at s^2.
    """
    frame = np.asarray(frame, dtype=float)
    side = 1 << max(1, (max(frame.shape) - 1).bit_length())
    if frame.shape != (side, side):
        padded = np.full((side, side), frame.mean())
        padded[: frame.shape[0], : frame.shape[1]] = frame
        frame = padded
    power = np.abs(np.fft.fft2(frame)) ** 2 / frame.size
    k = np.fft.fftfreq(side) * side
    radius = np.rint(np.hypot(*np.meshgrid(k, k, indexing="ij"))).astype(int)
    nbins = side // 2 + 1
    mask = radius < nbins
    sums = np.bincount(radius[mask], weights=power[mask], minlength=nbins)
    counts = np.bincount(radius[mask], minlength=nbins)
    bins = np.arange(nbins)
    return bins, bins / side, sums / counts


def snr_sigma(scene: np.ndarray, snr_db: float) -> float:
    """Noise std giving the requested signal-to-noise ratio (power ratio in dB) for ``scene``."""
    return float(np.std(scene) / math.sqrt(10 ** (snr_db / 10)))


def residual_std(ground_truth: np.ndarray, sigma: float, count: int, rng: np.random.Generator) -> float:
    """Std of (average of ``count`` noisy frames - ground truth)."""
    return float(np.std(running_average(noisy_frames(ground_truth, sigma, count, rng)) - ground_truth))
