"""Frequency-momentum analysis of temporal entropy grids.

The structure factor is the discrete double Fourier transform of
(T^2 - 1) over probe sites and cut times,

    F(k, w) = (2 pi / (N T)) dt sum_j e^{-ik(j-N/2)} sum_t e^{-iwt} (T2[j,t]-1),

on the literal finite grids w_n = 2 pi n / T and k_m = 2 pi m / N with no
windowing or padding.  Time grids cover [0, T] inclusive; since
e^{-i w_n T} = 1 for every grid frequency, the endpoint sample folds onto
t=0 and the transform reduces to a plain length-(T/dt) DFT.  The zero
frequency-and-momentum bin is subtracted (set to zero) after the
transform, matching the treatment of the unreliable DC component on
finite series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .replica import EntropyGrid


@dataclass
class SpectralSeries:
    """Amplitudes on uniform frequency (and optionally momentum) grids."""

    omegas: np.ndarray
    amplitudes: np.ndarray          # (n_k, n_w) or (n_w,) complex
    momenta: np.ndarray | None = None
    floor: float = 0.0

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.amplitudes)


def _fold_time_axis(values: np.ndarray, times: np.ndarray,
                    axis: int) -> tuple[np.ndarray, float, float]:
    """Validate a uniform [0, T] grid and fold the t=T sample onto t=0.

    Returns (folded array with T/dt samples, total time T, spacing dt).
    """
    if len(times) < 3:
        raise ValueError("need at least 3 time samples")
    dts = np.diff(times)
    dt = float(dts[0])
    if dt <= 0 or np.max(np.abs(dts - dt)) > 1e-9:
        raise ValueError("time grid must be uniform")
    if abs(times[0]) > 1e-12:
        raise ValueError("time grid must start at 0")
    total = float(times[-1])
    vals = np.moveaxis(values, axis, -1)
    folded = vals[..., :-1].copy()
    folded[..., 0] += vals[..., -1]
    return np.moveaxis(folded, -1, axis), total, dt


def structure_factor(grid: EntropyGrid) -> SpectralSeries:
    """F(k, w) of (T^2 - 1) with the zero bin subtracted.

    Requires a complete rectangular grid with probes on every site of the
    chain and a uniform time grid covering [0, T].
    """
    n = grid.plan.params.N
    if sorted(grid.sites) != list(range(n)):
        missing = sorted(set(range(n)) - set(grid.sites))
        raise ValueError(
            f"structure factor needs probes on all {n} sites; "
            f"missing {missing}")
    if not np.all(grid.valid):
        bad = [(grid.sites[i], grid.times[j])
               for i, j in zip(*np.nonzero(~grid.valid))]
        raise ValueError(f"grid has invalid cells at (site, t): {bad}")
    order = np.argsort(grid.sites)
    x = grid.values[order] - 1.0
    x, total, dt = _fold_time_axis(x, np.asarray(grid.times), axis=1)
    n_t = x.shape[1]
    # sum_j e^{-ik(j - N/2)} sum_t e^{-iwt} x[j, t] with site index j from 0.
    f = np.fft.fft2(x)
    momenta = 2 * np.pi * np.arange(n) / n
    omegas = 2 * np.pi * np.arange(n_t) / total
    f *= np.exp(1j * momenta * (n / 2))[:, None]
    f *= 2 * np.pi / (n * total) * dt
    f[0, 0] = 0.0
    return SpectralSeries(omegas=omegas, amplitudes=f, momenta=momenta)


def lambda_omega(series: np.ndarray, times: np.ndarray) -> SpectralSeries:
    """Frequency response (2 pi / T) dt sum_t e^{-iwt} (T2(t) - 1).

    The w=0 bin is subtracted; magnitudes are exposed via ``.magnitude``.
    """
    x = np.asarray(series, dtype=np.complex128) - 1.0
    x, total, dt = _fold_time_axis(x, np.asarray(times), axis=0)
    f = np.fft.fft(x)
    f *= 2 * np.pi / total * dt
    f[0] = 0.0
    omegas = 2 * np.pi * np.arange(len(x)) / total
    return SpectralSeries(omegas=omegas, amplitudes=f)


def soft_mode_strength(series: SpectralSeries, omega_cut: float) -> float:
    """max |amplitude| over 0 < w <= omega_cut (zero bin excluded)."""
    if series.amplitudes.ndim != 1:
        raise ValueError("soft-mode strength is defined on a 1D series")
    window = (series.omegas > 0) & (series.omegas <= omega_cut + 1e-12)
    if not np.any(window):
        raise ValueError(
            f"no frequency bins in (0, {omega_cut}]; grid spacing "
            f"{series.omegas[1] if len(series.omegas) > 1 else 'n/a'}")
    return float(np.max(np.abs(series.amplitudes[window])))


def default_omega_cut(series: SpectralSeries, n_bins: int = 3) -> float:
    """Upper edge of the first ``n_bins`` nonzero frequency bins."""
    if len(series.omegas) < n_bins + 1:
        raise ValueError("series too short for the requested window")
    return float(series.omegas[n_bins])


def exponential_fit(points: list[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares fit of log(strength) vs h; returns (rate, r_squared).

    Degenerate inputs with zero variance in log strength return
    (0.0, 0.0) rather than dividing by zero.
    """
    if len(points) < 3:
        raise ValueError("exponential fit needs at least 3 points")
    h = np.array([x for x, _ in points], dtype=float)
    s = np.array([y for _, y in points], dtype=float)
    if np.any(s <= 0):
        raise ValueError(
            "non-positive strength; floor or exclude such points first")
    logs = np.log(s)
    slope, intercept = np.polyfit(h, logs, 1)
    pred = slope * h + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    if ss_tot == 0.0:
        return 0.0, 0.0
    return float(slope), 1.0 - ss_res / ss_tot


def trotter_floor(series_dt: np.ndarray, series_half_dt: np.ndarray,
                  times: np.ndarray) -> float:
    """Sensitivity floor of the frequency response from step halving.

    The per-sample Trotter error is estimated by Richardson comparison of
    the same grid computed at dt and dt/2; the floor is its worst-case
    coherent accumulation through the transform,
    (2 pi / T) * delta_t * n_samples * eps.
    """
    if series_half_dt is None:
        raise ValueError(
            "floor estimation needs a companion run at half the Trotter "
            "step; rerun the plan with dt/2")
    a = np.asarray(series_dt)
    b = np.asarray(series_half_dt)
    if a.shape != b.shape:
        raise ValueError("the two series must share the same time grid")
    times = np.asarray(times)
    _, total, delta_t = _fold_time_axis(a.copy().astype(np.complex128),
                                        times, axis=0)
    eps = float(np.max(np.abs(a - b)))
    n_samples = int(round(total / delta_t))
    return 2 * np.pi / total * delta_t * n_samples * eps
