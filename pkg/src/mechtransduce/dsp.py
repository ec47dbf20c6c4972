"""Readout chain: lock-in demodulation, PSD estimation, Lorentzian fits and
equipartition calibration.

Spectra live on an angular-frequency grid and use the normalization
``variance = (1/pi) * sum(density) * d_omega``; for a one-sided per-Hz
density ``P(f)`` this is ``density = P / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal

from .errors import DomainError, FitFailed, InsufficientData
from .model import CONSTANTS
from .simulator import TimeSeries

NORMALIZATION = "equipartition-v1"
LOWPASS_STAGES = 4
# -3 dB point of one single-pole stage relative to the cascade's -3 dB point
_STAGE_FACTOR = 1 / math.sqrt(2 ** (1 / LOWPASS_STAGES) - 1)


@dataclass(frozen=True)
class Spectrum:
    omega: np.ndarray
    density: np.ndarray
    resolution: float
    n_averages: int
    few_averages: bool = False

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        density = np.asarray(self.density, dtype=float)
        if omega.shape != density.shape or omega.ndim != 1:
            raise DomainError("density", "must match the frequency grid")
        if np.any(np.diff(omega) <= 0):
            raise DomainError("omega", "grid must be strictly increasing")
        if np.any(density < 0):
            raise DomainError("density", "must be non-negative")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "density", density)

    @property
    def frequency_hz(self):
        return self.omega / (2 * math.pi)

    def integrated(self) -> float:
        """(1/pi) * sum(density * d_omega): the variance this spectrum carries."""
        return float(np.sum(self.density) * self.resolution / math.pi)

    def window(self, lo: float, hi: float) -> "Spectrum":
        sel = (self.omega >= lo) & (self.omega <= hi)
        return Spectrum(self.omega[sel], self.density[sel], self.resolution, self.n_averages,
                        self.few_averages)

    def scaled(self, factor) -> "Spectrum":
        return Spectrum(self.omega, self.density * factor, self.resolution, self.n_averages,
                        self.few_averages)

    def to_csv(self, path):
        header = (
            f"normalization={NORMALIZATION} resolution_rad_s={float(self.resolution)!r} "
            f"n_averages={self.n_averages}\n"
            "omega_rad_s,frequency_hz,density,sqrt_density"
        )
        data = np.column_stack([self.omega, self.frequency_hz, self.density, np.sqrt(self.density)])
        np.savetxt(path, data, delimiter=",", header=header, comments="# ", fmt="%.10e")

    @classmethod
    def from_csv(cls, path) -> "Spectrum":
        with open(path) as fh:
            first = fh.readline().lstrip("# ").split()
        meta = dict(item.split("=", 1) for item in first)
        if meta.get("normalization") != NORMALIZATION:
            raise DomainError("normalization", f"unsupported convention {meta.get('normalization')!r}")
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls(data[:, 0], data[:, 2], float(meta["resolution_rad_s"]), int(meta["n_averages"]))


def default_segment_length(n_samples: int) -> int:
    """Power of two nearest to n/8, clipped to [256, n]."""
    target = max(n_samples / 8, 256)
    seg = 1 << int(round(math.log2(target)))
    while seg > n_samples:
        seg >>= 1
    return seg


def welch_psd(x: TimeSeries, segment_length: int | None = None, overlap: float = 0.5) -> Spectrum:
    """Hann-windowed Welch estimate, one-sided, in the package normalization."""
    n = len(x)
    if segment_length is None:
        segment_length = default_segment_length(n)
    if not 2 <= segment_length <= n:
        raise DomainError("segment_length", f"must lie in [2, {n}], got {segment_length}")
    if not 0 <= overlap < 1:
        raise DomainError("overlap", "must lie in [0, 1)")
    noverlap = int(overlap * segment_length)
    f, p = signal.welch(
        x.values, fs=1 / x.dt, window="hann", nperseg=segment_length, noverlap=noverlap,
        detrend="constant", scaling="density", return_onesided=True,
    )
    n_avg = 1 + (n - segment_length) // (segment_length - noverlap)
    return Spectrum(2 * math.pi * f, p / 2, 2 * math.pi * (f[1] - f[0]), n_avg, n_avg < 4)


def band_average(s: Spectrum, center: float, half_width: float) -> float:
    """Mean density over ``center +/- half_width`` (rad/s)."""
    sel = np.abs(s.omega - center) <= half_width
    if not np.any(sel):
        raise InsufficientData(f"no spectral bins within {half_width:.3g} rad/s of {center:.6g}")
    return float(np.mean(s.density[sel]))


@dataclass(frozen=True)
class DemodulatedSignal:
    reference_frequency: float
    bandwidth: float
    in_phase: TimeSeries
    quadrature: TimeSeries

    @property
    def amplitude(self) -> TimeSeries:
        a = np.hypot(self.in_phase.values, self.quadrature.values)
        return TimeSeries(self.in_phase.dt, a, "demodulated-amplitude",
                          self.in_phase.rng_seed, self.in_phase.t0)

    @property
    def phase(self) -> np.ndarray:
        return np.arctan2(self.quadrature.values, self.in_phase.values)

    @property
    def settle_time(self) -> float:
        return 10.0 / self.bandwidth

    def settled(self) -> "DemodulatedSignal":
        t = self.in_phase.t0 + self.settle_time
        return DemodulatedSignal(self.reference_frequency, self.bandwidth,
                                 self.in_phase.after(t), self.quadrature.after(t))

    def phasor(self) -> complex:
        """Time-averaged I + iQ over the settled part of the record."""
        s = self.settled()
        return complex(np.mean(s.in_phase.values), np.mean(s.quadrature.values))


def lowpass(values: np.ndarray, dt: float, bandwidth: float) -> np.ndarray:
    """Cascade of identical single-pole stages with overall -3 dB at ``bandwidth`` rad/s.

    Stop-band: |H(10 B)| ~= 2.5e-3 for four stages.
    """
    wc = bandwidth * _STAGE_FACTOR
    alpha = -math.expm1(-wc * dt)
    b, a = [alpha], [1.0, alpha - 1.0]
    y = values
    for _ in range(LOWPASS_STAGES):
        y = signal.lfilter(b, a, y)
    return y


def lockin_demodulate(x: TimeSeries, omega_ref: float, bandwidth: float) -> DemodulatedSignal:
    """Mix with 2cos / -2sin at ``omega_ref`` and low-pass to ``bandwidth`` (rad/s).

    A tone ``A cos(omega_ref t + phi)`` demodulates to I = A cos(phi), Q = A sin(phi).
    """
    if not 0 < bandwidth < omega_ref / 5:
        raise DomainError("bandwidth", f"must lie in (0, omega_ref/5), got {bandwidth!r}")
    if x.duration < 10.0 / bandwidth:
        raise InsufficientData(
            f"record of {x.duration:.3g} s is shorter than the settling time {10.0 / bandwidth:.3g} s"
        )
    phase = omega_ref * x.times
    i = lowpass(2 * x.values * np.cos(phase), x.dt, bandwidth)
    q = lowpass(-2 * x.values * np.sin(phase), x.dt, bandwidth)
    return DemodulatedSignal(
        omega_ref, bandwidth,
        TimeSeries(x.dt, i, "demodulated-amplitude", x.rng_seed, x.t0),
        TimeSeries(x.dt, q, "demodulated-amplitude", x.rng_seed, x.t0),
    )


@dataclass(frozen=True)
class LorentzianFit:
    center: float
    quality: float
    peak_density: float
    baseline: float
    rms_residual: float
    iterations: int = 0

    def model(self, omega):
        return lorentzian(omega, self.center, self.quality, self.peak_density - self.baseline,
                          self.baseline)


def lorentzian(omega, center, quality, height, baseline=0.0):
    """Damped-oscillator line shape scaled to ``height`` above ``baseline`` at ``center``."""
    w = np.asarray(omega, dtype=float)
    shape = (center**2 / quality) ** 2 / ((center**2 - w**2) ** 2 + (center * w / quality) ** 2)
    return height * shape + baseline


def _half_power_width(w, y):
    ip = int(np.argmax(y))
    half = 0.5 * y[ip]
    lo = ip
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = ip
    while hi < y.size - 1 and y[hi] > half:
        hi += 1
    if y[lo] > half or y[hi] > half:
        return None
    return w[hi] - w[lo]


def fit_lorentzian(s: Spectrum, window: tuple[float, float] | None = None,
                   max_iterations: int = 200) -> LorentzianFit:
    """Least-squares fit of ``a / ((w0^2 - w^2)^2 + w0^2 w^2 / Q^2) + baseline``.

    Initial values come from the peak bin and the half-power width. Raises
    :class:`FitFailed` for spectra without a resolvable peak or when the
    solver does not converge.
    """
    if window is not None:
        s = s.window(*window)
    w, y = s.omega, s.density
    if w.size < 5:
        raise FitFailed("fewer than 5 bins in fit window")
    ip = int(np.argmax(y))
    peak, w_peak = y[ip], w[ip]
    floor = float(np.median(y))
    if not peak > 0 or peak < 2 * floor or ip in (0, w.size - 1):
        raise FitFailed("no resolvable peak in window",
                        {"peak": float(peak), "median": floor, "peak_index": ip})
    width = _half_power_width(w, y - min(floor, float(y.min())))
    if width is None or width <= 0:
        raise FitFailed("half-power width not resolved", {"peak_omega": float(w_peak)})
    width = max(width, s.resolution)

    # fit in units of the peak so all parameters are O(1)
    u = w / w_peak
    yn = y / peak
    p0 = np.array([1.0, w_peak / width, 1.0, max(float(np.min(yn)), 0.0)])

    def residuals(p):
        c, q, h, b = p
        return lorentzian(u, c, q, h, b) - yn

    def jacobian(p):
        c, q, h, b = p
        d = (c**2 - u**2) ** 2 + (c * u / q) ** 2
        num = (c**2 / q) ** 2
        shape = num / d
        dnum_dc = 4 * c**3 / q**2
        dd_dc = 4 * c * (c**2 - u**2) + 2 * c * u**2 / q**2
        dshape_dc = (dnum_dc * d - num * dd_dc) / d**2
        dnum_dq = -2 * c**4 / q**3
        dd_dq = -2 * (c * u) ** 2 / q**3
        dshape_dq = (dnum_dq * d - num * dd_dq) / d**2
        return np.column_stack([h * dshape_dc, h * dshape_dq, shape, np.ones_like(u)])

    try:
        res = optimize.least_squares(
            residuals, p0, jac=jacobian, method="trf",
            bounds=([0.5, 1e-3, 0.0, 0.0], [2.0, np.inf, np.inf, np.inf]),
            xtol=1e-10, ftol=1e-12, gtol=1e-12, max_nfev=max_iterations, x_scale="jac",
        )
    except ValueError as exc:
        raise FitFailed(f"least squares rejected the problem: {exc}") from exc
    if res.status <= 0:
        raise FitFailed(f"no convergence after {res.nfev} evaluations: {res.message}",
                        {"nfev": res.nfev, "cost": float(res.cost)})
    c, q, h, b = res.x
    if c * w_peak / q < 0.1 * s.resolution or h <= 0:
        raise FitFailed("quality factor unconstrained", {"Q": float(q), "height": float(h)})
    rms = float(np.sqrt(np.mean(res.fun**2)))
    return LorentzianFit(c * w_peak, q, (h + b) * peak, b * peak, rms, int(res.nfev))


def equipartition_spring_constant(s: Spectrum, T: float) -> float:
    """k = k_B T / <x^2>, with the variance taken from the integrated spectrum."""
    var = s.integrated()
    if not var > 0:
        raise DomainError("spectrum", "integrated density must be positive")
    if not T > 0:
        raise DomainError("temperature", "must be positive")
    return CONSTANTS.boltzmann * T / var
