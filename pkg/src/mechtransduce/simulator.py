"""Time-domain Langevin integration of the pumped two-resonator system."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import expm

from . import _kernels
from .errors import DomainError, IntegrationDiverged
from .model import CoupledSystem, Resonator

UNIT_TAGS = ("displacement", "force", "demodulated-amplitude")
_CHUNK = 1 << 18
_DIVERGENCE_FACTOR = 1e6

TARGET_STREAM, DETECTOR_STREAM, INITIAL_STREAM = 0, 1, 2


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled record. ``t0`` is the time of the first sample."""

    dt: float
    values: np.ndarray
    unit_tag: str = "displacement"
    rng_seed: Optional[int] = None
    t0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not self.dt > 0:
            raise DomainError("dt", "must be positive")
        if values.ndim != 1 or values.size < 2:
            raise DomainError("values", "need a 1-d series with at least 2 samples")
        if not np.all(np.isfinite(values)):
            raise DomainError("values", "contains non-finite samples")
        if self.unit_tag not in UNIT_TAGS:
            raise DomainError("unit_tag", f"unknown unit tag {self.unit_tag!r}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    @property
    def duration(self) -> float:
        return self.values.size * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    def after(self, t_start: float) -> "TimeSeries":
        """Drop samples earlier than ``t_start``."""
        i = max(0, int(math.ceil((t_start - self.t0) / self.dt - 1e-9)))
        return TimeSeries(self.dt, self.values[i:], self.unit_tag, self.rng_seed,
                          self.t0 + i * self.dt)

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(f"# dt={self.dt!r} seed={self.rng_seed} unit={self.unit_tag} t0={self.t0!r}\n")
            w = csv.writer(fh)
            w.writerow(["time_s", "value"])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with Path(path).open() as fh:
            header = fh.readline().lstrip("# ").split()
            meta = dict(item.split("=", 1) for item in header)
            data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
        seed = None if meta["seed"] == "None" else int(meta["seed"])
        return cls(float(meta["dt"]), data[:, 1], meta["unit"], seed, float(meta["t0"]))


@dataclass(frozen=True)
class SimulationConfig:
    """Integration settings.

    ``record_every`` decimates the stored trajectory (the integrator still runs
    at ``dt``). ``method`` is ``"etd"`` (exact free propagation with a
    predictor-corrector for coupling and drive) or ``"heun"``.
    """

    dt: float
    duration: float
    rng_seed: int = 0
    record_both: bool = True
    record_every: int = 1
    thermal_noise: bool = True
    method: str = "etd"
    initial_state: str = "thermal"

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("dt", "must be positive")
        if not self.duration >= 2 * self.dt:
            raise DomainError("duration", "must cover at least two steps")
        if self.record_every < 1:
            raise DomainError("record_every", "must be >= 1")
        if self.method not in ("etd", "heun"):
            raise DomainError("method", f"unknown integrator {self.method!r}")
        if self.initial_state not in ("thermal", "rest"):
            raise DomainError("initial_state", f"unknown initial state {self.initial_state!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def default_dt(sys: CoupledSystem, samples_per_period: int = 100) -> float:
    return 2 * math.pi / (samples_per_period * sys.detector.natural_frequency)


def settle_time(sys: CoupledSystem, decay_times: float = 5.0) -> float:
    """Transient to discard: ``decay_times`` multiples of Q_t / f_t."""
    return decay_times * sys.target.quality_factor / sys.target.frequency_hz


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one noise stream of a master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def thermal_force_sequence(r: Resonator, dt: float, n: int, seed: int,
                           stream: int = TARGET_STREAM) -> TimeSeries:
    """Piecewise-constant thermal force samples with std sqrt(S_F / dt)."""
    if n < 2:
        raise DomainError("n", "a force record needs at least 2 samples")
    if not dt > 0:
        raise DomainError("dt", "must be positive")
    values = stream_rng(seed, stream).standard_normal(n) * math.sqrt(r.thermal_force_density / dt)
    return TimeSeries(dt, values, "force", seed)


def _propagators(r: Resonator, dt: float):
    """Exact free step ``phi`` and zero/first-order-hold force responses."""
    w0, g, m = r.natural_frequency, r.energy_decay_rate, r.effective_mass
    M = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-w0 * w0, -g, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
    E = expm(M * dt)
    phi = np.ascontiguousarray(E[:2, :2])
    g0 = np.ascontiguousarray(E[:2, 2]) / m
    g1 = np.ascontiguousarray(E[:2, 3]) / (dt * m)
    return phi, g0, g1


def _check_dt(sys: CoupledSystem, dt: float):
    limit = 2 * math.pi / (50 * sys.detector.natural_frequency)
    if dt > limit * (1 + 1e-12):
        raise DomainError("dt", f"{dt:.3e} s exceeds {limit:.3e} s (50 samples per detector period)")


def simulate(sys: CoupledSystem, cfg: SimulationConfig) -> Tuple[Optional[TimeSeries], TimeSeries]:
    """Integrate both modes and return the recorded ``(x_t, x_d)`` trajectories.

    Raises
    ------
    IntegrationDiverged
        If a displacement exceeds 1e6 times its thermal rms.
    """
    _check_dt(sys, cfg.dt)
    tgt, det = sys.target, sys.detector
    dt, n_steps, stride = cfg.dt, cfg.n_steps, cfg.record_every

    pump = sys.pump
    eta = sys.coupling_strength
    w_pu = pump.pump_frequency if pump is not None else 0.0
    self_terms = 1.0 if (pump is None or pump.include_nonresonant_terms) else 0.0
    f_dr = sys.drive.force_amplitude if sys.drive is not None else 0.0
    w_dr = sys.drive.drive_frequency if sys.drive is not None else 0.0

    sd_t = math.sqrt(tgt.thermal_variance)
    sd_d = math.sqrt(det.thermal_variance)
    y = np.zeros(4)
    if cfg.initial_state == "thermal":
        init = stream_rng(cfg.rng_seed, INITIAL_STREAM).standard_normal(4)
        y[:] = init * [sd_t, sd_t * tgt.natural_frequency, sd_d, sd_d * det.natural_frequency]

    # amplitude scale for divergence detection includes the coherent response
    scale_t = sd_t + f_dr * tgt.quality_factor / tgt.spring_constant
    limit_t = _DIVERGENCE_FACTOR * scale_t
    limit_d = _DIVERGENCE_FACTOR * (sd_d + scale_t)

    n_out = n_steps // stride + 1
    out_t = np.empty(n_out)
    out_d = np.empty(n_out)
    out_t[0], out_d[0] = y[0], y[2]

    rng_t = stream_rng(cfg.rng_seed, TARGET_STREAM)
    rng_d = stream_rng(cfg.rng_seed, DETECTOR_STREAM)
    s_t = math.sqrt(tgt.thermal_force_density / dt) if cfg.thermal_noise else 0.0
    s_d = math.sqrt(det.thermal_force_density / dt) if cfg.thermal_noise else 0.0

    if cfg.method == "etd":
        phi_t, g0_t, g1_t = _propagators(tgt, dt)
        phi_d, g0_d, g1_d = _propagators(det, dt)
    else:
        p = np.array([
            tgt.natural_frequency**2, tgt.energy_decay_rate, 1 / tgt.effective_mass,
            det.natural_frequency**2, det.energy_decay_rate, 1 / det.effective_mass,
        ])

    zeros = np.zeros(min(_CHUNK, n_steps))
    step = 0
    while step < n_steps:
        n = min(_CHUNK, n_steps - step)
        if cfg.thermal_noise:
            xi_t = rng_t.standard_normal(n)
            xi_t *= s_t
            xi_d = rng_d.standard_normal(n)
            xi_d *= s_d
        else:
            xi_t = xi_d = zeros[:n]
        if cfg.method == "etd":
            bad = _kernels.etd_chunk(
                y, step, n, dt, phi_t, g0_t, g1_t, phi_d, g0_d, g1_d,
                eta, w_pu, self_terms, f_dr, w_dr, xi_t, xi_d,
                stride, out_t, out_d, limit_t, limit_d,
            )
        else:
            bad = _kernels.heun_chunk(
                y, step, n, dt, p, eta, w_pu, self_terms, f_dr, w_dr, xi_t, xi_d,
                stride, out_t, out_d, limit_t, limit_d,
            )
        if bad >= 0:
            raise IntegrationDiverged(int(bad), float(max(abs(y[0]), abs(y[2]))))
        step += n

    rec_dt = dt * stride
    x_d = TimeSeries(rec_dt, out_d, "displacement", cfg.rng_seed)
    x_t = TimeSeries(rec_dt, out_t, "displacement", cfg.rng_seed) if cfg.record_both else None
    return x_t, x_d
