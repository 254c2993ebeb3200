"""Simulators for the mean-reverting null and its non-Markov alternatives.

The null is an Ornstein-Uhlenbeck diffusion sampled every ``delta`` time
units (exact Gaussian recursion).  Alternatives replace one ingredient
with a latent factor, which breaks the Markov property of the observed
coordinate except where noted:

* ``h1_stochastic_level`` -- the mean-reversion level is itself a slow OU
  process, mixed in with weight theta;
* ``h2_stochastic_vol``   -- the diffusion coefficient blends a constant
  with the square root of a latent square-root process;
* ``h3_jumps``            -- compound Poisson jumps with intensity theta;
  independent Gaussian jump sizes keep the process Markovian (type i)
  while sizes read from a latent square-root process do not (type ii).

All randomness flows through counter-based streams keyed by
(seed, path_id, coordinate), so paths are reproducible and independent of
scheduling.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from . import _fast

__all__ = ["SimConfig", "ModelSpec", "Path", "simulate", "stream"]

VARIANTS = ("ou_null", "h1_stochastic_level", "h2_stochastic_vol", "h3_jumps")
JUMP_TYPES = ("gaussian_iid", "cir_driven")

# RNG stream coordinates
COORD_INIT = 0
COORD_DIFFUSION = 1
COORD_FACTOR = 2
COORD_JUMP_COUNT = 3
COORD_JUMP_SIZE = 4


def stream(seed: int, path_id: int = 0, coord: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, path_id, coordinate)."""
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=(int(path_id), int(coord)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    """How to discretize and sample one path."""

    n_obs: int
    delta: float = 1.0 / 52.0
    substeps: int = 20
    burn_in: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.n_obs < 12:
            raise ValueError("n_obs must be at least 12")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")


@dataclass(frozen=True)
class ModelSpec:
    """Null/alternative parameterization.

    theta mixes the alternative ingredient in ([0, 1]; 0 recovers the
    null), s_scale separates the latent factor's time scale from the
    observed one, and jump_type picks the h3 jump-size mechanism.
    """

    variant: str = "ou_null"
    kappa: float = 0.2
    alpha: float = 0.085
    sigma: float = 0.08
    theta: float = 0.0
    s_scale: float = 10.0
    jump_type: str = "gaussian_iid"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant: {self.variant!r}")
        if self.kappa <= 0 or self.sigma <= 0:
            raise ValueError("kappa and sigma must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.s_scale <= 0:
            raise ValueError("s_scale must be positive")
        if self.jump_type not in JUMP_TYPES:
            raise ValueError(f"unknown jump_type: {self.jump_type!r}")

    @property
    def stationary_sd(self) -> float:
        return self.sigma / np.sqrt(2.0 * self.kappa)

    @property
    def feller_ok(self) -> bool:
        """Feller condition of the h2 latent square-root factor."""
        kappa2 = self.kappa / self.s_scale
        b = self.s_scale * self.alpha
        sigma2 = self.sigma / 2.0
        return 2.0 * kappa2 * b >= sigma2 ** 2

    def label(self) -> str:
        if self.variant == "ou_null":
            return "ou_null"
        tag = f"{self.variant}:theta={self.theta:g}"
        if self.variant == "h3_jumps":
            return f"{tag},jump={self.jump_type}"
        return f"{tag},s={self.s_scale:g}"


@dataclass(frozen=True)
class Path:
    """A simulated or loaded path of n_obs + 2 observations."""

    values: np.ndarray
    delta: float
    model: str = "unknown"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values",
                           np.ascontiguousarray(self.values, dtype=float))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("path contains non-finite values")

    @property
    def n_obs(self) -> int:
        return self.values.size - 2

    def to_csv(self, target) -> None:
        """Write ``index,time,value`` rows; floats use shortest round-trip."""
        close = False
        if not hasattr(target, "write"):
            target = open(target, "w", newline="")
            close = True
        try:
            target.write("index,time,value\n")
            for i, v in enumerate(self.values):
                target.write(f"{i},{repr(i * self.delta)},{repr(float(v))}\n")
        finally:
            if close:
                target.close()

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, source, model: str = "loaded", seed: int = 0) -> "Path":
        data = np.loadtxt(source, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 3:
            raise ValueError("expected columns index,time,value")
        times = data[:, 1]
        if data.shape[0] < 2:
            raise ValueError("path too short")
        delta = float(times[1] - times[0])
        if delta <= 0:
            raise ValueError("time column must be increasing")
        return cls(values=data[:, 2], delta=delta, model=model, seed=seed)


def _totals(c: SimConfig) -> tuple[int, int]:
    total_obs = c.burn_in + c.n_obs + 2
    return total_obs, (total_obs - 1) * c.substeps


def simulate_ou_exact(m: ModelSpec, c: SimConfig, path_id: int = 0) -> Path:
    """Exact Gaussian recursion of the null, started at stationarity."""
    if m.variant != "ou_null":
        raise ValueError("simulate_ou_exact requires the ou_null variant")
    total_obs, _ = _totals(c)
    rho = np.exp(-m.kappa * c.delta)
    eta = m.sigma * np.sqrt((1.0 - rho * rho) / (2.0 * m.kappa))
    x0 = m.alpha + m.stationary_sd * stream(c.seed, path_id, COORD_INIT).standard_normal()
    eps = stream(c.seed, path_id, COORD_DIFFUSION).standard_normal(total_obs - 1)
    values = _fast.ar1_recursion(x0, m.alpha * (1.0 - rho), rho, eta * eps)
    return Path(values[c.burn_in:], c.delta, m.label(), c.seed)


def simulate_h1(m: ModelSpec, c: SimConfig, path_id: int = 0) -> Path:
    """Stochastic mean-reversion level mixed in with weight theta."""
    total_obs, n_steps = _totals(c)
    dt = c.delta / c.substeps
    kappa1 = m.kappa / m.s_scale
    a_bar = m.s_scale * m.alpha
    sigma1 = m.sigma / 2.0
    eps_x = stream(c.seed, path_id, COORD_DIFFUSION).standard_normal(n_steps)
    eps_a = stream(c.seed, path_id, COORD_FACTOR).standard_normal(n_steps)
    level_path = _fast.euler_ou(a_bar, kappa1, a_bar, sigma1, dt, eps_a)
    level = m.theta * level_path[:-1] + (1.0 - m.theta) * m.alpha
    x = _fast.euler_mean_reverting(m.alpha, m.kappa, level, dt,
                                   m.sigma * np.sqrt(dt) * eps_x)
    values = x[::c.substeps][:total_obs]
    return Path(values[c.burn_in:], c.delta, m.label(), c.seed)


def simulate_h2(m: ModelSpec, c: SimConfig, path_id: int = 0) -> Path:
    """Stochastic volatility: diffusion blends sigma with a latent sqrt factor."""
    total_obs, n_steps = _totals(c)
    dt = c.delta / c.substeps
    kappa2 = m.kappa / m.s_scale
    b = m.s_scale * m.alpha
    sigma2 = m.sigma / 2.0
    eps_x = stream(c.seed, path_id, COORD_DIFFUSION).standard_normal(n_steps)
    eps_v = stream(c.seed, path_id, COORD_FACTOR).standard_normal(n_steps)
    v = _fast.euler_cir_full_truncation(b, kappa2, b, sigma2, dt, eps_v)
    vol = np.sqrt(v[:-1])
    x = _fast.euler_ou_stochvol(m.alpha, m.kappa, m.alpha, m.theta, m.sigma,
                                vol, dt, eps_x)
    values = x[::c.substeps][:total_obs]
    return Path(values[c.burn_in:], c.delta, m.label(), c.seed)


def simulate_h3(m: ModelSpec, c: SimConfig, path_id: int = 0) -> Path:
    """Compound Poisson jumps with intensity theta.

    Type ``gaussian_iid`` draws each jump size fresh (Markovian); type
    ``cir_driven`` adds the current value of a latent square-root process.
    """
    total_obs, n_steps = _totals(c)
    dt = c.delta / c.substeps
    eps_x = stream(c.seed, path_id, COORD_DIFFUSION).standard_normal(n_steps)
    counts = stream(c.seed, path_id, COORD_JUMP_COUNT).poisson(m.theta * dt, n_steps)
    jump_add = np.zeros(n_steps)
    if m.jump_type == "gaussian_iid":
        total_arrivals = int(counts.sum())
        if total_arrivals:
            sigma1 = m.sigma / 2.0
            sizes = sigma1 * stream(c.seed, path_id, COORD_JUMP_SIZE).standard_normal(total_arrivals)
            steps = np.repeat(np.arange(n_steps), counts)
            np.add.at(jump_add, steps, sizes)
    else:
        eps_j = stream(c.seed, path_id, COORD_JUMP_SIZE).standard_normal(n_steps)
        j_path = _fast.euler_cir_full_truncation(
            m.alpha, m.kappa, m.alpha, m.sigma / 2.0, dt, eps_j)
        jump_add = counts * j_path[:-1]
    x = _fast.euler_ou_jumps(m.alpha, m.kappa, m.alpha, m.sigma, dt,
                             eps_x, jump_add)
    values = x[::c.substeps][:total_obs]
    return Path(values[c.burn_in:], c.delta, m.label(), c.seed)


_SIMULATORS = {
    "ou_null": simulate_ou_exact,
    "h1_stochastic_level": simulate_h1,
    "h2_stochastic_vol": simulate_h2,
    "h3_jumps": simulate_h3,
}


def simulate(m: ModelSpec, c: SimConfig, path_id: int = 0) -> Path:
    """Simulate one path of the configured model."""
    return _SIMULATORS[m.variant](m, c, path_id)


def with_seed(c: SimConfig, seed: int) -> SimConfig:
    return replace(c, seed=seed)
