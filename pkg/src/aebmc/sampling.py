"""Counter-based parameter sampling.

Every normal deviate is a pure function of ``(seed, stream_index)``, so a
batch is identical no matter how, in what order, or by how many workers it
is generated, and a batch of ``n`` is a prefix of any larger batch.

Generator (all arithmetic modulo 2**64)::

    mix(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
             z = (z ^ (z >> 27)) * 0x94D049BB133111EB
             return z ^ (z >> 31)

    key      = mix(seed + 0x9E3779B97F4A7C15)
    word(c)  = mix(key + (c + 1) * 0x9E3779B97F4A7C15)
    u(c)     = ((word(c) >> 11) + 0.5) * 2**-53          # in (0, 1)
    z(j)     = sqrt(-2 ln u(2j)) * cos(2 pi u(2j + 1))   # Box-Muller

Sample ``i`` takes stream indices ``5i .. 5i+4`` in the order
v0, mu, theta, mass, c_d. When the optional actuator-lag spread is enabled,
tau for sample ``i`` uses stream index ``i`` under the key derived from
``seed ^ TAU_SEED_XOR``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .dynamics import ScenarioSample

__all__ = [
    "PARAMETER_ORDER",
    "UncertaintyModel",
    "SampleBatch",
    "standard_normal_at",
    "draw_batch",
]

PARAMETER_ORDER = ("v0", "mu", "theta", "mass", "c_d")
TAU_SEED_XOR = 0x7A0F_7A0F_7A0F_7A0F

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_TWO_POW_M53 = 2.0 ** -53
_TWO_PI = 2.0 * math.pi

# lower bounds for non-physical tail draws
CLAMP_FLOORS = {"v0": 0.1, "mu": 0.05, "mass": 500.0, "c_d": 0.0}


@njit(cache=True, nogil=True, error_model="numpy")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True, error_model="numpy")
def _key(seed):
    return _mix64(seed + _GOLDEN)


@njit(cache=True, nogil=True, error_model="numpy")
def _uniform(key, counter):
    w = _mix64(key + (counter + _ONE) * _GOLDEN)
    return (np.float64(w >> _S11) + 0.5) * _TWO_POW_M53


@njit(cache=True, nogil=True, error_model="numpy")
def _normal(key, j):
    c = _TWO * j
    u1 = _uniform(key, c)
    u2 = _uniform(key, c + _ONE)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


@njit(cache=True, nogil=True, error_model="numpy")
def _fill_normals(key, start, stride, offset, out):
    # out[i] = z(start + stride*i + offset)
    for i in range(out.size):
        j = np.uint64(start + stride * i + offset)
        out[i] = _normal(key, j)


def _as_u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) % (1 << 64))


def _seed_key(seed: int, xor: int = 0) -> np.uint64:
    # numba hands uint64 back as a Python int; re-wrap so it is not retyped as int64
    return np.uint64(_key(np.uint64(_as_u64(seed) ^ np.uint64(xor))))


def standard_normal_at(seed: int, stream_index: int) -> float:
    """Standard normal deviate at position ``stream_index`` of the stream keyed by ``seed``."""
    if stream_index < 0:
        raise ValueError(f"stream_index must be >= 0, got {stream_index}")
    return float(_normal(_seed_key(seed), np.uint64(stream_index)))


@dataclass(frozen=True)
class UncertaintyModel:
    """Independent normal distributions for the sampled parameters, plus the seed.

    Defaults are the nominal operating point with moderate spread:
    v0 ~ N(30, 2^2) m/s, mu ~ N(0.8, 0.1^2), theta ~ N(0, 0.05^2) rad,
    mass ~ N(1500, 100^2) kg, c_d ~ N(0.3, 0.05^2).
    """

    v0_mean: float = 30.0
    v0_sd: float = 2.0
    mu_mean: float = 0.8
    mu_sd: float = 0.1
    theta_mean: float = 0.0
    theta_sd: float = 0.05
    mass_mean: float = 1500.0
    mass_sd: float = 100.0
    c_d_mean: float = 0.3
    c_d_sd: float = 0.05
    # actuator-lag spread; 0 keeps tau at its nominal value
    tau_sd: float = 0.0
    seed: int = 42

    def __post_init__(self):
        for name in ("v0", "mu", "theta", "mass", "c_d", "tau"):
            sd = getattr(self, f"{name}_sd")
            if not sd >= 0:
                raise ValueError(f"{name}_sd must be >= 0, got {sd}")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ValueError(f"seed must be an integer, got {self.seed!r}")

    def deterministic(self) -> "UncertaintyModel":
        """Same means with every spread set to zero."""
        return UncertaintyModel(
            v0_mean=self.v0_mean, v0_sd=0.0, mu_mean=self.mu_mean, mu_sd=0.0,
            theta_mean=self.theta_mean, theta_sd=0.0, mass_mean=self.mass_mean, mass_sd=0.0,
            c_d_mean=self.c_d_mean, c_d_sd=0.0, tau_sd=0.0, seed=self.seed,
        )


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Column-oriented batch of parameter draws; row ``i`` is sample ``i``."""

    v0: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    mass: np.ndarray
    c_d: np.ndarray
    tau: np.ndarray
    seed: int = 0
    clamp_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.v0.size
        for name in (*PARAMETER_ORDER, "tau"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"column {name} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.v0.size)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> ScenarioSample:
        return ScenarioSample(
            v0=float(self.v0[i]), mu=float(self.mu[i]), theta=float(self.theta[i]),
            mass=float(self.mass[i]), c_d=float(self.c_d[i]),
        )

    @property
    def clamped(self) -> int:
        return int(sum(self.clamp_counts.values()))

    def prefix(self, n: int) -> "SampleBatch":
        if not 1 <= n <= self.n:
            raise ValueError(f"prefix length must be in [1, {self.n}], got {n}")
        cols = {name: np.array(getattr(self, name)[:n]) for name in (*PARAMETER_ORDER, "tau")}
        return SampleBatch(**cols, seed=self.seed, clamp_counts=_count_clamps(cols))

    def columns(self) -> tuple[np.ndarray, ...]:
        return (self.v0, self.mu, self.theta, self.mass, self.c_d, self.tau)

    def to_csv(self, path) -> None:
        """Write ``index,v0,mu,theta,m,c_d`` rows with round-trip float formatting."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "v0", "mu", "theta", "m", "c_d"])
            for i in range(self.n):
                w.writerow([i] + [format(float(getattr(self, p)[i]), ".17g") for p in PARAMETER_ORDER])


def _count_clamps(cols) -> dict:
    # raw draws are not retained, so count values sitting exactly on a floor
    return {p: int(np.count_nonzero(cols[p] <= lo)) for p, lo in CLAMP_FLOORS.items()}


def draw_batch(model: UncertaintyModel, n: int, tau_nominal: float = 0.15) -> SampleBatch:
    """Draw ``n`` parameter vectors from ``model``.

    Draws are scaled as ``mean + sd * z`` and then floored at the values in
    ``CLAMP_FLOORS`` (reached only by >= 8 sigma tails at default spreads);
    floor hits are counted in ``clamp_counts``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    key = _seed_key(model.seed)
    n_params = len(PARAMETER_ORDER)
    cols = {}
    clamp_counts = {}
    z = np.empty(n)
    for p, name in enumerate(PARAMETER_ORDER):
        _fill_normals(key, 0, n_params, p, z)
        col = getattr(model, f"{name}_mean") + getattr(model, f"{name}_sd") * z
        if name in CLAMP_FLOORS:
            lo = CLAMP_FLOORS[name]
            clamp_counts[name] = int(np.count_nonzero(col < lo))
            col = np.maximum(col, lo)
        cols[name] = col
    if model.tau_sd > 0:
        tau_key = _seed_key(model.seed, TAU_SEED_XOR)
        _fill_normals(tau_key, 0, 1, 0, z)
        tau = tau_nominal + model.tau_sd * z
        clamp_counts["tau"] = int(np.count_nonzero(tau < 1e-3))
        cols["tau"] = np.maximum(tau, 1e-3)
    else:
        cols["tau"] = np.full(n, float(tau_nominal))
    return SampleBatch(**cols, seed=int(model.seed), clamp_counts=clamp_counts)


def read_batch_csv(path, tau_nominal: float = 0.15) -> SampleBatch:
    """Inverse of :meth:`SampleBatch.to_csv`."""
    rows = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    cols = {name: np.ascontiguousarray(rows[:, k + 1]) for k, name in enumerate(PARAMETER_ORDER)}
    cols["tau"] = np.full(rows.shape[0], float(tau_nominal))
    return SampleBatch(**cols)
