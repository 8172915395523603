"""Consumer-side domain types and the room-temperature dynamics.

Room temperature follows the scalar linear model

    T[n+1] = k_r T[n] + sign * k_c u[n] + k_w w[n] + q[n]

with ``sign = -1`` by default so a nonnegative input cools the room.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .kernels import affine_rollout

FLAT, PP, RP = "flat", "pp", "rp"


class DimensionError(ValueError):
    """Trajectory lengths disagree with the horizon."""


@dataclass(frozen=True)
class TimeGrid:
    n_steps: int = 96
    step_minutes: int = 15
    start_clock_time: int = 0

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")
        if self.step_minutes <= 0:
            raise ValueError("step_minutes must be positive")

    @property
    def horizon_minutes(self) -> int:
        return self.n_steps * self.step_minutes

    def clock_times(self) -> np.ndarray:
        """Minutes since midnight at the start of every step."""
        return (self.start_clock_time + self.step_minutes * np.arange(self.n_steps)) % 1440

    def window(self, start_minute: int, end_minute: int) -> tuple[int, int]:
        """Inclusive 0-based step range covering clock interval [start, end)."""
        t = self.start_clock_time + self.step_minutes * np.arange(self.n_steps)
        idx = np.flatnonzero((t >= start_minute) & (t + self.step_minutes <= end_minute))
        if idx.size == 0:
            raise ValueError(f"no step lies inside [{start_minute}, {end_minute})")
        return int(idx[0]), int(idx[-1])

    def coarsen(self, factor: int) -> TimeGrid:
        if self.n_steps % factor:
            raise ValueError(f"{self.n_steps} steps not divisible by {factor}")
        return TimeGrid(self.n_steps // factor, self.step_minutes * factor, self.start_clock_time)


@dataclass(frozen=True)
class ThermalParams:
    k_r: float
    k_c: float
    k_w: float
    cooling_sign: int = -1

    def __post_init__(self):
        if not 0.0 < self.k_r < 1.0:
            raise ValueError(f"k_r must lie in (0, 1), got {self.k_r}")
        if self.k_c <= 0.0:
            raise ValueError(f"k_c must be positive, got {self.k_c}")
        if not 0.0 <= self.k_w <= 1.0:
            raise ValueError(f"k_w must lie in [0, 1], got {self.k_w}")
        if self.cooling_sign not in (1, -1):
            raise ValueError("cooling_sign must be +1 or -1")

    @property
    def input_gain(self) -> float:
        """Signed temperature change per unit input."""
        return self.cooling_sign * self.k_c


# Reference rooms: thermal coefficients and average occupancy load.
ROOM_1 = ThermalParams(k_r=0.63, k_c=2.64, k_w=0.10)
ROOM_2 = ThermalParams(k_r=0.43, k_c=1.95, k_w=0.18)
ROOM_TABLE = ((ROOM_1, 6.78), (ROOM_2, 9.44))


def comfort_bounds(T_d: float, flexible: bool) -> tuple[float, float]:
    half = 3.0 if flexible else 2.0
    return T_d - half, T_d + half


def _vec(x, n: int | None = None, name: str = "trajectory") -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


@dataclass(frozen=True, eq=False)
class ConsumerType:
    """The private type of one consumer."""

    thermal: ThermalParams
    w: np.ndarray
    q: np.ndarray
    b: np.ndarray
    gamma: float
    T_d: float
    T_lo: float
    T_hi: float
    u_max: float
    flexible: bool = False

    def __post_init__(self):
        w = _vec(self.w, name="w")
        n = w.shape[0]
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "q", _vec(self.q, n, "q"))
        object.__setattr__(self, "b", _vec(self.b, n, "b"))
        for arr in (self.w, self.q, self.b):
            arr.flags.writeable = False
        if n < 1:
            raise DimensionError("trajectories must be nonempty")
        if np.any(self.b < 0):
            raise ValueError("nondeferrable load b must be nonnegative")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.u_max <= 0:
            raise ValueError("u_max must be positive")
        lo, hi = comfort_bounds(self.T_d, self.flexible)
        if not (np.isclose(self.T_lo, lo) and np.isclose(self.T_hi, hi)):
            raise ValueError(
                f"comfort band ({self.T_lo}, {self.T_hi}) does not match "
                f"{'flexible' if self.flexible else 'inflexible'} band ({lo}, {hi})"
            )

    @classmethod
    def make(cls, thermal, w, q, b, gamma, T_d, u_max, flexible=False) -> ConsumerType:
        lo, hi = comfort_bounds(T_d, flexible)
        return cls(thermal, w, q, b, gamma, T_d, lo, hi, u_max, flexible)

    @property
    def n_steps(self) -> int:
        return self.w.shape[0]

    @property
    def drive(self) -> np.ndarray:
        """Exogenous term k_w w[n] + q[n]."""
        return self.thermal.k_w * self.w + self.q

    def to_dict(self) -> dict:
        return {
            "thermal": asdict(self.thermal),
            "w": self.w.tolist(),
            "q": self.q.tolist(),
            "b": self.b.tolist(),
            "gamma": float(self.gamma),
            "T_d": float(self.T_d),
            "T_lo": float(self.T_lo),
            "T_hi": float(self.T_hi),
            "u_max": float(self.u_max),
            "flexible": bool(self.flexible),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ConsumerType:
        return cls(
            thermal=ThermalParams(**d["thermal"]),
            w=d["w"],
            q=d["q"],
            b=d["b"],
            gamma=float(d["gamma"]),
            T_d=float(d["T_d"]),
            T_lo=float(d["T_lo"]),
            T_hi=float(d["T_hi"]),
            u_max=float(d["u_max"]),
            flexible=bool(d["flexible"]),
        )

    def coarsen(self, factor: int) -> ConsumerType:
        """Exact dynamics on a grid ``factor`` times coarser.

        Inputs are held constant over each coarse step.  The coarse outside
        temperature is the decay-weighted mean of the fine one, so the coarse
        model reproduces every ``factor``-th fine temperature exactly.
        """
        n = self.n_steps
        if n % factor:
            raise DimensionError(f"horizon {n} not divisible by {factor}")
        th = self.thermal
        decay = th.k_r ** np.arange(factor - 1, -1, -1)  # weight of sub-step j
        s = decay.sum()
        w = self.w.reshape(-1, factor) @ decay / s
        q = self.q.reshape(-1, factor) @ decay
        b = self.b.reshape(-1, factor).mean(axis=1)
        coarse = ThermalParams(th.k_r**factor, th.k_c * s, min(th.k_w * s, 1.0), th.cooling_sign)
        if th.k_w * s > 1.0:
            # keep k_w within its invariant; fold the excess into q
            q = q + (th.k_w * s - 1.0) * w
        return ConsumerType(coarse, w, q, b, self.gamma, self.T_d, self.T_lo, self.T_hi,
                            self.u_max, self.flexible)


@dataclass(frozen=True, eq=False)
class PriceSignal:
    c: np.ndarray
    kind: str = FLAT
    peak_window: tuple[int, int] | None = None

    def __post_init__(self):
        c = _vec(self.c, name="c")
        c.flags.writeable = False
        object.__setattr__(self, "c", c)
        if self.kind not in (FLAT, PP, RP):
            raise ValueError(f"unknown tariff kind {self.kind!r}")
        if self.peak_window is not None:
            object.__setattr__(self, "peak_window", tuple(int(t) for t in self.peak_window))

    @classmethod
    def flat(cls, price: float, n_steps: int) -> PriceSignal:
        return cls(np.full(n_steps, float(price)), FLAT)

    @classmethod
    def peak(cls, off_peak: float, on_peak: float, n_steps: int, window: tuple[int, int]) -> PriceSignal:
        c = np.full(n_steps, float(off_peak))
        c[window[0] : window[1] + 1] = on_peak
        return cls(c, PP, window)

    def __len__(self):
        return self.c.shape[0]

    def structure_violation(self, rho: float | None = None) -> float:
        """Largest violation of this tariff's structural rules (0 when valid)."""
        c = self.c
        if self.kind == FLAT:
            return float(np.ptp(c))
        if self.kind == PP:
            if self.peak_window is None:
                return np.inf
            t1, t2 = self.peak_window
            inside = np.zeros(c.shape[0], dtype=bool)
            inside[t1 : t2 + 1] = True
            v = np.ptp(c[inside])
            if (~inside).any():
                v = max(v, np.ptp(c[~inside]))
            return float(v)
        v = abs(c[0] - c[-1])
        if rho is not None and c.shape[0] > 1:
            v = max(v, float(np.max(np.abs(np.diff(c)) - rho, initial=0.0)))
        return float(max(v, 0.0))

    def is_valid(self, rho: float | None = None, c_lo: float | None = None,
                 c_hi: float | None = None, tol: float = 0.0) -> bool:
        if self.structure_violation(rho) > tol:
            return False
        if c_lo is not None and self.c.min() < c_lo - tol:
            return False
        if c_hi is not None and self.c.max() > c_hi + tol:
            return False
        return True

    def upsample(self, factor: int) -> PriceSignal:
        window = None
        if self.peak_window is not None:
            window = (self.peak_window[0] * factor, (self.peak_window[1] + 1) * factor - 1)
        return PriceSignal(np.repeat(self.c, factor), self.kind, window)

    def to_dict(self) -> dict:
        return {"c": self.c.tolist(), "kind": self.kind,
                "peak_window": list(self.peak_window) if self.peak_window else None}

    @classmethod
    def from_dict(cls, d: dict) -> PriceSignal:
        return cls(d["c"], d.get("kind", FLAT), d.get("peak_window"))


@dataclass(frozen=True)
class GlobalConstants:
    p: float = 1.0
    rho: float = 1.0
    c_lo: float = 7.0
    c_hi: float = 20.0

    def __post_init__(self):
        if self.p <= 0 or self.rho <= 0:
            raise ValueError("p and rho must be positive")
        if not 0 < self.c_lo < self.c_hi:
            raise ValueError("need 0 < c_lo < c_hi")


def step_temperature(T, u, w, q, params: ThermalParams):
    return params.k_r * T + params.input_gain * u + params.k_w * w + q


def simulate_trajectory(theta: ConsumerType, u, T_init: float | None = None) -> np.ndarray:
    """Temperatures T[0..N-1] with T[0] = T_init; no comfort clamping."""
    n = theta.n_steps
    u = _vec(u, n, "u")
    T0 = theta.T_d if T_init is None else T_init
    drive = theta.thermal.input_gain * u + theta.drive
    return affine_rollout(theta.thermal.k_r, T0, drive[: n - 1])


def total_energy(theta: ConsumerType, u, constants: GlobalConstants) -> float:
    u = _vec(u, theta.n_steps, "u")
    return float(np.sum(theta.b + constants.p * u))


def reachable_band(theta: ConsumerType, T_init: float | None = None, tol: float = 1e-9):
    """Forward interval reachability under the comfort and input bounds.

    Returns ``(lo, hi, first_bad)`` where ``lo[n], hi[n]`` bound the feasible
    temperatures at step n and ``first_bad`` is the first step whose interval
    is empty (``None`` if the horizon is feasible).
    """
    n = theta.n_steps
    th = theta.thermal
    gain = th.input_gain * theta.u_max
    d_lo, d_hi = min(0.0, gain), max(0.0, gain)
    T0 = theta.T_d if T_init is None else T_init
    lo = np.empty(n)
    hi = np.empty(n)
    lo[0] = hi[0] = T0
    if T0 < theta.T_lo - tol or T0 > theta.T_hi + tol:
        return lo, hi, 0
    drive = theta.drive
    for k in range(n - 1):
        a = max(th.k_r * lo[k] + d_lo + drive[k], theta.T_lo)
        b = min(th.k_r * hi[k] + d_hi + drive[k], theta.T_hi)
        if a > b + tol:
            lo[k + 1], hi[k + 1] = a, b
            return lo[: k + 2], hi[: k + 2], k + 1
        lo[k + 1], hi[k + 1] = a, max(a, b)
    return lo, hi, None
