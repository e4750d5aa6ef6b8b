"""Sequential quantization with shared uncertainty tracking.

Sensor and estimator co-track the set in which the sampled state is known to
lie (an interval for scalar plants, an axis-aligned box in transformed
coordinates for vector plants). Each round the sensor bins the set uniformly,
sends the bin index, and both sides either refine the set (delivery) or keep
it (loss), then propagate it one sampling period forward. Acknowledgments
keep the two copies identical.

The transmission outcome is represented as the received bin index (or tuple
of per-dimension indices), with None for a lost message.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import (
    ScalarPlant,
    VectorPlant,
    float_power,
    jordan_decompose,
    noise_column_sum,
    propagate_interval,
)


class OutOfRangeError(ValueError):
    """Sensor-side value fell outside the tracked uncertainty set.

    The scheme guarantees containment, so this signals a broken invariant
    upstream (mismatched acks or wrong propagation), not a recoverable event.
    """


@dataclass(frozen=True)
class Interval:
    """Closed interval tracked by sensor and estimator in the scalar scheme."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box tracked per dimension in the vector scheme."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float)
        hi = np.array(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("box has lo > hi in some dimension")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class BitAllocation:
    """Bits spent per dimension of a vector message; total is their sum."""

    r_i: tuple[int, ...]

    def __post_init__(self):
        if len(self.r_i) == 0:
            raise ValueError("allocation must cover at least one dimension")
        if any(r < 1 for r in self.r_i):
            raise ValueError(f"each dimension needs >= 1 bit, got {self.r_i}")
        object.__setattr__(self, "r_i", tuple(int(r) for r in self.r_i))

    @property
    def total(self) -> int:
        return sum(self.r_i)

    @classmethod
    def equal_split(cls, total: int, dim: int) -> "BitAllocation":
        """Split `total` bits evenly, remainder going to earlier dimensions."""
        if total < dim:
            raise ValueError(f"cannot give {dim} dimensions >= 1 bit from {total}")
        base, extra = divmod(total, dim)
        return cls(tuple(base + (1 if i < extra else 0) for i in range(dim)))


def _slack(lo: float, hi: float) -> float:
    # Relative slack: an absolute 1e-12 would be below float resolution for
    # wide intervals and reject legitimate boundary values.
    return 1e-12 * max(1.0, abs(lo), abs(hi), hi - lo)


def quantize(u: Interval, bits: int, x: float) -> int:
    """Uniform bin index of x within u using 2**bits bins.

    Bins are half-open with the top bin closed, so every x in [lo, hi] maps
    to exactly one index. Values outside u (beyond a small relative slack)
    raise OutOfRangeError.
    """
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    eps = _slack(u.lo, u.hi)
    if x < u.lo - eps or x > u.hi + eps:
        raise OutOfRangeError(f"value {x} outside tracked interval [{u.lo}, {u.hi}]")
    levels = 1 << bits
    if u.width == 0.0:
        return 0
    idx = int(np.floor((x - u.lo) / u.width * levels))
    return min(max(idx, 0), levels - 1)


def reconstruct(u: Interval, bits: int, index: int) -> tuple[float, Interval]:
    """Bin midpoint estimate and the refined sub-interval for a received index."""
    levels = 1 << bits
    if not 0 <= index < levels:
        raise ValueError(f"bin index {index} out of range for {bits} bits")
    step = u.width / levels
    lo = u.lo + index * step
    hi = u.hi if index == levels - 1 else lo + step
    sub = Interval(lo, hi)
    return sub.center, sub


def refine(u: Interval, bits: int, outcome: int | None) -> Interval:
    """Post-decision interval: the received bin on delivery, u itself on loss."""
    if outcome is None:
        return u
    return reconstruct(u, bits, outcome)[1]


def estimator_update(
    u: Interval,
    outcome: int | None,
    plant: ScalarPlant,
    bits: int,
    delay: int,
    steps: int | None = None,
) -> tuple[float, Interval]:
    """One estimator round: absorb the outcome, estimate, and roll forward.

    u is the interval both sides held for the sampled state. The estimate of
    the *current* state (delay steps after sampling) propagates the refined
    center through the noiseless dynamics. The returned interval is the one
    to quantize at the next sampling instant, `steps` unit steps later
    (defaults to the plant's sampling period).
    """
    if steps is None:
        steps = plant.t_samp
    refined = refine(u, bits, outcome)
    estimate_now = float_power(plant.a, delay) * refined.center
    nxt = Interval(*propagate_interval(refined.lo, refined.hi, plant, steps))
    return estimate_now, nxt


# ---------------------------------------------------------------------------
# vector scheme
# ---------------------------------------------------------------------------

def initial_box(plant: VectorPlant) -> Box:
    """Initial tracked box in transformed coordinates.

    The initial bounds are stated for the plant state; their image under the
    coordinate change is a parallelotope, so the box returned is its tightest
    axis-aligned enclosure (interval arithmetic on phi @ x0_box).
    """
    phi, _ = jordan_decompose(plant)
    lo_x, hi_x = plant.x0_box[:, 0], plant.x0_box[:, 1]
    pos, neg = np.maximum(phi, 0.0), np.minimum(phi, 0.0)
    return Box(pos @ lo_x + neg @ hi_x, pos @ hi_x + neg @ lo_x)


def vector_sensor_round(z: np.ndarray, u: Box, alloc: BitAllocation) -> tuple[int, ...]:
    """Quantize each transformed coordinate independently with its own bits."""
    z = np.asarray(z, dtype=float)
    if z.shape != (u.dim,) or len(alloc.r_i) != u.dim:
        raise ValueError("state, box, and allocation dimensions disagree")
    return tuple(
        quantize(Interval(u.lo[i], u.hi[i]), alloc.r_i[i], z[i]) for i in range(u.dim)
    )


def refine_box(u: Box, alloc: BitAllocation, outcome: tuple[int, ...] | None) -> Box:
    """Per-dimension refinement of the tracked box (identity on loss)."""
    if outcome is None:
        return u
    if len(outcome) != u.dim:
        raise ValueError("outcome length does not match box dimension")
    lo = np.empty(u.dim)
    hi = np.empty(u.dim)
    for i in range(u.dim):
        _, sub = reconstruct(Interval(u.lo[i], u.hi[i]), alloc.r_i[i], outcome[i])
        lo[i], hi[i] = sub.lo, sub.hi
    return Box(lo, hi)


def propagate_box(v: Box, plant: VectorPlant) -> Box:
    """Roll the tracked box forward one sampling period in transformed coordinates.

    Per dimension, the next bound combines the eigenvalue-scaled extremes of
    the own coordinate, the upper/lower end of the next coordinate when the
    superdiagonal couples them, and the accumulated worst-case disturbance.
    """
    phi, j_mat = jordan_decompose(plant)
    lam = np.diag(j_mat)
    half_noise = 0.5 * noise_column_sum(plant, phi)
    scaled_lo, scaled_hi = lam * v.lo, lam * v.hi
    lo = np.minimum(scaled_lo, scaled_hi) - half_noise
    hi = np.maximum(scaled_lo, scaled_hi) + half_noise
    n = v.dim
    if n > 1:
        sup = j_mat[np.arange(n - 1), np.arange(1, n)]
        lo[:-1] += sup * v.lo[1:]
        hi[:-1] += sup * v.hi[1:]
    return Box(lo, hi)


def vector_estimator_update(
    u: Box,
    outcome: tuple[int, ...] | None,
    plant: VectorPlant,
    alloc: BitAllocation,
    delay: int,
) -> tuple[np.ndarray, Box]:
    """Vector counterpart of estimator_update, in transformed coordinates.

    Returns the current-state estimate (mapped back to plant coordinates and
    propagated `delay` steps) and the box to quantize at the next sample.
    """
    phi, _ = jordan_decompose(plant)
    refined = refine_box(u, alloc, outcome)
    back = np.linalg.solve(phi, refined.center)
    estimate_now = np.linalg.matrix_power(plant.a_mat, delay) @ back
    return estimate_now, propagate_box(refined, plant)
