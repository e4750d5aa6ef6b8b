"""Closed-form stability tests, error bounds, and blocklength selection.

Everything here is a pure function of plant, link, and channel parameters.
Unboundedness is an ordinary result (math.inf), not an exception: the
stability boundary is part of the design space the optimizers search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .coding import (
    BecChannel,
    RateAboveCapacityError,
    min_feasible_blocklength,
    normal_approx_pe,
    std_normal_pdf,
)
from .quantizer import BitAllocation, initial_box
from .system import (
    ScalarPlant,
    VectorPlant,
    float_power,
    geometric_sum,
    induced_l1_norm,
    jordan_decompose,
    noise_column_sum,
)

#: Sentinel for an unbounded steady-state error.
UNBOUNDED = math.inf


class AllUnboundedError(Exception):
    """No blocklength in the searched range keeps the estimation error bounded."""


class NoRootError(ArithmeticError):
    """The heuristic's optimality equation has no root in the search bracket."""


def effective_contraction(p_e: float, bits: int) -> float:
    """Expected per-round width multiplier: p_e + (1 - p_e) / 2**bits."""
    if not 0.0 <= p_e <= 1.0:
        raise ValueError(f"p_e must be in [0, 1], got {p_e}")
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    return p_e + (1.0 - p_e) * 2.0 ** (-bits)


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of the boundedness test.

    Scalar plants carry a single contraction/growth value; vector plants one
    per mode. Estimation error stays bounded exactly when every growth value
    is strictly below 1.
    """

    theta: float | tuple[float, ...]
    growth: float | tuple[float, ...]
    stable: bool

    @property
    def max_growth(self) -> float:
        if isinstance(self.growth, tuple):
            return max(self.growth)
        return self.growth


def stability_check(p_e: float, bits: int, plant: ScalarPlant) -> StabilityReport:
    """Boundedness of the expected error for a scalar plant over the abstract link."""
    theta = effective_contraction(p_e, bits)
    growth = theta * float_power(plant.a, plant.t_samp)
    return StabilityReport(theta=theta, growth=growth, stable=growth < 1.0)


def vector_stability_check(
    p_e: float, alloc: BitAllocation, plant: VectorPlant
) -> StabilityReport:
    """Per-mode boundedness test for a vector plant."""
    _, j_mat = jordan_decompose(plant)
    if len(alloc.r_i) != plant.dim:
        raise ValueError("allocation does not match plant dimension")
    thetas = tuple(effective_contraction(p_e, r) for r in alloc.r_i)
    growths = tuple(
        th * abs(float(lam)) for th, lam in zip(thetas, np.diag(j_mat))
    )
    return StabilityReport(
        theta=thetas, growth=growths, stable=all(g < 1.0 for g in growths)
    )


def single_shot_bound(p_e: float, bits: int, delay: int, plant: ScalarPlant) -> float:
    """Expected-error bound for the very first delivered sample."""
    if delay < 0:
        raise ValueError(f"delay must be >= 0, got {delay}")
    theta = effective_contraction(p_e, bits)
    growth = float_power(plant.a, delay)
    return 0.5 * (
        growth * theta * plant.x0_width
        + geometric_sum(plant.a, delay) * plant.w_max
    )


def steady_state_width(p_e: float, bits: int, plant: ScalarPlant) -> float:
    """Limit of the expected tracked-interval width, or +inf when unstable."""
    theta = effective_contraction(p_e, bits)
    growth = theta * float_power(plant.a, plant.t_samp)
    if growth >= 1.0:
        return UNBOUNDED
    return theta * geometric_sum(plant.a, plant.t_samp) * plant.w_max / (1.0 - growth)


def steady_state_bound(p_e: float, bits: int, delay: int, plant: ScalarPlant) -> float:
    """Steady-state expected-error bound at reception instants, or +inf.

    Combines the limiting expected width with the noiseless propagation over
    the reception delay plus the disturbance accumulated during it. The
    geometric-sum helper makes the marginally stable case (a == 1) exact.
    """
    if not 0 <= delay <= plant.t_samp:
        raise ValueError(
            f"delay must be in [0, t_samp={plant.t_samp}], got {delay}"
        )
    width = steady_state_width(p_e, bits, plant)
    if math.isinf(width):
        return UNBOUNDED
    return 0.5 * (
        float_power(plant.a, delay) * width
        + geometric_sum(plant.a, delay) * plant.w_max
    )


def expected_widths(
    p_e: float,
    bits: int,
    plant: ScalarPlant,
    rounds: int,
    width0: float | None = None,
) -> np.ndarray:
    """Expected post-decision interval width at each round, by direct recursion."""
    if width0 is None:
        width0 = plant.x0_width
    theta = effective_contraction(p_e, bits)
    growth = float_power(plant.a, plant.t_samp)
    pumped = geometric_sum(plant.a, plant.t_samp) * plant.w_max
    out = np.empty(rounds)
    pre = width0
    with np.errstate(invalid="ignore", over="ignore"):
        for k in range(rounds):
            out[k] = theta * pre
            pre = growth * out[k] + pumped
    return out


# ---------------------------------------------------------------------------
# vector bounds
# ---------------------------------------------------------------------------

def _vector_pieces(plant: VectorPlant, alloc: BitAllocation, p_e: float):
    phi, j_mat = jordan_decompose(plant)
    if len(alloc.r_i) != plant.dim:
        raise ValueError("allocation does not match plant dimension")
    thetas = np.array([effective_contraction(p_e, r) for r in alloc.r_i])
    pumped = noise_column_sum(plant, phi)
    return phi, np.abs(j_mat), thetas, pumped


def vector_fixed_point(
    plant: VectorPlant, alloc: BitAllocation, p_e: float
) -> np.ndarray | None:
    """Steady-state expected widths of the tracked box, or None when unstable.

    Solves the linear fixed point of the width recursion directly. The
    per-mode stability gate is checked first; a singular solve past the gate
    is a genuine numerical problem and is raised, not masked.
    """
    phi, j_abs, thetas, pumped = _vector_pieces(plant, alloc, p_e)
    growths = thetas * np.abs(np.diag(j_abs))
    if np.any(growths >= 1.0):
        return None
    contraction = np.diag(thetas)
    system = np.eye(plant.dim) - contraction @ j_abs
    rhs = contraction @ pumped
    try:
        fixed = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(
            "width fixed-point solve is singular despite a passing stability gate"
        ) from exc
    return fixed


def vector_expected_widths(
    p_e: float,
    alloc: BitAllocation,
    plant: VectorPlant,
    rounds: int,
    widths0: np.ndarray | None = None,
) -> np.ndarray:
    """Expected post-decision box widths per round, by direct recursion."""
    phi, j_abs, thetas, pumped = _vector_pieces(plant, alloc, p_e)
    if widths0 is None:
        widths0 = initial_box(plant).widths
    out = np.empty((rounds, plant.dim))
    pre = np.asarray(widths0, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        for k in range(rounds):
            out[k] = thetas * pre
            pre = j_abs @ out[k] + pumped
    return out


def vector_steady_state_bound(
    plant: VectorPlant, alloc: BitAllocation, p_e: float, delay: int
) -> float:
    """Steady-state l1 error bound for the vector scheme, or +inf."""
    if not 0 <= delay <= plant.t_samp:
        raise ValueError(
            f"delay must be in [0, t_samp={plant.t_samp}], got {delay}"
        )
    fixed = vector_fixed_point(plant, alloc, p_e)
    if fixed is None:
        return UNBOUNDED
    phi, _ = jordan_decompose(plant)
    back = np.linalg.matrix_power(plant.a_mat, delay) @ np.linalg.inv(phi)
    total = 0.5 * induced_l1_norm(back) * float(fixed.sum())
    power = np.eye(plant.dim)
    half_w = 0.5 * float(plant.w_max.sum())
    for _ in range(delay):
        total += induced_l1_norm(power) * half_w
        power = power @ plant.a_mat
    return total


# ---------------------------------------------------------------------------
# blocklength co-design
# ---------------------------------------------------------------------------

PeModel = Callable[[int], float]


def resolve_pe_model(pe_model: str | PeModel, channel: BecChannel, bits: int) -> PeModel:
    if callable(pe_model):
        return pe_model
    if pe_model == "normal_approx":
        return lambda n: normal_approx_pe(n, bits, channel)
    raise ValueError(f"unknown pe model {pe_model!r}")


def steady_state_bound_coded(
    n: int,
    bits: int,
    plant: ScalarPlant | VectorPlant,
    channel: BecChannel,
    pe_model: str | PeModel = "normal_approx",
    alloc: BitAllocation | None = None,
) -> float:
    """Steady-state bound when an (n, bits) code sets both latency and reliability.

    The whole codeword occupies the channel, so the delay equals n. The
    failure probability comes from the chosen model (the normal-approximation
    curve by default, or any callable n -> p_e such as a simulated curve).
    """
    if not bits <= n <= plant.t_samp:
        raise ValueError(
            f"need bits <= n <= t_samp, got bits={bits}, n={n}, t_samp={plant.t_samp}"
        )
    p_e = resolve_pe_model(pe_model, channel, bits)(n)
    if isinstance(plant, VectorPlant):
        if alloc is None:
            alloc = BitAllocation.equal_split(bits, plant.dim)
        return vector_steady_state_bound(plant, alloc, p_e, delay=n)
    return steady_state_bound(p_e, bits, n, plant)


@dataclass(frozen=True)
class CodesignResult:
    """Outcome of a blocklength scan: the argmin, the sampled curve, and the
    heuristic solution when available."""

    n_star: int
    curve: tuple[tuple[int, float], ...]
    n_heuristic: int | None
    feasible_range: tuple[int, int]

    def error_at(self, n: int) -> float:
        for point, value in self.curve:
            if point == n:
                return value
        raise KeyError(f"blocklength {n} was not scanned")

    @property
    def bound_at_star(self) -> float:
        return self.error_at(self.n_star)


def optimize_blocklength(
    bits: int,
    plant: ScalarPlant | VectorPlant,
    channel: BecChannel,
    pe_model: str | PeModel = "normal_approx",
    n_range: Sequence[int] | None = None,
    alloc: BitAllocation | None = None,
    include_heuristic: bool = True,
) -> CodesignResult:
    """Exhaustive scan of the coded steady-state bound over integer blocklengths.

    Scans ascending, so ties break toward the smaller (lower-latency) n.
    Blocklengths whose rate is infeasible or whose bound is unbounded stay in
    the curve as +inf but are excluded from the argmin; if nothing is finite,
    AllUnboundedError is raised.
    """
    t_samp = plant.t_samp
    if n_range is None:
        if callable(pe_model):
            lo = bits
        else:
            lo = min_feasible_blocklength(bits, channel)
        if lo > t_samp:
            raise AllUnboundedError(
                f"no feasible blocklength: need n >= {lo} but t_samp = {t_samp}"
            )
        n_range = range(lo, t_samp + 1)
    else:
        n_range = sorted(set(int(n) for n in n_range))
        if any(n < bits or n > t_samp for n in n_range):
            raise ValueError("n_range entries must satisfy bits <= n <= t_samp")
        if not n_range:
            raise ValueError("n_range is empty")
    curve = []
    for n in n_range:
        try:
            value = steady_state_bound_coded(n, bits, plant, channel, pe_model, alloc)
        except RateAboveCapacityError:
            value = UNBOUNDED
        curve.append((int(n), value))
    finite = [(n, v) for n, v in curve if math.isfinite(v)]
    if not finite:
        raise AllUnboundedError(
            "estimation error is unbounded at every scanned blocklength"
        )
    n_star = min(finite, key=lambda item: (item[1], item[0]))[0]
    n_heur = None
    if include_heuristic and isinstance(plant, ScalarPlant) and plant.a > 1.0:
        try:
            n_heur = heuristic_blocklength(bits, plant, channel)
        except (NoRootError, RateAboveCapacityError):
            n_heur = None
    return CodesignResult(
        n_star=n_star,
        curve=tuple(curve),
        n_heuristic=n_heur,
        feasible_range=(finite[0][0], finite[-1][0]),
    )


def _solve_density_ratio(target: float) -> float:
    """Unique x > 0 with pdf(x)/x == target; the ratio is strictly decreasing."""
    if target <= 0.0:
        raise NoRootError(f"density-ratio target must be positive, got {target}")
    lo, hi = 1e-12, 1.0
    while std_normal_pdf(hi) / hi >= target:
        hi *= 2.0
        if hi > 1e9:
            raise NoRootError("density-ratio bracket failed to close")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if std_normal_pdf(mid) / mid > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def heuristic_blocklength(
    bits: int,
    plant: ScalarPlant,
    channel: BecChannel,
    R_fixed: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> int:
    """Approximate optimal blocklength from the small-growth optimality equation.

    Valid for expanding dynamics with growth factor close to 1. The equation
    balances the normal-tail density ratio at the operating point against a
    term mixing the dynamics speed and the sampling horizon. With R_fixed the
    solution is explicit; otherwise the rate is self-consistent (R = bits/n)
    and the solve alternates a monotone bisection in the tail argument with a
    rate update, which converges where a plain fixed-point iteration on n
    oscillates between the rate clamps.
    """
    if plant.a <= 1.0:
        raise ValueError("heuristic applies to expanding dynamics (a > 1) only")
    cap, disp = channel.capacity, channel.dispersion
    if cap <= 0.0:
        raise RateAboveCapacityError("channel capacity is zero")
    if disp == 0.0:
        raise NoRootError("channel dispersion is zero; the tail equation degenerates")
    a_small = plant.a - 1.0
    t_samp = plant.t_samp
    n_lo = (bits / cap) * (1.0 + 1e-6)
    if n_lo >= t_samp:
        raise NoRootError(
            f"feasible bracket [{n_lo:.2f}, {t_samp}] is empty for these parameters"
        )

    def target(rate: float) -> float:
        return 1.0 / (2.0 + a_small * t_samp + (cap - rate) ** 2 * t_samp / (2.0 * disp))

    n_int_lo = min_feasible_blocklength(bits, channel)

    def _to_integer(n: float) -> int:
        return min(max(int(round(n)), n_int_lo), t_samp)

    if R_fixed is not None:
        if not 0.0 < R_fixed < cap:
            raise ValueError(f"R_fixed must be in (0, capacity), got {R_fixed}")
        x = _solve_density_ratio(target(R_fixed))
        n = disp * x * x / (cap - R_fixed) ** 2
        return _to_integer(min(max(n, n_lo), float(t_samp)))

    n = float(t_samp)
    for _ in range(max_iter):
        rate = bits / n
        x = _solve_density_ratio(target(rate))
        # invert x == sqrt(n/disp) * (cap - bits/n) for n, keeping the rate's
        # n-dependence exact inside the inversion
        root = (x * math.sqrt(disp) + math.sqrt(x * x * disp + 4.0 * cap * bits)) / (
            2.0 * cap
        )
        n_new = min(max(root * root, n_lo), float(t_samp))
        if abs(n_new - n) < tol:
            n = n_new
            break
        n = n_new
    return _to_integer(n)
