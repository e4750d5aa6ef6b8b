"""Plant models, timing abstraction, and the linear-algebra support shared by
the rest of the toolkit.

A plant is a discrete-time linear system x[k+1] = a*x[k] + w[k] with bounded
disturbance |w[k]| <= w_max/2, sampled every t_samp steps. The communication
link is abstracted by the triple (r_bits, d_latency, p_e). Vector plants carry
an optional real Jordan decomposition of the per-sample transition matrix,
used by the hypercube tracking scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class NonRealEigenvalueError(ValueError):
    """The dynamics matrix has complex eigenvalues; only real spectra are supported."""


class DegenerateDecompositionError(ValueError):
    """No reliable Jordan decomposition could be computed automatically."""


#: |ratio - 1| below this is treated as ratio == 1 in geometric sums.
_UNIT_RATIO_TOL = 1e-12


def float_power(base: float, exponent: int) -> float:
    """base**exponent saturating to +inf instead of raising OverflowError."""
    try:
        return float(base) ** exponent
    except OverflowError:
        return math.inf


def geometric_sum(ratio: float, terms: int) -> float:
    """Sum of ratio**m for m = 0..terms-1, stable at ratio == 1.

    Equals (ratio**terms - 1)/(ratio - 1) away from 1 and exactly `terms`
    when |ratio - 1| < 1e-12, so callers never hit the 0/0 form. Saturates
    to +inf when the power overflows.
    """
    if terms < 0:
        raise ValueError(f"terms must be >= 0, got {terms}")
    if abs(ratio - 1.0) < _UNIT_RATIO_TOL:
        return float(terms)
    return (float_power(ratio, terms) - 1.0) / (ratio - 1.0)


@dataclass(frozen=True)
class ScalarPlant:
    """Scalar linear plant with bounded disturbance and periodic sampling.

    a:      growth factor per unit step, a >= 0
    w_max:  disturbance magnitude; each step's disturbance lies in [-w_max/2, w_max/2]
    t_samp: sampling period in unit steps, >= 1
    x0_lo, x0_hi: bounds of the initial-state interval
    """

    a: float
    w_max: float
    t_samp: int
    x0_lo: float
    x0_hi: float

    def __post_init__(self):
        if self.a < 0:
            raise ValueError(f"growth factor must be >= 0, got {self.a}")
        if self.w_max < 0:
            raise ValueError(f"w_max must be >= 0, got {self.w_max}")
        if self.t_samp < 1:
            raise ValueError(f"t_samp must be >= 1, got {self.t_samp}")
        if self.x0_lo > self.x0_hi:
            raise ValueError(f"empty initial interval [{self.x0_lo}, {self.x0_hi}]")

    @property
    def x0_width(self) -> float:
        return self.x0_hi - self.x0_lo


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class VectorPlant:
    """n-dimensional linear plant x[k+1] = a_mat @ x[k] + w[k].

    w_max bounds each disturbance component: |w[k][i]| <= w_max[i]/2. x0_box
    holds per-dimension (lo, hi) bounds of the initial state. `jordan`, when
    supplied, is a pair (phi, j_mat) with matrix_power(a_mat, t_samp) equal to
    inv(phi) @ j_mat @ phi; j_mat must be upper bidiagonal with superdiagonal
    entries in {0, 1}. Only real spectra are accepted.
    """

    a_mat: np.ndarray
    w_max: np.ndarray
    t_samp: int
    x0_box: np.ndarray
    jordan: tuple[np.ndarray, np.ndarray] | None = None
    dim: int = field(init=False)

    def __post_init__(self):
        a = _as_readonly(np.atleast_2d(self.a_mat))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"a_mat must be square, got shape {a.shape}")
        n = a.shape[0]
        w = _as_readonly(np.atleast_1d(self.w_max))
        if w.shape != (n,):
            raise ValueError(f"w_max must have shape ({n},), got {w.shape}")
        if np.any(w < 0):
            raise ValueError("w_max entries must be >= 0")
        box = _as_readonly(np.atleast_2d(self.x0_box))
        if box.shape != (n, 2):
            raise ValueError(f"x0_box must have shape ({n}, 2), got {box.shape}")
        if np.any(box[:, 0] > box[:, 1]):
            raise ValueError("x0_box has lo > hi in some dimension")
        if self.t_samp < 1:
            raise ValueError(f"t_samp must be >= 1, got {self.t_samp}")
        eig = np.linalg.eigvals(a)
        if np.any(np.abs(eig.imag) > 1e-9 * (1.0 + np.abs(eig.real))):
            raise NonRealEigenvalueError(
                f"a_mat has complex eigenvalues {eig}; only real spectra are supported"
            )
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "w_max", w)
        object.__setattr__(self, "x0_box", box)
        object.__setattr__(self, "dim", n)
        if self.jordan is not None:
            phi = _as_readonly(np.atleast_2d(self.jordan[0]))
            jm = _as_readonly(np.atleast_2d(self.jordan[1]))
            _check_jordan_pair(self.sample_transition(), phi, jm)
            object.__setattr__(self, "jordan", (phi, jm))

    def sample_transition(self) -> np.ndarray:
        """Transition matrix over one sampling period: a_mat**t_samp."""
        return np.linalg.matrix_power(self.a_mat, self.t_samp)


@dataclass(frozen=True)
class CommAbstraction:
    """Communication block abstracted by message size, latency, and reliability.

    r_bits bits are delivered after d_latency unit steps; the whole message is
    lost with probability p_e, otherwise delivered intact.
    """

    r_bits: int
    d_latency: int
    p_e: float

    def __post_init__(self):
        if self.r_bits < 1:
            raise ValueError(f"r_bits must be >= 1, got {self.r_bits}")
        if self.d_latency < 1:
            raise ValueError(f"d_latency must be >= 1, got {self.d_latency}")
        if not 0.0 <= self.p_e <= 1.0:
            raise ValueError(f"p_e must be in [0, 1], got {self.p_e}")

    def check_against(self, plant: ScalarPlant | VectorPlant) -> None:
        """Reject pairings where delivery would outlast the sampling period."""
        if self.d_latency > plant.t_samp:
            raise ValueError(
                f"latency {self.d_latency} exceeds sampling period {plant.t_samp}"
            )


def step_state(x: float, plant: ScalarPlant, w: float) -> float:
    """One unit step of the scalar dynamics; w must satisfy |w| <= w_max/2."""
    half = 0.5 * plant.w_max
    if abs(w) > half * (1.0 + 1e-12) + 1e-300:
        raise ValueError(f"disturbance {w} exceeds magnitude bound {half}")
    return plant.a * x + w


def propagate_interval(
    lo: float, hi: float, plant: ScalarPlant, steps: int
) -> tuple[float, float]:
    """Reachable interval after `steps` unit steps from any x in [lo, hi].

    Scales the interval by a**steps and inflates both ends by the worst-case
    accumulated disturbance (w_max/2 per step, geometrically weighted).
    """
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    growth = float_power(plant.a, steps)
    spread = geometric_sum(plant.a, steps) * 0.5 * plant.w_max
    return growth * lo - spread, growth * hi + spread


def induced_l1_norm(m: np.ndarray) -> float:
    """Operator norm induced by the l1 vector norm: max column abs sum."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return float(np.abs(m).sum(axis=0).max())


def _is_jordan_form(m: np.ndarray, tol: float) -> bool:
    """True when m is upper bidiagonal with superdiagonal entries near {0, 1}."""
    n = m.shape[0]
    scale = 1.0 + float(np.abs(m).max(initial=0.0))
    off = m.copy()
    off[np.diag_indices(n)] = 0.0
    if n > 1:
        sup = np.arange(n - 1)
        off[sup, sup + 1] = 0.0
    if np.abs(off).max(initial=0.0) > tol * scale:
        return False
    if n > 1:
        sup_vals = m[np.arange(n - 1), np.arange(1, n)]
        near01 = np.minimum(np.abs(sup_vals), np.abs(sup_vals - 1.0))
        if np.any(near01 > tol * scale):
            return False
    return True


def _snap_jordan(m: np.ndarray) -> np.ndarray:
    """Zero the strict off-bidiagonal part and round the superdiagonal to {0, 1}."""
    n = m.shape[0]
    out = np.zeros_like(m)
    out[np.diag_indices(n)] = np.diag(m)
    if n > 1:
        sup = m[np.arange(n - 1), np.arange(1, n)]
        out[np.arange(n - 1), np.arange(1, n)] = np.round(sup)
    return out


def _check_jordan_pair(m: np.ndarray, phi: np.ndarray, j_mat: np.ndarray) -> None:
    n = m.shape[0]
    if phi.shape != (n, n) or j_mat.shape != (n, n):
        raise ValueError("phi and j_mat must match the transition matrix shape")
    if not _is_jordan_form(j_mat, 1e-8):
        raise DegenerateDecompositionError(
            "j_mat is not upper bidiagonal with a {0,1} superdiagonal"
        )
    recon = np.linalg.solve(phi, j_mat @ phi)
    err = np.abs(recon - m).max()
    if err > 1e-8 * (1.0 + np.abs(m).max()):
        raise DegenerateDecompositionError(
            f"phi/j_mat do not reproduce the sample transition (error {err:.3e})"
        )


def jordan_decompose(plant: VectorPlant) -> tuple[np.ndarray, np.ndarray]:
    """Real Jordan data (phi, j_mat) of the per-sample transition matrix.

    Uses the user-supplied pair when present. Otherwise handles the two
    well-conditioned cases: a transition matrix that is already in Jordan
    form (taken as-is with phi = I), or one with distinct real eigenvalues
    (diagonalized). Anything else raises DegenerateDecompositionError rather
    than risk a numerically meaningless decomposition.
    """
    m = plant.sample_transition()
    if plant.jordan is not None:
        return plant.jordan
    n = m.shape[0]
    if _is_jordan_form(m, 1e-9):
        return np.eye(n), _snap_jordan(m)
    eig, vecs = np.linalg.eig(m)
    if np.any(np.abs(eig.imag) > 1e-9 * (1.0 + np.abs(eig.real))):
        raise NonRealEigenvalueError(
            f"sample transition has complex eigenvalues {eig}"
        )
    lam = eig.real
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    vecs = vecs.real[:, order]
    gaps = np.abs(np.subtract.outer(lam, lam)) + np.eye(n)
    if gaps.min() < 1e-8 * (1.0 + np.abs(lam).max()):
        raise DegenerateDecompositionError(
            "repeated eigenvalues: supply an explicit (phi, j_mat) pair"
        )
    phi = np.linalg.inv(vecs)
    j_mat = np.diag(lam)
    _check_jordan_pair(m, phi, j_mat)
    return phi, j_mat


def noise_column_sum(plant: VectorPlant, phi: np.ndarray, steps: int | None = None) -> np.ndarray:
    """Accumulated worst-case disturbance magnitudes in transformed coordinates.

    Returns sum over m = 0..steps-1 of |phi @ a_mat**m| @ w_max, the total
    width added to the tracked hypercube by `steps` unit steps of noise.
    Defaults to one full sampling period.
    """
    if steps is None:
        steps = plant.t_samp
    n = plant.dim
    total = np.zeros(n)
    power = np.eye(n)
    for _ in range(steps):
        total += np.abs(phi @ power) @ plant.w_max
        power = power @ plant.a_mat
    return total
