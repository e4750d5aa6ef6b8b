"""End-to-end trajectory simulation of the remote estimation loop.

Each trial runs the full pipeline: sample the plant at every sampling
instant, quantize against the shared uncertainty set, push the message
through the configured communication mode (abstract Bernoulli loss, uncoded
erasure channel, or an actual random linear code with erasure decoding),
deliver the outcome to both sides after the latency, and record the
estimation error at reception time.

Randomness is laid out for reproducibility under any execution schedule:
trial t draws its plant randomness from stream (master_seed, t, 0) and its
channel randomness from (master_seed, t, 1), each as a fixed sequence of
array draws. The fixed-code mode shares one code drawn from (master_seed, 2).
Results are therefore bit-identical however trials are chunked or
parallelized.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import analysis
from .coding import BecChannel, ErasedWord, Gf2Code, code_error_prob, decode_erasures, uncoded_error_prob
from .quantizer import BitAllocation, initial_box
from .system import ScalarPlant, VectorPlant, float_power, geometric_sum, jordan_decompose, noise_column_sum

_COMM_MODES = ("abstract", "uncoded", "coded")
_CODE_MODES = ("ensemble", "fixed")
_NOISE_MODES = ("uniform", "worst_case")


@dataclass(frozen=True)
class SimConfig:
    """Full description of one simulation study.

    comm_mode selects how transmission outcomes are produced:
      abstract - Bernoulli(p_e) loss of the whole message, latency d_latency
      uncoded  - r_bits raw bits over the erasure channel, latency r_bits
      coded    - (n_code, r_bits) random linear code over the erasure
                 channel, latency n_code; fresh code per transmission
                 ("ensemble") or one shared code ("fixed")
    """

    plant: ScalarPlant | VectorPlant
    r_bits: int
    comm_mode: str
    trials: int
    rounds: int
    master_seed: int
    p_e: float | None = None
    zeta: float | None = None
    n_code: int | None = None
    code_mode: str = "ensemble"
    d_latency: int | None = None
    alloc: BitAllocation | None = None
    burn_in: int | None = None
    noise_mode: str = "uniform"
    strict: bool = True

    def __post_init__(self):
        if self.r_bits < 1:
            raise ValueError(f"r_bits must be >= 1, got {self.r_bits}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.comm_mode not in _COMM_MODES:
            raise ValueError(f"comm_mode must be one of {_COMM_MODES}")
        if self.code_mode not in _CODE_MODES:
            raise ValueError(f"code_mode must be one of {_CODE_MODES}")
        if self.noise_mode not in _NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {_NOISE_MODES}")
        t_samp = self.plant.t_samp
        if self.comm_mode == "abstract":
            if self.p_e is None or not 0.0 <= self.p_e <= 1.0:
                raise ValueError("abstract mode needs p_e in [0, 1]")
            if self.d_latency is None or not 0 <= self.d_latency <= t_samp:
                raise ValueError(f"abstract mode needs d_latency in [0, {t_samp}]")
        else:
            if self.zeta is None or not 0.0 <= self.zeta <= 1.0:
                raise ValueError(f"{self.comm_mode} mode needs zeta in [0, 1]")
        if self.comm_mode == "uncoded" and self.r_bits > t_samp:
            raise ValueError("uncoded mode needs r_bits <= t_samp")
        if self.comm_mode == "coded":
            if self.n_code is None or not self.r_bits <= self.n_code <= t_samp:
                raise ValueError("coded mode needs r_bits <= n_code <= t_samp")
        if isinstance(self.plant, VectorPlant):
            alloc = self.alloc or BitAllocation.equal_split(self.r_bits, self.plant.dim)
            if alloc.total != self.r_bits or len(alloc.r_i) != self.plant.dim:
                raise ValueError("allocation must spend exactly r_bits over all dimensions")
            object.__setattr__(self, "alloc", alloc)
        burn = self.burn_in
        if burn is None:
            burn = min(max(20, self.rounds // 5), self.rounds - 1)
            object.__setattr__(self, "burn_in", burn)
        if not 0 <= self.burn_in < self.rounds:
            raise ValueError(f"burn_in must be in [0, rounds), got {self.burn_in}")

    @property
    def effective_d(self) -> int:
        if self.comm_mode == "abstract":
            return self.d_latency
        if self.comm_mode == "uncoded":
            return self.r_bits
        return self.n_code

    def known_p_e(self) -> float | None:
        """Exact per-message failure probability, when one exists.

        The ensemble-coded value is exact only within the enumeration budget;
        a fixed code has its own code-specific rate, so None is returned.
        """
        if self.comm_mode == "abstract":
            return self.p_e
        if self.comm_mode == "uncoded":
            return uncoded_error_prob(BecChannel(self.zeta), self.r_bits)
        if self.code_mode == "ensemble" and self.n_code <= 20 and self.r_bits <= 12:
            return code_error_prob(self.r_bits, self.n_code, BecChannel(self.zeta), "exact_small")
        return None


@dataclass(frozen=True, eq=False)
class TrialTrace:
    """Per-round record of one simulated trial."""

    errors: np.ndarray
    widths: np.ndarray
    successes: np.ndarray


@dataclass(frozen=True, eq=False)
class SimReport:
    """Aggregated simulation outcome.

    Violation counters cover the scheme's structural guarantees (state inside
    the tracked set, error at most half its width), dominance of the analytic
    bound by the post-burn-in per-round mean errors, and per-round mean
    widths straying more than 3 standard errors from the recursion forecast.
    All are zero on passing runs; the last two are only counted when the
    failure probability is exactly known.
    """

    trials: int
    rounds: int
    burn_in: int
    mean_error: np.ndarray
    error_se: np.ndarray
    mean_width: np.ndarray
    width_se: np.ndarray
    failure_rate: float
    steady_state_error: float
    expected_p_e: float | None
    analytic_bound: float | None
    single_shot: float | None
    expected_width: np.ndarray | None
    containment_violations: int
    half_width_violations: int
    bound_violations: int
    width_mismatches: int


# ---------------------------------------------------------------------------
# per-trial randomness
# ---------------------------------------------------------------------------

def _plant_stream(cfg: SimConfig, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((cfg.master_seed, t, 0)))


def _channel_stream(cfg: SimConfig, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((cfg.master_seed, t, 1)))


def _fixed_code(cfg: SimConfig) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence((cfg.master_seed, 2)))
    return rng.integers(0, 2, size=(cfg.r_bits, cfg.n_code), dtype=np.uint8)


@dataclass
class _ChunkDraws:
    x0: np.ndarray                      # (m,) or (m, dim)
    noise: np.ndarray | None            # (m, rounds, T) or (m, rounds, T, dim)
    loss_u: np.ndarray | None = None    # abstract: (m, rounds)
    bit_u: np.ndarray | None = None     # uncoded: (m, rounds, r)
    gens: np.ndarray | None = None      # coded ensemble: (m, rounds, r, n)
    erase_u: np.ndarray | None = None   # coded: (m, rounds, n)
    fixed_gen: np.ndarray | None = None


def _draw_chunk(cfg: SimConfig, indices: Sequence[int]) -> _ChunkDraws:
    plant = cfg.plant
    rounds, t_samp, r = cfg.rounds, plant.t_samp, cfg.r_bits
    scalar = isinstance(plant, ScalarPlant)
    x0s, noises = [], []
    for t in indices:
        rng = _plant_stream(cfg, t)
        if scalar:
            x0s.append(rng.uniform(plant.x0_lo, plant.x0_hi))
        else:
            x0s.append(rng.uniform(plant.x0_box[:, 0], plant.x0_box[:, 1]))
        if cfg.noise_mode == "uniform":
            half = 0.5 * plant.w_max
            size = (rounds, t_samp) if scalar else (rounds, t_samp, plant.dim)
            noises.append(rng.uniform(-half, half, size=size))
        elif not scalar:
            # vector worst case: extreme magnitude, random sign per component
            half = 0.5 * plant.w_max
            size = (rounds, t_samp, plant.dim)
            noises.append(np.where(rng.random(size) < 0.5, -half, half))
    draws = _ChunkDraws(
        x0=np.array(x0s),
        noise=np.array(noises) if noises else None,
    )
    if cfg.comm_mode == "abstract":
        draws.loss_u = np.array([_channel_stream(cfg, t).random(rounds) for t in indices])
    elif cfg.comm_mode == "uncoded":
        draws.bit_u = np.array(
            [_channel_stream(cfg, t).random((rounds, r)) for t in indices]
        )
    else:
        n = cfg.n_code
        gens, erases = [], []
        for t in indices:
            rng = _channel_stream(cfg, t)
            if cfg.code_mode == "ensemble":
                gens.append(rng.integers(0, 2, size=(rounds, r, n), dtype=np.uint8))
            erases.append(rng.random((rounds, n)))
        draws.erase_u = np.array(erases)
        if cfg.code_mode == "ensemble":
            draws.gens = np.array(gens)
        else:
            draws.fixed_gen = _fixed_code(cfg)
    return draws


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------

def _coded_round(
    cfg: SimConfig,
    draws: _ChunkDraws,
    rd: int,
    msg_bits: np.ndarray,
) -> np.ndarray:
    """Encode, erase, and decode each trial's message; returns success flags.

    Erasure decoding can only fail detectably, so a successful decode always
    equals the transmitted message; that equality is asserted as a guard.
    """
    m = msg_bits.shape[0]
    erased = draws.erase_u[:, rd, :] < cfg.zeta
    success = np.zeros(m, dtype=bool)
    for t in range(m):
        gen = draws.gens[t, rd] if draws.gens is not None else draws.fixed_gen
        code = Gf2Code(gen)
        word = code.encode(msg_bits[t])
        decoded = decode_erasures(code, ErasedWord(word, erased[t]))
        if decoded is not None:
            if not np.array_equal(decoded, msg_bits[t]):
                raise RuntimeError("erasure decoder returned a wrong message")
            success[t] = True
    return success


def _round_successes(
    cfg: SimConfig, draws: _ChunkDraws, rd: int, msg_bits: np.ndarray | None
) -> np.ndarray:
    if cfg.comm_mode == "abstract":
        return draws.loss_u[:, rd] >= cfg.p_e
    if cfg.comm_mode == "uncoded":
        return ~np.any(draws.bit_u[:, rd, :] < cfg.zeta, axis=1)
    return _coded_round(cfg, draws, rd, msg_bits)


def _bits_of(indices: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1)
    return ((indices[:, None] >> shifts) & 1).astype(np.uint8)


def _run_scalar_chunk(cfg: SimConfig, indices: Sequence[int]):
    # The state is simulated relative to the tracked-interval center, which
    # the shared tracking makes exact: quantization, refinement, and the
    # reception error are all functions of the recentered state, and the
    # recentered interval stays symmetric. Absolute coordinates would lose
    # the O(1)-width information to float cancellation once the raw state
    # grows past width/eps.
    plant: ScalarPlant = cfg.plant
    m, rounds = len(indices), cfg.rounds
    a, w_max, t_samp = plant.a, plant.w_max, plant.t_samp
    d, r = cfg.effective_d, cfg.r_bits
    levels = 1 << r
    a_pow_t = float_power(a, t_samp)
    spread = geometric_sum(a, t_samp) * 0.5 * w_max
    draws = _draw_chunk(cfg, indices)
    worst = cfg.noise_mode == "worst_case"

    s = draws.x0 - 0.5 * (plant.x0_lo + plant.x0_hi)
    half = np.full(m, 0.5 * plant.x0_width)
    errors = np.empty((m, rounds))
    widths = np.empty((m, rounds))
    successes = np.empty((m, rounds), dtype=bool)
    viol_contain = 0
    viol_half = 0

    for rd in range(rounds):
        tol = 1e-9 * np.maximum(1.0, half)
        viol_contain += int(np.count_nonzero(np.abs(s) > half + tol))
        width = 2.0 * half
        with np.errstate(invalid="ignore", divide="ignore"):
            idx = np.floor((s + half) / width * levels)
        idx = np.where(width > 0.0, idx, 0.0)
        idx = np.clip(idx, 0, levels - 1).astype(np.int64)

        msg_bits = _bits_of(idx, r) if cfg.comm_mode == "coded" else None
        ok = _round_successes(cfg, draws, rd, msg_bits)
        successes[:, rd] = ok

        step = width / levels
        vlo = np.where(ok, -half + idx * step, -half)
        vhi = np.where(
            ok, np.where(idx == levels - 1, half, -half + (idx + 1) * step), half
        )
        widths[:, rd] = vhi - vlo
        s = s - 0.5 * (vlo + vhi)
        vhalf = 0.5 * (vhi - vlo)
        viol_half += int(np.count_nonzero(np.abs(s) > vhalf + tol))

        if worst:
            half_w = 0.5 * w_max
            for k in range(t_samp):
                if k == d:
                    errors[:, rd] = np.abs(s)
                s = a * s + np.where(s >= 0.0, half_w, -half_w)
            if d == t_samp:
                errors[:, rd] = np.abs(s)
        else:
            for k in range(d):
                s = a * s + draws.noise[:, rd, k]
            errors[:, rd] = np.abs(s)
            for k in range(d, t_samp):
                s = a * s + draws.noise[:, rd, k]

        half = a_pow_t * vhalf + spread

    return errors, widths, successes, viol_contain, viol_half


def _run_vector_chunk(cfg: SimConfig, indices: Sequence[int]):
    # Same recentering as the scalar engine: the plant-coordinate state is
    # simulated relative to the back-transformed center of the tracked box,
    # so the box stays symmetric (tracked by its half-widths) and no quantity
    # ever grows with the absolute state.
    plant: VectorPlant = cfg.plant
    m, rounds, dim = len(indices), cfg.rounds, plant.dim
    t_samp, d = plant.t_samp, cfg.effective_d
    alloc = cfg.alloc
    phi, j_mat = jordan_decompose(plant)
    inv_phi = np.linalg.inv(phi)
    abs_j = np.abs(j_mat)
    half_noise = 0.5 * noise_column_sum(plant, phi)
    a_mat_t = plant.a_mat.T
    levels = np.array([1 << r for r in alloc.r_i], dtype=np.int64)
    draws = _draw_chunk(cfg, indices)

    box0 = initial_box(plant)
    s = draws.x0 - box0.center @ inv_phi.T      # (m, dim), plant coordinates
    half = np.tile(0.5 * box0.widths, (m, 1))   # z-coordinate half-widths
    errors = np.empty((m, rounds))
    widths = np.empty((m, rounds, dim))
    successes = np.empty((m, rounds), dtype=bool)
    viol_contain = 0
    viol_half = 0

    for rd in range(rounds):
        z = s @ phi.T
        tol = 1e-9 * np.maximum(1.0, half)
        viol_contain += int(np.count_nonzero(np.abs(z) > half + tol))
        width = 2.0 * half
        with np.errstate(invalid="ignore", divide="ignore"):
            idx = np.floor((z + half) / width * levels)
        idx = np.where(width > 0.0, idx, 0.0)
        idx = np.clip(idx, 0, levels - 1).astype(np.int64)

        msg_bits = None
        if cfg.comm_mode == "coded":
            msg_bits = np.concatenate(
                [_bits_of(idx[:, i], alloc.r_i[i]) for i in range(dim)], axis=1
            )
        ok = _round_successes(cfg, draws, rd, msg_bits)
        successes[:, rd] = ok

        step = width / levels
        okc = ok[:, None]
        vlo = np.where(okc, -half + idx * step, -half)
        vhi = np.where(
            okc, np.where(idx == levels - 1, half, -half + (idx + 1) * step), half
        )
        widths[:, rd] = vhi - vlo
        s = s - (0.5 * (vlo + vhi)) @ inv_phi.T
        vhalf = 0.5 * (vhi - vlo)
        viol_half += int(np.count_nonzero(np.abs(s @ phi.T) > vhalf + tol))

        for k in range(d):
            s = s @ a_mat_t + draws.noise[:, rd, k]
        errors[:, rd] = np.abs(s).sum(axis=1)
        for k in range(d, t_samp):
            s = s @ a_mat_t + draws.noise[:, rd, k]

        half = vhalf @ abs_j.T + half_noise

    return errors, widths, successes, viol_contain, viol_half


def _run_chunk(cfg: SimConfig, indices: Sequence[int]):
    if isinstance(cfg.plant, ScalarPlant):
        out = _run_scalar_chunk(cfg, indices)
    else:
        out = _run_vector_chunk(cfg, indices)
    if cfg.strict and (out[3] or out[4]):
        raise RuntimeError(
            f"invariant violations: containment={out[3]}, half_width={out[4]}"
        )
    return out


def run_trial(cfg: SimConfig, trial_index: int) -> TrialTrace:
    """Simulate one trial; deterministic given (master_seed, trial_index)."""
    if not 0 <= trial_index < cfg.trials:
        raise ValueError(f"trial_index must be in [0, {cfg.trials})")
    errors, widths, successes, _, _ = _run_chunk(cfg, [trial_index])
    return TrialTrace(errors=errors[0], widths=widths[0], successes=successes[0])


def aggregate(cfg: SimConfig, traces: Sequence[TrialTrace]) -> SimReport:
    """Reduce per-trial traces to a SimReport (same reduction simulate uses)."""
    if not traces:
        raise ValueError("no traces to aggregate")
    lengths = {trace.errors.shape[0] for trace in traces}
    if lengths != {cfg.rounds}:
        raise ValueError("traces disagree with the configured round count")
    errors = np.stack([trace.errors for trace in traces])
    widths = np.stack([trace.widths for trace in traces])
    successes = np.stack([trace.successes for trace in traces])
    return _reduce(cfg, errors, widths, successes, 0, 0)


def _reduce(cfg, errors, widths, successes, viol_contain, viol_half) -> SimReport:
    trials = errors.shape[0]
    mean_error = errors.mean(axis=0)
    error_se = errors.std(axis=0, ddof=1) / np.sqrt(trials) if trials > 1 else np.zeros_like(mean_error)
    mean_width = widths.mean(axis=0)
    width_se = widths.std(axis=0, ddof=1) / np.sqrt(trials) if trials > 1 else np.zeros_like(mean_width)
    failure_rate = 1.0 - successes.mean()
    steady = float(mean_error[cfg.burn_in:].mean())

    p_e = cfg.known_p_e()
    bound = single = None
    expected = None
    bound_viol = 0
    width_miss = 0
    if p_e is not None:
        plant, d, r = cfg.plant, cfg.effective_d, cfg.r_bits
        if isinstance(plant, ScalarPlant):
            bound = analysis.steady_state_bound(p_e, r, d, plant)
            single = analysis.single_shot_bound(p_e, r, d, plant)
            expected = analysis.expected_widths(p_e, r, plant, cfg.rounds)
        else:
            bound = analysis.vector_steady_state_bound(plant, cfg.alloc, p_e, d)
            expected = analysis.vector_expected_widths(p_e, cfg.alloc, plant, cfg.rounds)
        if np.isfinite(bound):
            bound_viol = int(np.count_nonzero(mean_error[cfg.burn_in:] > bound))
        slack = 3.0 * width_se + 1e-9 * (1.0 + np.abs(expected))
        width_miss = int(np.count_nonzero(np.abs(mean_width - expected) > slack))

    return SimReport(
        trials=trials,
        rounds=cfg.rounds,
        burn_in=cfg.burn_in,
        mean_error=mean_error,
        error_se=error_se,
        mean_width=mean_width,
        width_se=width_se,
        failure_rate=float(failure_rate),
        steady_state_error=steady,
        expected_p_e=p_e,
        analytic_bound=bound,
        single_shot=single,
        expected_width=expected,
        containment_violations=viol_contain,
        half_width_violations=viol_half,
        bound_violations=bound_viol,
        width_mismatches=width_miss,
    )


def _chunk_worker(args):
    cfg, indices = args
    return _run_chunk(cfg, indices)


def simulate(cfg: SimConfig, parallel: int = 1, chunk_size: int = 2048) -> SimReport:
    """Run all trials and aggregate; identical output for any parallel/chunking."""
    chunks = [
        list(range(start, min(start + chunk_size, cfg.trials)))
        for start in range(0, cfg.trials, chunk_size)
    ]
    if parallel > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            parts = list(pool.map(_chunk_worker, [(cfg, c) for c in chunks]))
    else:
        parts = [_run_chunk(cfg, c) for c in chunks]
    errors = np.concatenate([p[0] for p in parts])
    widths = np.concatenate([p[1] for p in parts])
    successes = np.concatenate([p[2] for p in parts])
    viol_contain = sum(p[3] for p in parts)
    viol_half = sum(p[4] for p in parts)
    return _reduce(cfg, errors, widths, successes, viol_contain, viol_half)
