"""Binary erasure channel, random linear codes, and finite-length reliability curves.

The channel erases each transmitted bit independently. Messages are protected
either not at all (any erasure kills the packet) or by a random linear code
decoded by solving the GF(2) system restricted to the surviving positions;
rank deficiency is an intrinsically detected decoding failure, never a wrong
message. The normal-approximation curves tie blocklength, rate, and failure
probability together for design work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np


class RateAboveCapacityError(ValueError):
    """Requested code rate meets or exceeds the channel capacity."""


@dataclass(frozen=True)
class BecChannel:
    """Binary erasure channel with erasure probability zeta."""

    zeta: float

    def __post_init__(self):
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError(f"zeta must be in [0, 1], got {self.zeta}")

    @property
    def capacity(self) -> float:
        return 1.0 - self.zeta

    @property
    def dispersion(self) -> float:
        return self.zeta * (1.0 - self.zeta)


@dataclass(frozen=True, eq=False)
class ErasedWord:
    """Channel output: bit values plus a mask of erased positions."""

    bits: np.ndarray
    erased: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        erased = np.asarray(self.erased, dtype=bool)
        if bits.shape != erased.shape or bits.ndim != 1:
            raise ValueError("bits and erased must be 1-d arrays of equal length")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "erased", erased)

    def __len__(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True, eq=False)
class Gf2Code:
    """Linear block code given by an r x n binary generator matrix."""

    gen: np.ndarray

    def __post_init__(self):
        gen = np.asarray(self.gen, dtype=np.uint8)
        if gen.ndim != 2:
            raise ValueError("generator must be a 2-d bit matrix")
        if gen.shape[0] > gen.shape[1]:
            raise ValueError(f"need r <= n, got shape {gen.shape}")
        if gen.shape[0] < 1:
            raise ValueError("generator needs at least one row")
        object.__setattr__(self, "gen", gen)

    @property
    def r(self) -> int:
        return self.gen.shape[0]

    @property
    def n(self) -> int:
        return self.gen.shape[1]

    def encode(self, message: np.ndarray) -> np.ndarray:
        msg = np.asarray(message, dtype=np.uint8)
        if msg.shape != (self.r,):
            raise ValueError(f"message must have shape ({self.r},), got {msg.shape}")
        return ((msg @ self.gen) & 1).astype(np.uint8)


def uncoded_error_prob(channel: BecChannel, r: int) -> float:
    """Probability an unprotected r-bit message loses at least one bit."""
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    return 1.0 - (1.0 - channel.zeta) ** r


def transmit(word: np.ndarray, channel: BecChannel, rng: np.random.Generator) -> ErasedWord:
    """Send a bit word through the channel, erasing each position independently."""
    word = np.asarray(word, dtype=np.uint8)
    erased = rng.random(word.shape[0]) < channel.zeta
    return ErasedWord(word, erased)


def random_code(rng: np.random.Generator, r: int, n: int) -> Gf2Code:
    """Draw a generator matrix with fair-coin entries."""
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    return Gf2Code(rng.integers(0, 2, size=(r, n), dtype=np.uint8))


def decode_erasures(code: Gf2Code, recv: ErasedWord) -> np.ndarray | None:
    """Recover the message from the unerased positions, or None on failure.

    Solves the GF(2) linear system restricted to surviving columns by
    Gaussian elimination. Succeeds exactly when that submatrix has full row
    rank, in which case the solution is unique and equals the transmitted
    message; anything less is a detected failure.
    """
    if len(recv) != code.n:
        raise ValueError(f"received word length {len(recv)} != blocklength {code.n}")
    keep = ~recv.erased
    r = code.r
    # unknown message u satisfies u @ gen[:, keep] == bits[keep]
    aug = np.concatenate(
        [code.gen[:, keep].T, recv.bits[keep][:, None]], axis=1
    ).astype(np.uint8)
    rows = aug.shape[0]
    pivot_row = 0
    for col in range(r):
        if pivot_row >= rows:
            break
        k = pivot_row + int(np.argmax(aug[pivot_row:, col]))
        if aug[k, col] == 0:
            # no pivot for this unknown: rank deficient
            return None
        if k != pivot_row:
            aug[[pivot_row, k]] = aug[[k, pivot_row]]
        hits = aug[:, col].astype(bool).copy()
        hits[pivot_row] = False
        aug[hits] ^= aug[pivot_row]
        pivot_row += 1
    if pivot_row < r:
        return None
    if np.any(aug[pivot_row:, r]):
        # inconsistent rows cannot occur for pure-erasure codewords; guard anyway
        return None
    return aug[:r, r].copy()


# ---------------------------------------------------------------------------
# ensemble failure probability
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _count_rank_deficient(gen_words, mask_words, n_bits):  # pragma: no cover
    trials, r = gen_words.shape
    fails = 0
    basis = np.zeros(64, dtype=np.uint64)
    for t in range(trials):
        for b in range(n_bits):
            basis[b] = np.uint64(0)
        mask = mask_words[t]
        rank = 0
        for i in range(r):
            cur = gen_words[t, i] & mask
            while cur != np.uint64(0):
                h = n_bits - 1
                while (cur >> np.uint64(h)) & np.uint64(1) == np.uint64(0):
                    h -= 1
                if basis[h] != np.uint64(0):
                    cur ^= basis[h]
                else:
                    basis[h] = cur
                    rank += 1
                    break
        if rank < r:
            fails += 1
    return fails


def _pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack (trials, n) boolean rows into uint64 words, bit i = column i."""
    n = bits.shape[1]
    powers = np.uint64(1) << np.arange(n, dtype=np.uint64)
    return (bits.astype(np.uint64) * powers).sum(axis=1, dtype=np.uint64)


def _gf2_rank(mat: np.ndarray) -> int:
    """Row rank over GF(2) of a small uint8 matrix."""
    m = mat.copy()
    rows, cols = m.shape
    rank = 0
    for col in range(cols):
        if rank >= rows:
            break
        k = rank + int(np.argmax(m[rank:, col]))
        if m[k, col] == 0:
            continue
        if k != rank:
            m[[rank, k]] = m[[k, rank]]
        hits = m[:, col].astype(bool).copy()
        hits[rank] = False
        m[hits] ^= m[rank]
        rank += 1
    return rank


def _full_rank_prob(r: int, k: int) -> float:
    """Probability a uniform random r x k bit matrix has full row rank."""
    if k < r:
        return 0.0
    prob = 1.0
    for i in range(r):
        prob *= 1.0 - 2.0 ** (i - k)
    return prob


def code_error_prob(
    r: int,
    n: int,
    channel: BecChannel,
    mode: str = "monte_carlo",
    trials: int = 100_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Ensemble-average probability that erasure decoding fails.

    The average runs over both the random-code ensemble (fresh generator per
    trial) and the channel erasures. "monte_carlo" simulates `trials`
    independent (code, erasure-pattern) draws and counts rank-deficient
    outcomes; "exact_small" sums the binomial law of surviving positions
    against the exact rank distribution of uniform random bit matrices.
    """
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    if mode == "exact_small":
        if n > 20 or r > 12:
            raise ValueError(f"exact_small limited to n <= 20, r <= 12 (got r={r}, n={n})")
        zeta = channel.zeta
        total = 0.0
        for k in range(n + 1):
            weight = math.comb(n, k) * (1.0 - zeta) ** k * zeta ** (n - k)
            total += weight * (1.0 - _full_rank_prob(r, k))
        return total
    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if rng is None:
        rng = np.random.default_rng()
    if n <= 63:
        gen_words = rng.integers(0, np.uint64(1) << np.uint64(n), size=(trials, r), dtype=np.uint64)
        masks = _pack_bits(rng.random((trials, n)) >= channel.zeta)
        fails = _count_rank_deficient(gen_words, masks, n)
        return fails / trials
    fails = 0
    for _ in range(trials):
        gen = rng.integers(0, 2, size=(r, n), dtype=np.uint8)
        keep = rng.random(n) >= channel.zeta
        if _gf2_rank(gen[:, keep]) < r:
            fails += 1
    return fails / trials


# ---------------------------------------------------------------------------
# normal tail and finite-length curves
# ---------------------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def q_func(x: float) -> float:
    """Upper tail probability of the standard normal distribution."""
    return 0.5 * math.erfc(x / _SQRT2)


def std_normal_pdf(x: float) -> float:
    """Standard normal density."""
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def q_inv(p: float) -> float:
    """Inverse of q_func on (0, 1), by bracketed bisection plus Newton polish."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"q_inv argument must be in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -q_inv(1.0 - p)
    lo, hi = 0.0, 1.0
    while q_func(hi) > p:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError(f"q_inv argument {p} out of floating range")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if q_func(mid) > p:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(3):
        pdf = std_normal_pdf(x)
        if pdf == 0.0:
            break
        x += (q_func(x) - p) / pdf
    return x


def normal_approx_pe(n: int, r: int, channel: BecChannel) -> float:
    """Normal-approximation failure probability of an (n, r) code on this channel."""
    if n < 1 or r < 1:
        raise ValueError(f"need n, r >= 1, got n={n}, r={r}")
    rate = r / n
    cap = channel.capacity
    if rate >= cap:
        raise RateAboveCapacityError(
            f"rate {rate:.4f} is not below capacity {cap:.4f}"
        )
    disp = channel.dispersion
    if disp == 0.0:
        return 0.0
    return q_func(math.sqrt(n / disp) * (cap - rate))


def min_feasible_blocklength(r: int, channel: BecChannel) -> int:
    """Smallest n whose rate r/n is strictly below capacity."""
    cap = channel.capacity
    if cap <= 0.0:
        raise RateAboveCapacityError("channel capacity is zero; no blocklength works")
    n = int(math.floor(r / cap)) + 1
    while r / n >= cap:
        n += 1
    return n


def normal_approx_blocklength(p_e_target: float, r: int, channel: BecChannel) -> int:
    """Smallest blocklength whose normal-approximation failure prob meets the target.

    The failure probability is strictly decreasing in n above the capacity
    limit, so an integer bisection over that monotone predicate is exact.
    """
    if not 0.0 < p_e_target < 0.5:
        raise ValueError(f"target must be in (0, 0.5), got {p_e_target}")
    lo = min_feasible_blocklength(r, channel)
    if normal_approx_pe(lo, r, channel) <= p_e_target:
        return lo
    hi = 2 * lo
    while normal_approx_pe(hi, r, channel) > p_e_target:
        lo = hi
        hi *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if normal_approx_pe(mid, r, channel) > p_e_target:
            lo = mid
        else:
            hi = mid
    return hi


def simulated_pe_model(
    r: int, channel: BecChannel, trials: int = 20_000, seed: int = 0
):
    """Failure-probability curve n -> p_e estimated by ensemble simulation.

    Returns a memoizing callable; each blocklength gets its own seeded stream
    so the curve is deterministic and independent of evaluation order.
    """
    cache: dict[int, float] = {}

    def model(n: int) -> float:
        if n not in cache:
            rng = np.random.default_rng(np.random.SeedSequence((seed, n)))
            cache[n] = code_error_prob(r, n, channel, "monte_carlo", trials, rng)
        return cache[n]

    return model


# ---------------------------------------------------------------------------
# message packing
# ---------------------------------------------------------------------------

def pack_bins(bins: tuple[int, ...], widths: tuple[int, ...]) -> np.ndarray:
    """Concatenate bin indices into a bit word, MSB first per field."""
    if len(bins) != len(widths):
        raise ValueError("bins and widths must have equal length")
    out = []
    for value, width in zip(bins, widths):
        if not 0 <= value < (1 << width):
            raise ValueError(f"bin {value} does not fit in {width} bits")
        out.extend((value >> (width - 1 - b)) & 1 for b in range(width))
    return np.array(out, dtype=np.uint8)


def unpack_bins(bits: np.ndarray, widths: tuple[int, ...]) -> tuple[int, ...]:
    """Inverse of pack_bins."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[0] != sum(widths):
        raise ValueError(f"expected {sum(widths)} bits, got {bits.shape[0]}")
    vals = []
    pos = 0
    for width in widths:
        value = 0
        for _ in range(width):
            value = (value << 1) | int(bits[pos])
            pos += 1
        vals.append(value)
    return tuple(vals)
