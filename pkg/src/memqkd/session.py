"""Orchestration of many memory cycles into a QKD or CHSH session.

Two statistically equivalent execution paths are provided. The reference
path runs `run_memory_cycle` slot by slot on density matrices and is the
ground truth for small diagnostic runs. The fast path exploits that
cycles are independent and that only cycles with exactly two heralds
produce records: the number of heralds per cycle is multinomial over
{0, 1, 2, >=3}, and conditioned on two heralds the slot positions are a
uniform pair, the dephasing count is binomial, and the spin coherence at
readout has a closed form. Sampling those sufficient statistics directly
is exact, so billions of cycles cost only as much as the few that herald
twice.

Both paths are deterministic for a fixed seed. Shards draw from seeds
derived as (seed, shard_index) and merge by tally addition, which is
order independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bsm import (
    ChannelConfig,
    SequenceConfig,
    conjugate_label,
    run_memory_cycle_traced,
)
from .qubits import BASIS_ANGLE, NoiseParams, TimeBinQubit

BASES = ("X", "Y", "A", "B")
_BASIS_INDEX = {b: i for i, b in enumerate(BASES)}
_ANGLES = np.array([BASIS_ANGLE[b] for b in BASES])
# Conjugation phi -> -phi: X fixed, Y sign flip, A <-> B with sign flip.
_CONJ_BASIS = np.array([0, 1, 3, 2])

_DETAIL_CHUNK = 1 << 20


class EmptyCellError(RuntimeError):
    """A statistic required a coincidence cell that has no counts."""


@dataclass(frozen=True)
class PartyConfig:
    """State generation policy for Alice and Bob.

    mode:        "qkd" draws from {+-x, +-y}, "chsh" from all four bases
    basis_bias:  probability of choosing X in qkd mode (0.5 = unbiased)
    assignment:  how qubit slots map to senders. "random" assigns each
                 slot to Alice or Bob with equal probability, "alternating"
                 by slot parity. "single" models one transmitter playing
                 both parties (the benchtop emulation); every coincidence
                 is then key-eligible.
    """

    mode: str = "qkd"
    basis_bias: float = 0.5
    assignment: str = "random"

    def __post_init__(self) -> None:
        if self.mode not in ("qkd", "chsh"):
            raise ValueError(f"mode must be 'qkd' or 'chsh', got {self.mode!r}")
        if not 0 <= self.basis_bias <= 1:
            raise ValueError(f"basis_bias must lie in [0, 1], got {self.basis_bias}")
        if self.assignment not in ("random", "alternating", "single"):
            raise ValueError(
                "assignment must be 'random', 'alternating' or 'single', "
                f"got {self.assignment!r}"
            )

    @property
    def state_set(self) -> tuple[str, ...]:
        return ("X", "Y") if self.mode == "qkd" else ("X", "Y", "A", "B")


@dataclass
class CoincidenceTally:
    """Coincidence counts indexed by (basisA, signA, basisB, signB, parity).

    Index convention: bases X, Y, A, B -> 0..3; sign +1 -> 0, -1 -> 1;
    parity +1 -> 0, -1 -> 1. `counts` holds key-eligible records (one
    herald from each party, or every record in single-sender mode);
    `excluded` holds same-party double heralds, which are tallied but
    never sifted into the key.
    """

    counts: np.ndarray = field(
        default_factory=lambda: np.zeros((4, 2, 4, 2, 2), dtype=np.int64)
    )
    excluded: np.ndarray = field(
        default_factory=lambda: np.zeros((4, 2, 4, 2, 2), dtype=np.int64)
    )

    def total(self) -> int:
        return int(self.counts.sum() + self.excluded.sum())

    def key_eligible(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "CoincidenceTally") -> "CoincidenceTally":
        return CoincidenceTally(
            counts=self.counts + other.counts,
            excluded=self.excluded + other.excluded,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoincidenceTally):
            return NotImplemented
        return np.array_equal(self.counts, other.counts) and np.array_equal(
            self.excluded, other.excluded
        )


@dataclass(frozen=True)
class TimingOverheads:
    """Experimental downtime folded into the clock-rate estimate.

    Defaults: the interferometer is locked for 200 ms out of every
    200 ms experiment block (halving the duty cycle), each memory cycle
    ends with a 30 us readout, and feedback initialization plus the
    automated relock procedure leave about half of the remaining time,
    calibrated to the observed 1.2 MHz qubit clock rate at N = 248.
    """

    lock_s: float = 0.2
    block_s: float = 0.2
    readout_s: float = 30e-6
    duty_factor: float = 0.5

    def __post_init__(self) -> None:
        if min(self.lock_s, self.block_s, self.readout_s) < 0:
            raise ValueError("timing overheads must be non-negative")
        if not 0 < self.duty_factor <= 1:
            raise ValueError(f"duty_factor must lie in (0, 1], got {self.duty_factor}")
        if self.lock_s > 0 and self.block_s <= 0:
            raise ValueError("block_s must be positive when lock_s > 0")

    @classmethod
    def zero(cls) -> "TimingOverheads":
        return cls(lock_s=0.0, block_s=1.0, readout_s=0.0, duty_factor=1.0)


@dataclass(frozen=True)
class ChannelAccounting:
    """Channel-use bookkeeping for one session.

    A full channel use corresponds to one photon from each party, i.e.
    two qubit slots; each slot on its own occupies one half-link, so the
    rate per occupancy is half the rate per use.
    """

    uses: float
    occupancies: float
    wall_clock_s: float
    clock_rate_hz: float


def channel_accounting(
    seq: SequenceConfig,
    cycles: int,
    overheads: TimingOverheads | None = None,
) -> ChannelAccounting:
    if cycles < 0:
        raise ValueError(f"cycles must be non-negative, got {cycles}")
    ov = overheads if overheads is not None else TimingOverheads()
    n = seq.n_qubits
    lock_factor = 1.0 + (ov.lock_s / ov.block_s if ov.lock_s > 0 else 0.0)
    wall = cycles * (seq.cycle_duration_s() + ov.readout_s) * lock_factor / ov.duty_factor
    rate = (n * cycles / wall) if wall > 0 else 0.0
    return ChannelAccounting(
        uses=n * cycles / 2.0,
        occupancies=float(n * cycles),
        wall_clock_s=wall,
        clock_rate_hz=rate,
    )


@dataclass
class SessionReport:
    """Summary counters of one session."""

    cycles: int
    n_slots: int
    heralds: int
    coincidences: int          # cycles with exactly two heralds
    discarded_multi: int       # cycles spoiled by a third herald
    same_party: int            # coincidences excluded from the key
    sifted_xx: int
    errors_xx: int
    sifted_yy: int
    errors_yy: int
    channel_uses: float
    channel_occupancies: float
    wall_clock_s: float
    clock_rate_hz: float

    @property
    def sifted(self) -> int:
        return self.sifted_xx + self.sifted_yy

    @property
    def errors(self) -> int:
        return self.errors_xx + self.errors_yy

    def sifted_rate_per_use(self) -> float:
        return self.sifted / self.channel_uses if self.channel_uses else 0.0

    def sifted_rate_per_occupancy(self) -> float:
        return self.sifted / self.channel_occupancies if self.channel_occupancies else 0.0


@dataclass(frozen=True)
class QberCell:
    """Error tally of one (basis, signA, signB) combination."""

    basis: str
    sign_a: int
    sign_b: int
    n: int
    errors: int


@dataclass(frozen=True)
class SiftCounts:
    """Same-basis coincidences kept for the key, with error counts."""

    xx: tuple[int, int]  # (sifted, errors)
    yy: tuple[int, int]
    cells: tuple[QberCell, ...]

    @property
    def sifted(self) -> int:
        return self.xx[0] + self.yy[0]

    @property
    def errors(self) -> int:
        return self.xx[1] + self.yy[1]


def _expected_parity_index(basis_idx: int, sign_a: int, sign_b: int) -> int:
    # Same-basis rule from the truth table: X pairs correlate with the
    # sign product, Y pairs anticorrelate.
    expected = sign_a * sign_b * (1 if basis_idx == 0 else -1)
    return 0 if expected == 1 else 1


def sift(tally: CoincidenceTally) -> SiftCounts:
    """Keep XX and YY coincidences and count truth-table violations."""
    cells = []
    per_basis = {}
    for b_idx, basis in ((0, "X"), (1, "Y")):
        n_basis = 0
        k_basis = 0
        for ia, sign_a in ((0, 1), (1, -1)):
            for ib, sign_b in ((0, 1), (1, -1)):
                pair = tally.counts[b_idx, ia, b_idx, ib]
                n = int(pair.sum())
                bad = 1 - _expected_parity_index(b_idx, sign_a, sign_b)
                k = int(pair[bad])
                cells.append(QberCell(basis, sign_a, sign_b, n, k))
                n_basis += n
                k_basis += k
        per_basis[basis] = (n_basis, k_basis)
    return SiftCounts(xx=per_basis["X"], yy=per_basis["Y"], cells=tuple(cells))


_CHSH_TERMS = (("X", "A"), ("X", "B"), ("Y", "A"), ("Y", "B"))


def chsh_statistic(
    tally: CoincidenceTally, parity: int = 1
) -> tuple[dict[str, float], float]:
    """CHSH combination of input correlations conditioned on a parity.

    Each term <A.B> averages the sign product over coincidences whose
    bases are 45 or 135 degrees apart, pooled over which party used
    which basis. S = |<AB>_xa - <AB>_xb - <AB>_ya - <AB>_yb|.
    """
    if parity not in (1, -1):
        raise ValueError(f"parity must be +1 or -1, got {parity}")
    p_idx = 0 if parity == 1 else 1
    terms: dict[str, float] = {}
    total = 0.0
    for b1, b2 in _CHSH_TERMS:
        i1, i2 = _BASIS_INDEX[b1], _BASIS_INDEX[b2]
        pooled = tally.counts[i1, :, i2, :, p_idx] + tally.counts[i2, :, i1, :, p_idx].T
        n = int(pooled.sum())
        if n == 0:
            raise EmptyCellError(
                f"no coincidences in basis pair {b1}{b2} with parity {parity:+d}"
            )
        signs = np.array([[1, -1], [-1, 1]])
        value = float((pooled * signs).sum() / n)
        key = (b1 + b2).lower()
        terms[key] = value
        total += value if key == "xa" else -value
    return terms, abs(total)


def _herald_count_pmf(n_slots: int, p: float) -> tuple[float, float, float, float]:
    """Probabilities of 0, 1, 2 and >=3 heralds among the slots."""
    q = 1.0 - p
    p0 = q**n_slots
    p1 = n_slots * p * q ** (n_slots - 1) if n_slots >= 1 else 0.0
    p2 = (
        math.comb(n_slots, 2) * p**2 * q ** (n_slots - 2) if n_slots >= 2 else 0.0
    )
    p3 = max(0.0, 1.0 - p0 - p1 - p2)
    return p0, p1, p2, p3


def _sample_tail_heralds(
    rng: np.random.Generator, n_slots: int, p: float, size: int
) -> int:
    """Total heralds in `size` cycles conditioned on at least three."""
    if size == 0:
        return 0
    q = 1.0 - p
    ks, ws = [], []
    pk = math.comb(n_slots, 3) * p**3 * q ** (n_slots - 3) if n_slots >= 3 else 0.0
    k = 3
    while k <= n_slots and (pk > 0.0):
        ks.append(k)
        ws.append(pk)
        k += 1
        if k > n_slots:
            break
        pk *= (n_slots - k + 1) / k * (p / q) if q > 0 else 0.0
        if ws and pk < ws[0] * 1e-12:
            break
    if not ks:
        return 3 * size
    w = np.array(ws) / np.sum(ws)
    draws = rng.choice(np.array(ks), size=size, p=w)
    return int(draws.sum())


def _draw_state_labels(
    rng: np.random.Generator, parties: PartyConfig, size: int
) -> tuple[np.ndarray, np.ndarray]:
    """Basis indices and sign indices for `size` photons."""
    if parties.mode == "qkd":
        basis = np.where(rng.random(size) < parties.basis_bias, 0, 1)
    else:
        basis = rng.integers(0, 4, size=size)
    sign = rng.integers(0, 2, size=size)  # 0 -> +1, 1 -> -1
    return basis.astype(np.int64), sign.astype(np.int64)


def _apply_frame_labels(
    basis: np.ndarray, sign: np.ndarray, window_odd: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Relabel photons sent in odd windows by the conjugated state."""
    new_basis = np.where(window_odd, _CONJ_BASIS[basis], basis)
    flip = window_odd & (basis != 0)
    new_sign = np.where(flip, 1 - sign, sign)
    return new_basis, new_sign


def _born_outcomes(
    rng: np.random.Generator,
    phi1: np.ndarray,
    phi2: np.ndarray,
    frame: np.ndarray,
    n_scatters: np.ndarray,
    noise: NoiseParams,
    n_pi: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample (m1, m2, m3) for coincidence cycles, in closed form.

    The leakage biases the herald outcome distribution but leaves the
    spin populations balanced, so each detector probability depends only
    on its photon phase. The spin coherence at readout is the product of
    one factor g per herald, with every pi pulse between the heralds
    conjugating the accumulated coherence; dephasing contributions are
    real scalars and commute with everything, so only their count matters.
    """
    k = len(phi1)
    eps = noise.eps_leak
    one = 1.0 + eps * eps

    pm1 = (one + 2.0 * eps * np.cos(phi1)) / (2.0 * one)
    m1 = np.where(rng.random(k) < pm1, 1, -1)
    pm2 = (one + 2.0 * eps * np.cos(phi2)) / (2.0 * one)
    m2 = np.where(rng.random(k) < pm2, 1, -1)

    g1 = (m1 * np.exp(-1j * phi1) + 2.0 * eps + eps * eps * m1 * np.exp(1j * phi1)) / (
        one + 2.0 * eps * m1 * np.cos(phi1)
    )
    g2 = (m2 * np.exp(-1j * phi2) + 2.0 * eps + eps * eps * m2 * np.exp(1j * phi2)) / (
        one + 2.0 * eps * m2 * np.cos(phi2)
    )
    c = 0.5 * (2.0 * noise.f_init - 1.0) * g1
    c = np.where(frame == 1, np.conj(c), c)
    c = c * g2
    deph = (1.0 - 2.0 * noise.p_mw) ** n_pi
    deph = deph * (1.0 - 2.0 * noise.p_scatter_dephase) ** n_scatters
    p_plus = np.clip(0.5 + np.real(c) * deph, 0.0, 1.0)
    m3 = np.where(rng.random(k) < p_plus, 1, -1)
    flip = rng.random(k) < (1.0 - noise.f_readout)
    m3 = np.where(flip, -m3, m3)
    return m1, m2, m3


def forced_coincidence_outcomes(
    seq: SequenceConfig,
    noise: NoiseParams,
    qubit_a: TimeBinQubit,
    qubit_b: TimeBinQubit,
    slots: tuple[int, int],
    trials: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Monte Carlo drill with heralds forced at a fixed slot pair.

    Returns trial-wise (m1, m2, m3) and the frame parity implied by the
    slot positions. Random photon arrivals (and hence scatter dephasing)
    are suppressed, exactly like run_memory_cycle with forced slots.
    """
    slot_i, slot_j = slots
    if not 0 <= slot_i < slot_j < seq.n_qubits:
        raise ValueError(f"forced slots {slots} out of range")
    frame_parity = (seq.window_of(slot_j) - seq.window_of(slot_i)) % 2
    rng = np.random.default_rng(seed)
    phi1 = np.full(trials, qubit_a.phase)
    phi2 = np.full(trials, qubit_b.phase)
    frame = np.full(trials, frame_parity)
    m1, m2, m3 = _born_outcomes(
        rng, phi1, phi2, frame, np.zeros(trials, dtype=np.int64), noise, seq.n_pi
    )
    return m1, m2, m3, frame_parity


@dataclass
class _ShardResult:
    tally: CoincidenceTally
    cycles: int
    heralds: int
    coincidences: int
    discarded: int
    same_party: int


def _run_shard_fast(
    seq: SequenceConfig,
    chan: ChannelConfig,
    parties: PartyConfig,
    noise: NoiseParams,
    cycles: int,
    rng: np.random.Generator,
    frame_correction: bool,
) -> _ShardResult:
    n = seq.n_qubits
    a_h = chan.n_p * noise.eta_detect
    a_s = chan.n_p * (1.0 - noise.eta_detect)
    if chan.n_p > 1.0:
        raise ValueError(f"n_p = {chan.n_p} exceeds 1; not a valid slot probability")

    pmf = np.array(_herald_count_pmf(n, a_h))
    _, n1, n2, n3 = rng.multinomial(cycles, pmf / pmf.sum())
    heralds = int(n1) + 2 * int(n2) + _sample_tail_heralds(rng, n, a_h, int(n3))

    tally = CoincidenceTally()
    same_party = 0
    scatter_cond = a_s / (1.0 - a_h) if a_h < 1.0 else 0.0

    remaining = int(n2)
    while remaining > 0:
        k = min(remaining, _DETAIL_CHUNK)
        remaining -= k

        # Herald positions: a uniform pair of distinct slots, ordered.
        first = rng.integers(0, n, size=k)
        second = rng.integers(0, n, size=k)
        clash = first == second
        while clash.any():
            second[clash] = rng.integers(0, n, size=int(clash.sum()))
            clash = first == second
        lo = np.minimum(first, second)
        hi = np.maximum(first, second)
        w_lo = lo // seq.n_sub
        w_hi = hi // seq.n_sub
        frame = ((w_hi - w_lo) % 2).astype(np.int64)

        if parties.assignment == "random":
            party1 = rng.integers(0, 2, size=k)
            party2 = rng.integers(0, 2, size=k)
        elif parties.assignment == "alternating":
            party1 = lo % 2
            party2 = hi % 2
        else:
            party1 = np.zeros(k, dtype=np.int64)
            party2 = np.zeros(k, dtype=np.int64)

        b1, s1 = _draw_state_labels(rng, parties, k)
        b2, s2 = _draw_state_labels(rng, parties, k)
        phi1 = _ANGLES[b1] + np.pi * s1
        phi2 = _ANGLES[b2] + np.pi * s2

        n_sc = rng.binomial(n - 2, scatter_cond, size=k) if n > 2 else np.zeros(k, int)

        m1, m2, m3 = _born_outcomes(rng, phi1, phi2, frame, n_sc, noise, seq.n_pi)
        parity_idx = np.where(m1 * m2 * m3 == 1, 0, 1).astype(np.int64)

        if frame_correction:
            b1, s1 = _apply_frame_labels(b1, s1, (w_lo % 2).astype(bool))
            b2, s2 = _apply_frame_labels(b2, s2, (w_hi % 2).astype(bool))

        if parties.assignment == "single":
            eligible = np.ones(k, dtype=bool)
        else:
            eligible = party1 != party2
        same_party += int(k - eligible.sum())

        # Orient cross-party records so the first index is Alice's photon.
        swap = eligible & (party1 == 1)
        b1s, s1s = np.where(swap, b2, b1), np.where(swap, s2, s1)
        b2s, s2s = np.where(swap, b1, b2), np.where(swap, s1, s2)

        flat = np.ravel_multi_index(
            (b1s, s1s, b2s, s2s, parity_idx), tally.counts.shape
        )
        np.add.at(tally.counts.reshape(-1), flat[eligible], 1)
        np.add.at(tally.excluded.reshape(-1), flat[~eligible], 1)

    return _ShardResult(
        tally=tally,
        cycles=cycles,
        heralds=heralds,
        coincidences=int(n2),
        discarded=int(n3),
        same_party=same_party,
    )


def _run_shard_reference(
    seq: SequenceConfig,
    chan: ChannelConfig,
    parties: PartyConfig,
    noise: NoiseParams,
    cycles: int,
    seed_prefix: tuple[int, ...],
    frame_correction: bool,
) -> _ShardResult:
    n = seq.n_qubits
    tally = CoincidenceTally()
    heralds = coincidences = discarded = same_party = 0

    for idx in range(cycles):
        rng = np.random.default_rng(list(seed_prefix) + [idx])
        basis, sign = _draw_state_labels(rng, parties, n)
        if parties.assignment == "random":
            party = rng.integers(0, 2, size=n)
        elif parties.assignment == "alternating":
            party = np.arange(n) % 2
        else:
            party = np.zeros(n, dtype=np.int64)

        def source(slot: int) -> TimeBinQubit:
            return TimeBinQubit(BASES[basis[slot]], 1 if sign[slot] == 0 else -1)

        record, trace = run_memory_cycle_traced(seq, chan, source, noise, rng)
        heralds += trace.heralds
        if trace.discarded:
            discarded += 1
            continue
        if record is None:
            continue
        coincidences += 1

        labels = []
        for slot in (record.slot_i, record.slot_j):
            b, s = BASES[basis[slot]], 1 if sign[slot] == 0 else -1
            if frame_correction and seq.window_of(slot) % 2 == 1:
                b, s = conjugate_label(b, s)
            labels.append((b, s))
        (b1, s1), (b2, s2) = labels
        p1, p2 = int(party[record.slot_i]), int(party[record.slot_j])

        eligible = parties.assignment == "single" or p1 != p2
        if eligible and p1 == 1:
            (b1, s1), (b2, s2) = (b2, s2), (b1, s1)
        target = tally.counts if eligible else tally.excluded
        if not eligible:
            same_party += 1
        target[
            _BASIS_INDEX[b1],
            0 if s1 == 1 else 1,
            _BASIS_INDEX[b2],
            0 if s2 == 1 else 1,
            0 if record.parity == 1 else 1,
        ] += 1

    return _ShardResult(
        tally=tally,
        cycles=cycles,
        heralds=heralds,
        coincidences=coincidences,
        discarded=discarded,
        same_party=same_party,
    )


def simulate_session(
    seq: SequenceConfig,
    chan: ChannelConfig,
    parties: PartyConfig,
    noise: NoiseParams,
    cycles: int,
    seed: int,
    *,
    overheads: TimingOverheads | None = None,
    engine: str = "fast",
    shards: int = 1,
    frame_correction: bool = True,
) -> tuple[CoincidenceTally, SessionReport]:
    """Run `cycles` independent memory cycles and tally coincidences.

    Deterministic for fixed (seed, shards, engine): shard s draws from
    the derived seed (seed, s) and results merge by addition.
    """
    if cycles < 1:
        raise ValueError(f"cycles must be at least 1, got {cycles}")
    if shards < 1:
        raise ValueError(f"shards must be at least 1, got {shards}")
    if engine not in ("fast", "reference"):
        raise ValueError(f"engine must be 'fast' or 'reference', got {engine!r}")
    if not math.isclose(chan.n_p * seq.n_qubits, chan.n_m, rel_tol=1e-9, abs_tol=1e-300):
        raise ValueError(
            f"channel n_p = n_m/N mismatch: {chan.n_p} * {seq.n_qubits} != {chan.n_m}"
        )

    base = cycles // shards
    results = []
    for s in range(shards):
        shard_cycles = base + (cycles - base * shards if s == shards - 1 else 0)
        if shard_cycles == 0:
            continue
        if engine == "fast":
            rng = np.random.default_rng([seed, s])
            results.append(
                _run_shard_fast(seq, chan, parties, noise, shard_cycles, rng, frame_correction)
            )
        else:
            results.append(
                _run_shard_reference(
                    seq, chan, parties, noise, shard_cycles, (seed, s), frame_correction
                )
            )

    tally = CoincidenceTally()
    for r in results:
        tally = tally + r.tally

    counts = sift(tally)
    accounting = channel_accounting(seq, cycles, overheads)
    report = SessionReport(
        cycles=cycles,
        n_slots=seq.n_qubits,
        heralds=sum(r.heralds for r in results),
        coincidences=sum(r.coincidences for r in results),
        discarded_multi=sum(r.discarded for r in results),
        same_party=sum(r.same_party for r in results),
        sifted_xx=counts.xx[0],
        errors_xx=counts.xx[1],
        sifted_yy=counts.yy[0],
        errors_yy=counts.yy[1],
        channel_uses=accounting.uses,
        channel_occupancies=accounting.occupancies,
        wall_clock_s=accounting.wall_clock_s,
        clock_rate_hz=accounting.clock_rate_hz,
    )
    return tally, report
