"""Four-phase BB84 with a single detector at the receiver.

Alice encodes a bit in one of two phase bases, {0, pi} or {pi/2, 3pi/2};
Bob applies one of the same four phases and watches a single interferometer
output. A click in the matching basis means the phases agreed, so Bob keeps
the bit of his own phase. Phases are carried as quarter turns (0..3), which
makes ``phase = 2 * bit + basis``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import kernel
from .errors import InsufficientDataError, InvalidArgumentError, ProtocolDesyncError
from .optics import QberEstimate, calibrate_excess_error

QBER_THRESHOLD = 0.115
DEFAULT_DISCLOSE_FRACTION = 0.10
BLOCK_SIZE = 1 << 20

_COS_QUARTER = (1.0, 0.0, -1.0, 0.0)


class Basis(enum.IntEnum):
    Z = 0  # phases {0, pi}
    X = 1  # phases {pi/2, 3pi/2}


class Phase(enum.IntEnum):
    ZERO = 0
    HALF_PI = 1
    PI = 2
    THREE_HALF_PI = 3

    @property
    def radians(self) -> float:
        return self.value * math.pi / 2


def encode(bit: int, basis: Basis | int) -> Phase:
    if bit not in (0, 1):
        raise InvalidArgumentError(f"bit must be 0 or 1, got {bit!r}")
    return Phase(2 * bit + int(Basis(basis)))


def decode(phase: Phase | int) -> tuple[int, Basis]:
    p = Phase(phase)
    return p.value >> 1, Basis(p.value & 1)


@dataclass(frozen=True)
class PulsePhysics:
    """Everything one pulse needs: source, channel, detector and noise terms."""

    mu: float
    transmittance: float
    efficiency: float
    visibility: float
    p_dark: float
    xtalk_click_prob: float = 0.0
    excess_error: float = 0.0

    def __post_init__(self):
        checks = [
            (self.mu >= 0, "mu"),
            (0 <= self.transmittance <= 1, "transmittance"),
            (0 < self.efficiency <= 1, "efficiency"),
            (0 < self.visibility <= 1, "visibility"),
            (0 <= self.p_dark < 1, "p_dark"),
            (0 <= self.xtalk_click_prob < 1, "xtalk_click_prob"),
            (0 <= self.excess_error <= 0.5, "excess_error"),
        ]
        bad = [name for ok, name in checks if not ok]
        if bad:
            raise InvalidArgumentError(f"pulse physics out of range: {', '.join(bad)}")

    @property
    def mean_detected(self) -> float:
        return self.mu * self.transmittance * self.efficiency


def signal_click_prob(dphase: int, phys: PulsePhysics) -> float:
    """Click probability from the signal alone at phase difference ``dphase`` quarter turns."""
    arg = phys.mean_detected * (1.0 + phys.visibility * _COS_QUARTER[dphase % 4]) / 2.0
    return -math.expm1(-arg)


def click_thresholds(phys: PulsePhysics) -> np.ndarray:
    """Cumulative click partition per phase difference, shape (4, 3).

    One uniform u decides a pulse: u < s is a signal click, then the
    crosstalk slice (1 - s) x, then the dark slice (1 - s)(1 - x) d.
    """
    out = np.empty((4, 3))
    x, d = phys.xtalk_click_prob, phys.p_dark
    for k in range(4):
        s = signal_click_prob(k, phys)
        out[k, 0] = s
        out[k, 1] = s + (1.0 - s) * x
        out[k, 2] = out[k, 1] + (1.0 - s) * (1.0 - x) * d  # additive: no cancellation
    return out


def click_probability(sender: Phase | int, receiver: Phase | int, phys: PulsePhysics) -> float:
    """1 - (1 - p_dark)(1 - x) exp(-mu t eta (1 + V cos dphi) / 2)."""
    return float(click_thresholds(phys)[(int(sender) - int(receiver)) % 4, 2])


@dataclass(frozen=True)
class PulseOutcome:
    clicked: bool
    tag: int  # 0 when no click, otherwise a kernel TAG_* code


def simulate_pulse(
    sender: Phase | int, receiver: Phase | int, phys: PulsePhysics, rng: np.random.Generator
) -> PulseOutcome:
    """Single-pulse reference path; draws one click uniform and one flip uniform."""
    thr = click_thresholds(phys)[(int(sender) - int(receiver)) % 4]
    u, uf = rng.random(2)
    if not u < thr[2]:
        return PulseOutcome(False, 0)
    if u < thr[0]:
        tag = kernel.TAG_SIGNAL_FLIPPED if uf < phys.excess_error else kernel.TAG_SIGNAL
    elif u < thr[1]:
        tag = kernel.TAG_CROSSTALK
    else:
        tag = kernel.TAG_DARK
    return PulseOutcome(True, tag)


@dataclass(frozen=True)
class SessionExpectation:
    click_prob: float
    sifted_prob: float
    qber: QberEstimate


def session_expectation(phys: PulsePhysics) -> SessionExpectation:
    """Closed-form per-pulse statistics of the pulse model.

    Sender bit and basis and receiver phase are uniform, so each phase
    difference occurs with probability 1/4; matched bases leave 0 and pi
    with 1/2 each. A sifted bit is wrong when the phases differ by pi,
    unless an excess flip hits a signal click; noise clicks at 0 are right.
    """
    thr = click_thresholds(phys)
    click = float(thr[:, 2].mean())
    s0, spi = float(thr[0, 0]), float(thr[2, 0])
    matched_clicks = float(thr[0, 2] + thr[2, 2])
    eps = phys.excess_error
    x, d = phys.xtalk_click_prob, phys.p_dark
    vis = spi
    exc = eps * (s0 - spi)
    xt = (1.0 - spi) * x
    dk = (1.0 - spi) * (1.0 - x) * d
    if matched_clicks == 0:
        q = QberEstimate(0.5, 0.5, 0.0, 0.0, 0.0)
    else:
        q = QberEstimate(
            total=(vis + exc + xt + dk) / matched_clicks,
            dark=dk / matched_clicks,
            visibility=vis / matched_clicks,
            crosstalk=xt / matched_clicks,
            excess=exc / matched_clicks,
        )
    return SessionExpectation(click, 0.25 * matched_clicks, q)


def calibrate_session_excess(measured_qber: float, phys: PulsePhysics, label: str = "") -> float:
    """Excess error that makes the pulse model's sifted QBER equal ``measured_qber``."""

    def model(e: float) -> float:
        return session_expectation(_with_excess(phys, e)).qber.total

    return calibrate_excess_error(measured_qber, model, label=label)


def _with_excess(phys: PulsePhysics, e: float) -> PulsePhysics:
    return PulsePhysics(
        phys.mu, phys.transmittance, phys.efficiency, phys.visibility,
        phys.p_dark, phys.xtalk_click_prob, e,
    )


@dataclass(frozen=True)
class PulseRecord:
    index: int
    sender_phase: Phase
    receiver_phase: Phase
    clicked: bool
    tag: int = 0


@dataclass
class ClickLog:
    """Columnar record of the clicked time bins of one session."""

    index: np.ndarray
    sender_phase: np.ndarray
    receiver_phase: np.ndarray
    tag: np.ndarray

    def __len__(self) -> int:
        return int(self.index.size)

    def __iter__(self) -> Iterator[PulseRecord]:
        for i, s, r, t in zip(self.index, self.sender_phase, self.receiver_phase, self.tag):
            yield PulseRecord(int(i), Phase(int(s)), Phase(int(r)), True, int(t))

    @property
    def flipped(self) -> np.ndarray:
        return self.tag == kernel.TAG_SIGNAL_FLIPPED

    def sender_view(self) -> "SenderLog":
        return SenderLog(self.index, self.sender_phase)

    def receiver_view(self) -> "ReceiverLog":
        return ReceiverLog(
            self.index, self.receiver_phase, np.ones(self.index.size, dtype=bool), self.flipped
        )


@dataclass
class SenderLog:
    index: np.ndarray
    phase: np.ndarray


@dataclass
class ReceiverLog:
    index: np.ndarray
    phase: np.ndarray
    clicked: np.ndarray
    flipped: np.ndarray | None = None


def sift(sender: SenderLog, receiver: ReceiverLog) -> tuple[np.ndarray, np.ndarray]:
    """Keep clicked time bins where both sides used the same basis.

    Returns the sender's and receiver's bits for those bins. The receiver's
    bit is that of its own phase, inverted where an excess flip occurred.
    """
    si = np.asarray(sender.index)
    ri = np.asarray(receiver.index)
    if si.shape != ri.shape or not np.array_equal(si, ri):
        raise ProtocolDesyncError("sender and receiver records are not aligned by pulse index")
    if si.size > 1 and np.any(np.diff(si) <= 0):
        raise ProtocolDesyncError("pulse indices must be strictly increasing")
    sp = np.asarray(sender.phase, dtype=np.uint8)
    rp = np.asarray(receiver.phase, dtype=np.uint8)
    keep = np.asarray(receiver.clicked, dtype=bool) & ((sp & 1) == (rp & 1))
    a = (sp[keep] >> 1).astype(np.uint8)
    b = (rp[keep] >> 1).astype(np.uint8)
    if receiver.flipped is not None:
        b ^= np.asarray(receiver.flipped, dtype=np.uint8)[keep]
    return a, b


@dataclass(frozen=True)
class QberSample:
    disclosed_count: int
    error_count: int
    estimate: float
    positions: np.ndarray = field(repr=False, compare=False)


def estimate_qber(
    sender_bits: np.ndarray,
    receiver_bits: np.ndarray,
    disclose_fraction: float,
    rng: np.random.Generator,
) -> QberSample:
    """Publicly compare a random subset of sifted positions.

    At least one position is disclosed; ``positions`` lists the consumed
    indices in ascending order so the caller can drop them from the key.
    """
    a = np.asarray(sender_bits)
    b = np.asarray(receiver_bits)
    if a.shape != b.shape:
        raise ProtocolDesyncError("sifted keys differ in length")
    if a.size == 0:
        raise InsufficientDataError("cannot estimate QBER from an empty sifted key")
    if not 0 < disclose_fraction <= 1:
        raise InvalidArgumentError(f"disclose fraction must lie in (0, 1], got {disclose_fraction}")
    k = max(1, int(round(disclose_fraction * a.size)))
    pos = np.sort(rng.choice(a.size, size=k, replace=False))
    errors = int(np.count_nonzero(a[pos] != b[pos]))
    return QberSample(k, errors, errors / k, pos)


class Decision(str, enum.Enum):
    CONTINUE = "continue"
    ABORT = "abort"


def abort_check(qber: float, threshold: float = QBER_THRESHOLD) -> Decision:
    """Abort strictly above the threshold; a QBER equal to it is accepted."""
    return Decision.ABORT if qber > threshold else Decision.CONTINUE


class SessionStatus(str, enum.Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    ABORTED = "aborted"


@dataclass(frozen=True)
class SessionConfig:
    physics: PulsePhysics
    pulse_count: int
    seed: int | np.random.SeedSequence
    session_id: str = "session"
    src: int = 0
    dst: int = 1
    channel: object = None
    disclose_fraction: float = DEFAULT_DISCLOSE_FRACTION
    threshold: float = QBER_THRESHOLD


@dataclass
class SessionState:
    session_id: str
    src: int
    dst: int
    channel: object
    pulses: int
    log: ClickLog
    sender_sifted: np.ndarray
    receiver_sifted: np.ndarray
    qber_sample: QberSample | None
    sender_key: np.ndarray
    receiver_key: np.ndarray
    status: SessionStatus = SessionStatus.RUNNING

    @property
    def clicks(self) -> int:
        return len(self.log)

    @property
    def sifted(self) -> int:
        return int(self.sender_sifted.size)

    @property
    def sifted_errors(self) -> int:
        return int(np.count_nonzero(self.sender_sifted != self.receiver_sifted))

    @property
    def qber_measured(self) -> float:
        """Error fraction over the whole sifted key (known to the simulator only)."""
        return self.sifted_errors / self.sifted if self.sifted else float("nan")


def _child_sequences(seed, n: int) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [
        np.random.SeedSequence(entropy=ss.entropy, spawn_key=tuple(ss.spawn_key) + (i,))
        for i in range(n)
    ]


def transmit(
    phys: PulsePhysics,
    pulse_count: int,
    rng: np.random.Generator,
    process: Callable | None = None,
    block_size: int = BLOCK_SIZE,
) -> ClickLog:
    """Quantum phase of a session: draw and classify ``pulse_count`` pulses."""
    if pulse_count <= 0:
        raise InvalidArgumentError(f"pulse_count must be positive, got {pulse_count}")
    process = process or kernel.process_block
    thr = np.ascontiguousarray(click_thresholds(phys))
    parts = []
    done = 0
    while done < pulse_count:
        n = min(block_size, pulse_count - done)
        rbits = rng.integers(0, 16, size=n, dtype=np.uint8)
        u_click = rng.random(n)
        u_flip = rng.random(n)
        pos, sp, rp, tag = process(rbits, u_click, u_flip, thr, phys.excess_error)
        parts.append((pos + done, sp, rp, tag))
        done += n
    cols = [np.concatenate([p[i] for p in parts]) for i in range(4)]
    return ClickLog(cols[0].astype(np.int64), cols[1].astype(np.uint8),
                    cols[2].astype(np.uint8), cols[3].astype(np.uint8))


def run_session(config: SessionConfig, process: Callable | None = None) -> SessionState:
    """Transmit, sift, estimate QBER on a disclosed sample, then decide.

    The seed feeds two independent child streams: one for the pulses and
    one for the public disclosure choice, so post-processing never shifts
    the pulse randomness.
    """
    pulse_seq, post_seq = _child_sequences(config.seed, 2)
    log = transmit(
        config.physics, config.pulse_count, np.random.Generator(np.random.PCG64(pulse_seq)), process
    )
    a, b = sift(log.sender_view(), log.receiver_view())
    state = SessionState(
        session_id=config.session_id,
        src=config.src,
        dst=config.dst,
        channel=config.channel,
        pulses=config.pulse_count,
        log=log,
        sender_sifted=a,
        receiver_sifted=b,
        qber_sample=None,
        sender_key=a,
        receiver_key=b,
    )
    if a.size == 0:
        state.status = SessionStatus.COMPLETED
        return state
    sample = estimate_qber(
        a, b, config.disclose_fraction, np.random.Generator(np.random.PCG64(post_seq))
    )
    keep = np.ones(a.size, dtype=bool)
    keep[sample.positions] = False
    state.qber_sample = sample
    state.sender_key = a[keep]
    state.receiver_key = b[keep]
    decision = abort_check(sample.estimate, config.threshold)
    state.status = SessionStatus.ABORTED if decision is Decision.ABORT else SessionStatus.COMPLETED
    return state
