"""The two-way dialogue state machine.

One run of the protocol: Bob prepares an entangled pair encoding his
current bit pair, keeps the home qubit and pings the travel qubit to
Alice; Alice encodes her pair on whatever qubit arrived and pongs it
back; Bob Bell-measures the pair he holds; Alice then announces whether
the run was message mode (MM) or control mode (CM). MM runs consume one
message pair per side and end with Bob broadcasting his Bell outcome so
both parties can decode. CM runs consume nothing: Alice reveals the
(non-message) pair she encoded and Bob checks it against his outcome,
exposing any channel tampering.

Mode is sampled by Alice before she encodes but announced only after
Bob's measurement, so MM and CM runs are indistinguishable on the wire.
An eavesdropper, when present, is invoked at exactly two tap points:
between Bob's send and Alice's receipt (ping) and between Alice's send
and Bob's receipt (pong).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .quantum import BitPair, StateVector, apply_pauli, bell_measure, bell_state

if TYPE_CHECKING:  # pragma: no cover
    from .attacks import AttackStrategy, EveRecord

MM = "MM"
CM = "CM"

TERMINAL = "terminal"
REINITIALIZE = "reinitialize"
DETECTION_POLICIES = (TERMINAL, REINITIALIZE)

COMPLETED = "completed"
DETECTED = "detected"
ABORTED = "aborted_max_restarts"


@dataclass(frozen=True)
class Message:
    """An even-length bit payload framed as ordered bit pairs."""

    pairs: tuple[BitPair, ...]
    padded: bool = False

    def __post_init__(self) -> None:
        if not self.pairs:
            raise ValueError("a message needs at least one bit pair")

    def __len__(self) -> int:
        return len(self.pairs)

    def to_bits(self) -> list[int]:
        """Recover the original bit sequence, dropping any pad bit."""
        bits = [b for pair in self.pairs for b in pair]
        return bits[:-1] if self.padded else bits


def frame_message(raw_bits: Sequence[int] | Iterable[int]) -> Message:
    """Pack a bit sequence into consecutive pairs.

    An odd-length input gets a trailing 0 pad, recorded on the message
    so ``to_bits`` stays an exact inverse.
    """
    bits = [int(b) for b in raw_bits]
    if not bits:
        raise ValueError("cannot frame an empty bit sequence")
    if any(b not in (0, 1) for b in bits):
        raise ValueError("message bits must be 0 or 1")
    padded = len(bits) % 2 == 1
    if padded:
        bits.append(0)
    pairs = tuple(BitPair(bits[i], bits[i + 1]) for i in range(0, len(bits), 2))
    return Message(pairs, padded=padded)


def random_message(n_pairs: int, rng: np.random.Generator) -> Message:
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    bits = rng.integers(0, 2, size=2 * n_pairs)
    return frame_message(bits.tolist())


def _random_pair(rng: np.random.Generator) -> BitPair:
    a, b = rng.integers(0, 2, size=2)
    return BitPair(int(a), int(b))


@dataclass(frozen=True)
class ProtocolConfig:
    """Dialogue parameters.

    c is the probability a run is sacrificed as a control run;
    n_pairs is the message half-length N (2N bits per direction);
    detection_policy chooses what a failed control check does: stop the
    dialogue (terminal) or restart it from the first pair
    (reinitialize), at most max_restarts times.
    """

    c: float
    n_pairs: int
    max_restarts: int = 0
    detection_policy: str = TERMINAL

    def __post_init__(self) -> None:
        if not 0.0 < self.c < 1.0:
            raise ValueError(f"c must lie strictly between 0 and 1, got {self.c}")
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be >= 0")
        if self.detection_policy not in DETECTION_POLICIES:
            raise ValueError(
                f"detection_policy must be one of {DETECTION_POLICIES}, "
                f"got {self.detection_policy!r}"
            )


def bob_prepare(code: BitPair) -> StateVector:
    """Bob's per-run state: the base pair with his code applied to the travel qubit."""
    return bell_state(code)


def alice_encode(state: StateVector, code: BitPair, traveling: str = "t") -> StateVector:
    """Alice's encoding on the qubit she received (whatever register that is)."""
    return apply_pauli(state, traveling, code)


def decode_counterpart(outcome: BitPair, own_code: BitPair) -> BitPair:
    """Read the other party's pair out of a Bell outcome: componentwise XOR."""
    return BitPair(*outcome) ^ BitPair(*own_code)


def cm_check(outcome: BitPair, bob_code: BitPair, alice_revealed: BitPair) -> bool:
    """Bob's control-run consistency test against Alice's revealed pair."""
    return BitPair(*outcome) == BitPair(*alice_revealed) ^ BitPair(*bob_code)


@dataclass
class Channel:
    """What is in flight: the joint state and the register currently traveling."""

    state: StateVector
    traveling: str


@dataclass(frozen=True)
class RunRecord:
    """One protocol run as it appears in the transcript.

    ``channel_events`` is the hidden quantum-channel log; everything a
    third party can see is in ``announcements``. The mode appears only
    there, never in the channel log.
    """

    index: int
    pass_index: int
    mode: str
    bob_code: BitPair
    alice_code: BitPair
    outcome: BitPair
    cm_pass: bool | None
    channel_events: tuple[str, ...]
    announcements: tuple[tuple, ...]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "pass_index": self.pass_index,
            "mode": self.mode,
            "bob_code": list(self.bob_code),
            "alice_code": list(self.alice_code),
            "outcome": list(self.outcome),
            "cm_pass": self.cm_pass,
            "channel_events": list(self.channel_events),
            "announcements": [list(a) for a in self.announcements],
        }


@dataclass
class Transcript:
    """Ordered run log plus counters for the final (post-restart) pass."""

    runs: list[RunRecord]
    n_total: int
    n_mm: int
    n_cm: int
    restart_count: int
    final_status: str

    def to_dict(self) -> dict:
        return {
            "runs": [r.to_dict() for r in self.runs],
            "n_total": self.n_total,
            "n_mm": self.n_mm,
            "n_cm": self.n_cm,
            "restart_count": self.restart_count,
            "final_status": self.final_status,
        }

    def cm_tally(self) -> tuple[int, int]:
        """(failed, total) control runs across every pass."""
        cm = [r for r in self.runs if r.mode == CM]
        return sum(1 for r in cm if r.cm_pass is False), len(cm)


@dataclass
class DialogueResult:
    """Outcome of one dialogue: transcript, both decoded payloads, Eve's record."""

    transcript: Transcript
    alice_decoded: Message | None
    bob_decoded: Message | None
    eve: "EveRecord | None"


def run_dialogue(
    config: ProtocolConfig,
    alice_msg: Message,
    bob_msg: Message,
    attack: "AttackStrategy | None" = None,
    rng: np.random.Generator | None = None,
) -> DialogueResult:
    """Execute runs until the dialogue completes, detects Eve, or gives up.

    Both messages must have half-length equal to ``config.n_pairs``. The
    supplied random stream is split into independent protocol and
    adversary streams, so an attack that draws no randomness leaves the
    protocol's sampling byte-identical to the attack-free case.
    """
    if len(alice_msg) != len(bob_msg):
        raise ValueError(
            f"messages must have equal half-length, got {len(alice_msg)} and {len(bob_msg)}"
        )
    if len(alice_msg) != config.n_pairs:
        raise ValueError(
            f"config.n_pairs = {config.n_pairs} but messages have {len(alice_msg)} pairs"
        )
    if rng is None:
        rng = np.random.default_rng()
    proto_rng, eve_rng = rng.spawn(2)

    session = attack.new_session() if attack is not None else None
    runs: list[RunRecord] = []
    alice_decoded: list[BitPair] = []
    bob_decoded: list[BitPair] = []
    cursor = 0
    pass_index = 0
    pass_mm = pass_cm = 0
    restart_count = 0
    status: str | None = None

    while status is None:
        run_index = len(runs)
        if attack is not None:
            attack.begin_run(session, run_index)

        bob_code = bob_msg.pairs[cursor]
        channel = Channel(state=bob_prepare(bob_code), traveling="t")
        events = ["ping"]
        if attack is not None:
            attack.on_ping(channel, session, eve_rng)

        # Alice decides the mode now but announces it only after Bob's
        # measurement. Control runs encode a throwaway random pair, so a
        # revealed pair never carries message content.
        is_cm = proto_rng.random() < config.c
        alice_code = _random_pair(proto_rng) if is_cm else alice_msg.pairs[cursor]
        channel.state = alice_encode(channel.state, alice_code, channel.traveling)
        events.append("pong")
        if attack is not None:
            attack.on_pong(channel, session, eve_rng)

        outcome, _ = bell_measure(channel.state, "h", channel.traveling, proto_rng)

        mode = CM if is_cm else MM
        announcements: list[tuple] = [("mode", mode)]
        cm_pass: bool | None = None
        if is_cm:
            pass_cm += 1
            announcements.append(("cm_reveal", alice_code.a, alice_code.b))
            cm_pass = cm_check(outcome, bob_code, alice_code)
        else:
            pass_mm += 1
            announcements.append(("bell_broadcast", outcome.a, outcome.b))
            bob_decoded.append(decode_counterpart(outcome, bob_code))
            alice_decoded.append(decode_counterpart(outcome, alice_code))

        if attack is not None:
            attack.hear(session, announcements)
            if not is_cm:
                attack.guess(session, outcome, eve_rng)
                session.score(alice_truth=alice_code, bob_truth=bob_code)
            attack.end_run(session)

        runs.append(
            RunRecord(
                index=cursor,
                pass_index=pass_index,
                mode=mode,
                bob_code=bob_code,
                alice_code=alice_code,
                outcome=outcome,
                cm_pass=cm_pass,
                channel_events=tuple(events),
                announcements=tuple(announcements),
            )
        )

        if is_cm:
            if not cm_pass:
                if config.detection_policy == TERMINAL:
                    status = DETECTED
                elif restart_count >= config.max_restarts:
                    status = ABORTED
                else:
                    restart_count += 1
                    pass_index += 1
                    cursor = 0
                    pass_mm = pass_cm = 0
                    alice_decoded.clear()
                    bob_decoded.clear()
        else:
            cursor += 1
            if cursor == config.n_pairs:
                status = COMPLETED

    transcript = Transcript(
        runs=runs,
        n_total=pass_mm + pass_cm,
        n_mm=pass_mm,
        n_cm=pass_cm,
        restart_count=restart_count,
        final_status=status,
    )
    return DialogueResult(
        transcript=transcript,
        alice_decoded=Message(tuple(alice_decoded), padded=bob_msg.padded) if alice_decoded else None,
        bob_decoded=Message(tuple(bob_decoded), padded=alice_msg.padded) if bob_decoded else None,
        eve=session.record if session is not None else None,
    )
