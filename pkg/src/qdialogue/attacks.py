"""Eavesdropping strategies plugged into the channel tap points.

Every strategy sees the two legs of the travel qubit's round trip
(ping: Bob to Alice, pong: Alice to Bob) plus every public
announcement. A strategy may measure, transform, or substitute what is
in flight; whatever it learns goes into its per-dialogue record.

Implemented strategies:

* ``NoAttack`` -- pass-through; guesses are uniform noise.
* ``DisturbMeasure`` -- measures the travel qubit in the up/down basis
  on the pong leg (denial of service, no readout of message bits).
* ``DisturbPauliZ`` -- applies identity or the phase-flip Pauli, coin
  toss, on the pong leg.
* ``DisturbPauli4`` -- applies one of the four coded Paulis uniformly.
* ``InterceptResendLiteral`` -- keeps Bob's travel qubit, substitutes
  one half of her own entangled pair, reads Alice's code exactly via a
  Bell measurement on her pair, applies that code to the stored qubit
  and forwards it.
* ``InterceptResendBlind`` -- same interception and readout, but
  forwards the stored qubit untransformed (the attacker who cannot act
  on it in time).
* ``EntangleMeasure`` -- couples an ancilla to the travel qubit on the
  ping leg with weight beta2 and measures it on the pong leg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .quantum import (
    ALL_CODES,
    BitPair,
    apply_pauli,
    attach_ancilla,
    bell_measure,
    bell_state,
    entangling_probe,
    measure_z,
    tensor_product,
)

if TYPE_CHECKING:  # pragma: no cover
    from .protocol import Channel


@dataclass
class EveRunLog:
    """What Eve did and inferred during a single run."""

    run_index: int
    learned_alice: BitPair | None = None
    ancilla_outcome: int | None = None
    disturb_code: BitPair | None = None
    measured_bit: int | None = None
    alice_guess: BitPair | None = None
    bob_guess: BitPair | None = None


@dataclass
class EveRecord:
    """Per-dialogue record of strategy events, guesses, and hit counts."""

    strategy: str
    logs: list[EveRunLog] = field(default_factory=list)
    heard: list[tuple] = field(default_factory=list)
    alice_hits: int = 0
    bob_hits: int = 0
    guess_count: int = 0


@dataclass
class EveSession:
    """Mutable per-dialogue adversary state: the record plus scratch."""

    record: EveRecord
    current: EveRunLog | None = None
    stored_reg: str | None = None

    def score(self, alice_truth: BitPair, bob_truth: BitPair) -> None:
        """Tally the current run's guesses against the true message pairs."""
        log = self.current
        if log is None or log.alice_guess is None:
            return
        self.record.guess_count += 1
        self.record.alice_hits += log.alice_guess == alice_truth
        self.record.bob_hits += log.bob_guess == bob_truth


class AttackStrategy:
    """Base strategy: a pass-through adversary who still hears and guesses.

    Subclasses override the tap handlers; the guessing logic is shared,
    since every strategy falls back to a uniform pure guess when it
    holds no readout of Alice's code.
    """

    name = "none"

    def describe(self) -> dict:
        return {"name": self.name}

    def new_session(self) -> EveSession:
        return EveSession(record=EveRecord(strategy=self.name))

    def begin_run(self, session: EveSession, run_index: int) -> None:
        session.current = EveRunLog(run_index=run_index)
        session.stored_reg = None

    def on_ping(self, channel: "Channel", session: EveSession, rng: np.random.Generator) -> None:
        pass

    def on_pong(self, channel: "Channel", session: EveSession, rng: np.random.Generator) -> None:
        pass

    def hear(self, session: EveSession, announcements: list[tuple]) -> None:
        session.record.heard.extend(announcements)

    def guess(
        self, session: EveSession, outcome: BitPair, rng: np.random.Generator
    ) -> tuple[BitPair, BitPair]:
        """Infer both parties' pairs after a message-mode broadcast.

        A learned Alice code pins both guesses (the broadcast outcome is
        the XOR of the two codes); otherwise a pure guess is all there
        is.
        """
        log = session.current
        if log is not None and log.learned_alice is not None:
            alice_guess = log.learned_alice
            bob_guess = outcome ^ alice_guess
        else:
            bits = rng.integers(0, 2, size=4)
            alice_guess = BitPair(int(bits[0]), int(bits[1]))
            bob_guess = BitPair(int(bits[2]), int(bits[3]))
        if log is not None:
            log.alice_guess = alice_guess
            log.bob_guess = bob_guess
        return alice_guess, bob_guess

    def end_run(self, session: EveSession) -> None:
        if session.current is not None:
            session.record.logs.append(session.current)
        session.current = None


class NoAttack(AttackStrategy):
    """Explicit no-op strategy (identical to the base class)."""


class DisturbMeasure(AttackStrategy):
    name = "disturb-measure"

    def on_pong(self, channel, session, rng):
        bit, collapsed = measure_z(channel.state, channel.traveling, rng)
        channel.state = collapsed
        session.current.measured_bit = bit


class DisturbPauliZ(AttackStrategy):
    name = "disturb-pauli-z"

    def on_pong(self, channel, session, rng):
        code = BitPair(1, 1) if rng.random() < 0.5 else BitPair(0, 0)
        channel.state = apply_pauli(channel.state, channel.traveling, code)
        session.current.disturb_code = code


class DisturbPauli4(AttackStrategy):
    name = "disturb-pauli-4"

    def on_pong(self, channel, session, rng):
        code = ALL_CODES[int(rng.integers(4))]
        channel.state = apply_pauli(channel.state, channel.traveling, code)
        session.current.disturb_code = code


class _InterceptResend(AttackStrategy):
    """Shared interception mechanics; subclasses decide the forwarding."""

    retransform = True

    def on_ping(self, channel, session, rng):
        # Keep the genuine travel qubit, put one half of a fresh
        # maximally entangled pair (H home, T travel) on the wire.
        session.stored_reg = channel.traveling
        channel.state = tensor_product(channel.state, bell_state(BitPair(0, 0), regs=("H", "T")))
        channel.traveling = "T"

    def on_pong(self, channel, session, rng):
        learned, collapsed = bell_measure(channel.state, "H", "T", rng)
        session.current.learned_alice = learned
        state = collapsed
        if self.retransform:
            state = apply_pauli(state, session.stored_reg, learned)
        channel.state = state
        channel.traveling = session.stored_reg


class InterceptResendLiteral(_InterceptResend):
    name = "intercept-resend-literal"
    retransform = True


class InterceptResendBlind(_InterceptResend):
    name = "intercept-resend-blind"
    retransform = False


class EntangleMeasure(AttackStrategy):
    name = "entangle-measure"

    def __init__(self, beta2: float):
        if not 0.0 <= beta2 <= 0.5:
            raise ValueError(f"beta2 must lie in [0, 0.5], got {beta2}")
        self.beta2 = float(beta2)
        self.alpha = math.sqrt(1.0 - self.beta2)
        self.beta = math.sqrt(self.beta2)

    def describe(self) -> dict:
        return {"name": self.name, "beta2": self.beta2}

    def on_ping(self, channel, session, rng):
        state = attach_ancilla(channel.state, "e")
        channel.state = entangling_probe(state, channel.traveling, "e", self.alpha, self.beta)

    def on_pong(self, channel, session, rng):
        bit, collapsed = measure_z(channel.state, "e", rng)
        channel.state = collapsed
        session.current.ancilla_outcome = bit


STRATEGY_NAMES = (
    "none",
    "disturb-measure",
    "disturb-pauli-z",
    "disturb-pauli-4",
    "intercept-resend-literal",
    "intercept-resend-blind",
    "entangle-measure",
)

_BY_NAME = {
    "none": NoAttack,
    "disturb-measure": DisturbMeasure,
    "disturb-pauli-z": DisturbPauliZ,
    "disturb-pauli-4": DisturbPauli4,
    "intercept-resend-literal": InterceptResendLiteral,
    "intercept-resend-blind": InterceptResendBlind,
}


def strategy_from_name(name: str, beta2: float | None = None) -> AttackStrategy:
    """Instantiate a strategy by its registry name.

    beta2 is required for entangle-measure and rejected for everything
    else.
    """
    if name == "entangle-measure":
        if beta2 is None:
            raise ValueError("entangle-measure requires beta2")
        return EntangleMeasure(beta2)
    if name not in _BY_NAME:
        raise ValueError(f"unknown attack strategy {name!r}; known: {STRATEGY_NAMES}")
    if beta2 is not None:
        raise ValueError(f"beta2 only applies to entangle-measure, not {name!r}")
    return _BY_NAME[name]()
