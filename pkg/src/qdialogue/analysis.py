"""Closed-form security quantities and statistics over simulated trials.

Three layers:

* exact formulas: the cumulative detection curves, their stopped-process
  resummation, and the probe-entropy bound;
* an exhaustive per-control-run detection oracle that enumerates all 16
  code pairs and every measurement/choice branch of a strategy with
  exact Born weights (no sampling, no protocol machinery);
* estimators over ``TrialReport`` batches with binomial standard errors,
  plus the leakage table comparing Eve's guess accuracy with the pure
  -guess baseline and the entropy bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .attacks import (
    AttackStrategy,
    DisturbMeasure,
    DisturbPauli4,
    DisturbPauliZ,
    EntangleMeasure,
    _InterceptResend,
)
from .protocol import DETECTED, MM, DialogueResult, Message
from .quantum import (
    ALL_CODES,
    BitPair,
    apply_pauli,
    attach_ancilla,
    bell_outcome_probs,
    bell_state,
    entangling_probe,
    project_bell,
    project_z,
    tensor_product,
)

PURE_GUESS_ACCURACY = 0.25


# ---------------------------------------------------------------------------
# Closed forms


def detection_after_runs(c: float, d: float, runs: int) -> float:
    """Probability at least one of ``runs`` i.i.d. runs exposes the attacker.

    Each run is a control run with probability c and a control run fails
    with probability d, so the per-run hazard is c*d and the cumulative
    curve is 1 - (1 - c d)^runs.
    """
    _check_c(c)
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"per-control-run rate d must lie in [0, 1], got {d}")
    if runs < 0:
        raise ValueError("runs must be >= 0")
    return 1.0 - (1.0 - c * d) ** runs


def detection_after_runs_partial_sum(c: float, d: float, runs: int) -> float:
    """Same curve as ``detection_after_runs`` via the explicit geometric sum."""
    _check_c(c)
    return c * d * sum((1.0 - c * d) ** n for n in range(runs))


def detection_vs_message_length(c: float, d: float, n_half: int) -> float:
    """Cumulative detection re-expressed in message half-length N.

    Substitutes the expected total run count N/(1-c) as a real exponent:
    1 - (1 - c d)^(N/(1-c)). Strictly increasing in N and in c for
    d > 0, with limit 1.
    """
    _check_c(c)
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"per-control-run rate d must lie in [0, 1], got {d}")
    if n_half < 1:
        raise ValueError("n_half must be >= 1")
    return 1.0 - (1.0 - c * d) ** (n_half / (1.0 - c))

def dialogue_detection_exact(c: float, d: float, n_half: int) -> float:
    """Per-dialogue detection probability at the simulated integer run counts.

    A dialogue needs N message runs; modes are sampled i.i.d., so the
    total run count is random. Resumming the per-run hazard c*d over
    that distribution gives 1 - ((1-c) / (1-c+c*d))^N exactly: each
    message milestone is reached before a failing control run with
    probability (1-c)/(1-c+cd). The real-exponent curve above is this
    quantity with the run-count fluctuations replaced by their mean; the
    two agree in the long-message limit.
    """
    _check_c(c)
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"per-control-run rate d must lie in [0, 1], got {d}")
    if n_half < 1:
        raise ValueError("n_half must be >= 1")
    return 1.0 - ((1.0 - c) / (1.0 - c + c * d)) ** n_half


def eve_entropy_bits(beta2: float) -> float:
    """Entropy of the probe ancilla: the bound on what its readout reveals.

    -(1-b) log2(1-b) - b log2(b) with 0 log 0 = 0, for b = beta2 in
    [0, 0.5].
    """
    if not 0.0 <= beta2 <= 0.5:
        raise ValueError(f"beta2 must lie in [0, 0.5], got {beta2}")
    total = 0.0
    for p in (beta2, 1.0 - beta2):
        if p > 0.0:
            total -= p * math.log2(p)
    return total


def _check_c(c: float) -> None:
    if not 0.0 < c < 1.0:
        raise ValueError(f"c must lie strictly between 0 and 1, got {c}")


# ---------------------------------------------------------------------------
# Exhaustive per-control-run detection oracle

CLAIMED_PER_CM = {
    "none": 0.0,
    "disturb-measure": 0.75,
    "disturb-pauli-z": 0.75,
    "disturb-pauli-4": 0.75,
    "intercept-resend-literal": 0.75,
    "intercept-resend-blind": 0.75,
}


def claimed_per_cm(strategy: AttackStrategy) -> float:
    """The per-control-run detection rate the protocol's published analysis claims."""
    if isinstance(strategy, EntangleMeasure):
        return strategy.beta2
    return CLAIMED_PER_CM[strategy.name]


def per_cm_detection_oracle(strategy: AttackStrategy) -> float:
    """Exact probability a control run exposes the strategy.

    Brute force: average over all 16 (Alice code, Bob code) combinations
    and, within each, enumerate every random branch the strategy can
    take (coin flips and measurement outcomes) with its exact Born
    weight. The check fails when Bob's Bell outcome differs from the
    XOR of the two codes. Independent of the dialogue engine and of any
    random stream.
    """
    total = 0.0
    for bob_code in ALL_CODES:
        for alice_code in ALL_CODES:
            expected = alice_code ^ bob_code
            for weight, state, traveling in _pong_branches(strategy, bob_code, alice_code):
                probs = bell_outcome_probs(state, "h", traveling)
                total += weight * (1.0 - probs[expected])
    rate = total / 16.0
    return 0.0 if rate < 1e-12 else rate


def _pong_branches(strategy, bob_code, alice_code):
    """Post-pong joint states with exact weights, per strategy physics."""
    if isinstance(strategy, _InterceptResend):
        # Alice unknowingly encodes on the substituted half T.
        state = tensor_product(bell_state(bob_code), bell_state(BitPair(0, 0), regs=("H", "T")))
        state = apply_pauli(state, "T", alice_code)
        for learned in ALL_CODES:
            prob, collapsed = project_bell(state, "H", "T", learned)
            if prob == 0.0:
                continue
            if strategy.retransform:
                collapsed = apply_pauli(collapsed, "t", learned)
            yield prob, collapsed, "t"
        return

    honest = apply_pauli(bell_state(bob_code), "t", alice_code)

    if isinstance(strategy, EntangleMeasure):
        state = attach_ancilla(bell_state(bob_code), "e")
        state = entangling_probe(state, "t", "e", strategy.alpha, strategy.beta)
        state = apply_pauli(state, "t", alice_code)
        for bit in (0, 1):
            prob, collapsed = project_z(state, "e", bit)
            if prob > 0.0:
                yield prob, collapsed, "t"
    elif isinstance(strategy, DisturbMeasure):
        for bit in (0, 1):
            prob, collapsed = project_z(honest, "t", bit)
            if prob > 0.0:
                yield prob, collapsed, "t"
    elif isinstance(strategy, DisturbPauliZ):
        yield 0.5, honest, "t"
        yield 0.5, apply_pauli(honest, "t", BitPair(1, 1)), "t"
    elif isinstance(strategy, DisturbPauli4):
        for code in ALL_CODES:
            yield 0.25, apply_pauli(honest, "t", code), "t"
    else:
        yield 1.0, honest, "t"


# ---------------------------------------------------------------------------
# Trial reduction and estimators


@dataclass
class TrialReport:
    """Per-dialogue outcome reduced to aggregatable tallies.

    Control-run tallies span every pass (restarts included); the n_*
    counters echo the transcript's final-pass counts. The ancilla table
    is the 2x4 contingency of probe readout against Alice's true pair
    over message runs, all zeros for strategies without an ancilla.
    """

    trial_index: int
    strategy: str
    beta2: float | None
    status: str
    n_total: int
    n_mm: int
    n_cm: int
    runs_all_passes: int
    cm_failures: int
    cm_runs: int
    restart_count: int
    first_detection_run: int | None
    message_bits: int
    alice_bit_errors: int
    bob_bit_errors: int
    eve_alice_hits: int
    eve_bob_hits: int
    eve_guesses: int
    ancilla_table: tuple[tuple[int, int, int, int], tuple[int, int, int, int]]
    alice_decoded_bits: tuple[int, ...]
    bob_decoded_bits: tuple[int, ...]

    @classmethod
    def from_dialogue(
        cls,
        trial_index: int,
        result: DialogueResult,
        alice_msg: Message,
        bob_msg: Message,
        strategy: AttackStrategy | None,
    ) -> "TrialReport":
        transcript = result.transcript
        cm_failures, cm_runs = transcript.cm_tally()

        first_detection = None
        for i, run in enumerate(transcript.runs):
            if run.cm_pass is False:
                first_detection = i + 1
                break

        alice_errors = bob_errors = 0
        alice_bits: tuple[int, ...] = ()
        bob_bits: tuple[int, ...] = ()
        if result.alice_decoded is not None:
            alice_bits = tuple(result.alice_decoded.to_bits())
            alice_errors = sum(
                g != t for g, t in zip(alice_bits, bob_msg.to_bits())
            )
        if result.bob_decoded is not None:
            bob_bits = tuple(result.bob_decoded.to_bits())
            bob_errors = sum(g != t for g, t in zip(bob_bits, alice_msg.to_bits()))

        table = [[0, 0, 0, 0], [0, 0, 0, 0]]
        eve_alice_hits = eve_bob_hits = eve_guesses = 0
        if result.eve is not None:
            eve_alice_hits = result.eve.alice_hits
            eve_bob_hits = result.eve.bob_hits
            eve_guesses = result.eve.guess_count
            for log in result.eve.logs:
                if log.ancilla_outcome is None:
                    continue
                run = transcript.runs[log.run_index]
                if run.mode == MM:
                    col = 2 * run.alice_code.a + run.alice_code.b
                    table[log.ancilla_outcome][col] += 1

        return cls(
            trial_index=trial_index,
            strategy=strategy.name if strategy is not None else "none",
            beta2=getattr(strategy, "beta2", None),
            status=transcript.final_status,
            n_total=transcript.n_total,
            n_mm=transcript.n_mm,
            n_cm=transcript.n_cm,
            runs_all_passes=len(transcript.runs),
            cm_failures=cm_failures,
            cm_runs=cm_runs,
            restart_count=transcript.restart_count,
            first_detection_run=first_detection,
            message_bits=2 * len(alice_msg),
            alice_bit_errors=alice_errors,
            bob_bit_errors=bob_errors,
            eve_alice_hits=eve_alice_hits,
            eve_bob_hits=eve_bob_hits,
            eve_guesses=eve_guesses,
            ancilla_table=(tuple(table[0]), tuple(table[1])),
            alice_decoded_bits=alice_bits,
            bob_decoded_bits=bob_bits,
        )


@dataclass(frozen=True)
class EstimateWithCI:
    """A binomial point estimate with its standard error."""

    estimate: float
    stderr: float
    n_samples: int

    @classmethod
    def from_counts(cls, hits: int, n: int) -> "EstimateWithCI":
        if n < 1:
            raise ValueError("need at least one sample")
        p = hits / n
        return cls(estimate=p, stderr=math.sqrt(p * (1.0 - p) / n), n_samples=n)

    def within_3sigma(self, reference: float) -> bool:
        tol = 3.0 * self.stderr
        if self.estimate in (0.0, 1.0):
            # Boundary tallies have zero plug-in stderr; the rule of
            # three gives the right-sized region for an all-or-nothing
            # count of n samples.
            tol = max(tol, 3.0 / self.n_samples)
        return abs(self.estimate - reference) <= max(tol, 1e-9)


def empirical_detection(reports: list[TrialReport], mode: str = "per_cm") -> EstimateWithCI:
    """Detection estimate over a batch of trials.

    per_cm: fraction of attacked control runs that failed the check.
    per_dialogue: fraction of dialogues that ended in detected status.
    """
    if not reports:
        raise ValueError("need at least one trial report")
    if mode == "per_cm":
        cm_runs = sum(r.cm_runs for r in reports)
        if cm_runs == 0:
            raise ValueError("no control runs in these trials")
        return EstimateWithCI.from_counts(sum(r.cm_failures for r in reports), cm_runs)
    if mode == "per_dialogue":
        detected = sum(r.status == DETECTED for r in reports)
        return EstimateWithCI.from_counts(detected, len(reports))
    raise ValueError(f"mode must be 'per_cm' or 'per_dialogue', got {mode!r}")


def mutual_information_bits(table) -> float:
    """Plug-in mutual information of a contingency table, in bits."""
    rows = [list(row) for row in table]
    total = sum(sum(row) for row in rows)
    if total == 0:
        return 0.0
    mi = 0.0
    row_sums = [sum(row) for row in rows]
    col_sums = [sum(row[j] for row in rows) for j in range(len(rows[0]))]
    for i, row in enumerate(rows):
        for j, n in enumerate(row):
            if n == 0:
                continue
            p = n / total
            mi += p * math.log2(p * total * total / (row_sums[i] * col_sums[j]))
    return max(mi, 0.0)


def merge_ancilla_tables(reports: list[TrialReport]):
    table = [[0, 0, 0, 0], [0, 0, 0, 0]]
    for r in reports:
        for i in range(2):
            for j in range(4):
                table[i][j] += r.ancilla_table[i][j]
    return table


@dataclass(frozen=True)
class LeakageRow:
    """One strategy's guess accuracy against the pure-guess baseline."""

    strategy: str
    beta2: float | None
    alice_accuracy: EstimateWithCI
    bob_accuracy: EstimateWithCI
    baseline: float
    entropy_bound_bits: float | None
    mutual_information: float | None
    exceeds_baseline: bool

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "beta2": self.beta2,
            "alice_accuracy": self.alice_accuracy.estimate,
            "alice_stderr": self.alice_accuracy.stderr,
            "bob_accuracy": self.bob_accuracy.estimate,
            "bob_stderr": self.bob_accuracy.stderr,
            "n_guesses": self.alice_accuracy.n_samples,
            "baseline": self.baseline,
            "entropy_bound_bits": self.entropy_bound_bits,
            "mutual_information": self.mutual_information,
            "exceeds_baseline": self.exceeds_baseline,
        }


def leakage_report(reports: list[TrialReport]) -> list[LeakageRow]:
    """Per-strategy guess-accuracy table over message runs.

    Accuracy is per bit pair. A strategy is flagged as exceeding the
    baseline when either party's accuracy sits more than three standard
    errors above a pure guess. Probe strategies additionally carry the
    entropy bound and the plug-in mutual information between ancilla
    readout and Alice's pair.
    """
    if not any(r.eve_guesses for r in reports):
        raise ValueError("no guess entries in these trials")
    groups: dict[tuple[str, float | None], list[TrialReport]] = {}
    for r in reports:
        groups.setdefault((r.strategy, r.beta2), []).append(r)

    rows = []
    for (strategy, beta2), batch in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0.0)):
        guesses = sum(r.eve_guesses for r in batch)
        if guesses == 0:
            continue
        alice_acc = EstimateWithCI.from_counts(sum(r.eve_alice_hits for r in batch), guesses)
        bob_acc = EstimateWithCI.from_counts(sum(r.eve_bob_hits for r in batch), guesses)
        entropy_bound = eve_entropy_bits(beta2) if beta2 is not None else None
        mi = mutual_information_bits(merge_ancilla_tables(batch)) if beta2 is not None else None
        exceeds = (
            alice_acc.estimate - PURE_GUESS_ACCURACY > 3.0 * alice_acc.stderr
            or bob_acc.estimate - PURE_GUESS_ACCURACY > 3.0 * bob_acc.stderr
        )
        rows.append(
            LeakageRow(
                strategy=strategy,
                beta2=beta2,
                alice_accuracy=alice_acc,
                bob_accuracy=bob_acc,
                baseline=PURE_GUESS_ACCURACY,
                entropy_bound_bits=entropy_bound,
                mutual_information=mi,
                exceeds_baseline=exceeds,
            )
        )
    return rows
