"""Numeric training-loss kernels over externally supplied log-probabilities.

Policies are opaque here: the kernels only consume per-token log-probs (for
the supervised objective) and summed policy/reference log-prob totals (for
the preference objective). No gradients or model weights are involved.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .errors import InvariantViolation, NonFiniteInput

log = logging.getLogger(__name__)


@dataclass
class LogProbSeq:
    """Per-token log-probabilities with a loss mask of equal length.

    An all-true mask (the default) sums every trajectory token; callers that
    exclude environment-observation tokens pass the mask explicitly.
    """

    values: list[float]
    mask: list[bool] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.mask:
            self.mask = [True] * len(self.values)
        if len(self.values) != len(self.mask):
            raise InvariantViolation("values and mask must have equal length")
        for v in self.values:
            if not math.isfinite(v):
                raise NonFiniteInput(f"log-probability {v!r} is not finite")
            if v > 0.0:
                raise InvariantViolation(f"log-probability {v} is positive")

    def total(self) -> float:
        return sum(v for v, m in zip(self.values, self.mask) if m)


def sft_nll(seq: LogProbSeq) -> float:
    """Negative log-likelihood over the masked positions; always >= 0."""
    if not any(seq.mask):
        log.warning("sft_nll called with an all-false mask")
        return 0.0
    return -seq.total()


@dataclass(frozen=True)
class PolicyRefLogProb:
    """Summed log-prob of one trajectory under the policy and the reference."""

    policy_lp: float
    ref_lp: float

    @classmethod
    def from_seqs(cls, policy: LogProbSeq, ref: LogProbSeq) -> "PolicyRefLogProb":
        return cls(policy_lp=policy.total(), ref_lp=ref.total())

    def log_ratio(self) -> float:
        return self.policy_lp - self.ref_lp


@dataclass(frozen=True)
class DpoResult:
    loss: float
    margin: float


def _softplus(x: float) -> float:
    # max(x, 0) + log1p(exp(-|x|)); never exponentiates a positive argument.
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def dpo_loss(chosen: PolicyRefLogProb, rejected: PolicyRefLogProb, beta: float) -> DpoResult:
    """Preference loss -log(sigmoid(beta * margin)) with a stable softplus form.

    The margin is the difference of the policy/reference log-ratios of the
    chosen and rejected trajectories; the loss is strictly positive,
    decreasing in the margin, and equals ln 2 at zero margin.
    """
    if not beta > 0:
        raise InvariantViolation(f"beta must be positive, got {beta}")
    for name, value in (
        ("chosen.policy_lp", chosen.policy_lp),
        ("chosen.ref_lp", chosen.ref_lp),
        ("rejected.policy_lp", rejected.policy_lp),
        ("rejected.ref_lp", rejected.ref_lp),
    ):
        if not math.isfinite(value):
            raise NonFiniteInput(f"{name} is not finite")
    margin = chosen.log_ratio() - rejected.log_ratio()
    loss = _softplus(-beta * margin)
    return DpoResult(loss=loss, margin=margin)


def dpo_margin_gradient(margin: float, beta: float) -> float:
    """Analytic d(loss)/d(margin) = -beta * sigmoid(-beta * margin)."""
    return -beta * sigmoid(-beta * margin)


def _pair(policy: float, ref: float = 0.0) -> PolicyRefLogProb:
    return PolicyRefLogProb(policy_lp=policy, ref_lp=ref)


def _loss_at(margin: float, beta: float) -> float:
    return dpo_loss(_pair(min(margin, 0.0)), _pair(-max(margin, 0.0)), beta).loss


def self_check() -> list[tuple[str, bool, str]]:
    """Numeric verification suite for the loss kernels; used by the CLI."""
    import random

    checks: list[tuple[str, bool, str]] = []

    def add(name: str, ok: bool, detail: str) -> None:
        checks.append((name, ok, detail))

    value = dpo_loss(_pair(-1.0), _pair(-1.0), beta=2.5).loss
    add("zero margin equals ln 2", abs(value - math.log(2.0)) < 1e-9, f"loss={value!r}")

    value = dpo_loss(_pair(0.0), _pair(-math.log(3.0)), beta=1.0).loss
    add("margin ln 3 at beta 1", abs(value + math.log(0.75)) < 1e-9, f"loss={value!r}")

    value = _loss_at(-50.0, beta=0.1)
    expected = 5.0 + math.log1p(math.exp(-5.0))
    add("large negative margin is stable", abs(value - expected) < 1e-12, f"loss={value!r}")

    huge = _loss_at(1e4, beta=1.0)
    neg_huge = _loss_at(-1e4, beta=1.0)
    add(
        "no overflow at margin +/-1e4",
        math.isfinite(huge) and math.isfinite(neg_huge) and abs(neg_huge - 1e4) < 1e-6,
        f"loss(+1e4)={huge!r} loss(-1e4)={neg_huge!r}",
    )

    rng = random.Random(20240229)
    worst = 0.0
    for _ in range(20):
        margin = rng.uniform(-8.0, 8.0)
        beta = rng.uniform(0.05, 4.0)
        h = 1e-6 * max(1.0, abs(margin))
        fd = (_loss_at(margin + h, beta) - _loss_at(margin - h, beta)) / (2 * h)
        analytic = dpo_margin_gradient(margin, beta)
        rel = abs(fd - analytic) / max(abs(analytic), 1e-12)
        worst = max(worst, rel)
    add("finite-difference gradient agreement", worst < 1e-6, f"worst relative error={worst:.3e}")

    grid = [(-20.0 + i) * 0.5 for i in range(81)]
    losses = [_loss_at(m, beta=0.7) for m in grid]
    monotone = all(a > b for a, b in zip(losses, losses[1:]))
    add("loss strictly decreasing in margin", monotone, f"grid of {len(grid)} points")

    fwd = dpo_loss(_pair(-1.0), _pair(-4.0), beta=1.3)
    rev = dpo_loss(_pair(-4.0), _pair(-1.0), beta=1.3)
    add(
        "swapping arguments negates the margin",
        abs(fwd.margin + rev.margin) < 1e-12,
        f"margins {fwd.margin!r} / {rev.margin!r}",
    )

    a = LogProbSeq(values=[-0.5, -1.25, -0.125])
    b = LogProbSeq(values=[-2.0, -0.75])
    joined = LogProbSeq(values=a.values + b.values)
    add(
        "nll additive over concatenation",
        abs(sft_nll(joined) - (sft_nll(a) + sft_nll(b))) < 1e-12,
        f"nll={sft_nll(joined)!r}",
    )

    certain = LogProbSeq(values=[0.0, 0.0, 0.0])
    add("zero nll at certainty", sft_nll(certain) == 0.0, "all log-probs zero")
    return checks
