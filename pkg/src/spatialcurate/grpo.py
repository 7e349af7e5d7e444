"""Group-relative policy objective numerics over supplied rewards and log-probs.

No sampling, tokenization, or backpropagation lives here; this module is the
verifiable numeric core. The objective per group is

    surrogate = mean_i mean_t min(rho_t * A_i, clip(rho_t, 1-eps, 1+eps) * A_i)
    loss      = -(surrogate - beta * mean_i mean_t kl_t)

so minimizing the returned loss performs gradient ascent on the clipped
surrogate. Advantages are standardized within the group; the KL penalty uses
the nonnegative ``exp(d) - d - 1`` estimator with ``d = logp_ref - logp_policy``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .types import GrpoGroup, RewardConfig


@dataclass(frozen=True)
class TokenLogProbs:
    """Per-token log-probabilities for each response, under policy and reference."""

    policy: tuple[tuple[float, ...], ...]
    ref: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if len(self.policy) != len(self.ref):
            raise ValueError("policy and reference need one series per response")
        for i, (p, r) in enumerate(zip(self.policy, self.ref)):
            if len(p) != len(r):
                raise ValueError(
                    f"response {i}: policy has {len(p)} tokens, reference {len(r)}"
                )
            for v in (*p, *r):
                if not math.isfinite(v):
                    raise ValueError(f"response {i} contains a non-finite log-prob")

    @classmethod
    def from_lists(
        cls, policy: Sequence[Sequence[float]], ref: Sequence[Sequence[float]]
    ) -> "TokenLogProbs":
        return cls(
            policy=tuple(tuple(float(v) for v in row) for row in policy),
            ref=tuple(tuple(float(v) for v in row) for row in ref),
        )


def group_advantages(rewards: Sequence[float], eps: float = 1e-8) -> list[float]:
    """Standardize rewards within the group: ``(r - mean) / (std + eps)``.

    Population standard deviation; groups with constant rewards (including
    singletons) return all zeros.
    """
    if not rewards:
        raise ValueError("rewards must be non-empty")
    n = len(rewards)
    mean = sum(rewards) / n
    var = sum((r - mean) ** 2 for r in rewards) / n
    std = math.sqrt(var)
    if std == 0.0:
        return [0.0] * n
    return [(r - mean) / (std + eps) for r in rewards]


def make_group(rewards: Sequence[float], eps: float = 1e-8) -> GrpoGroup:
    """Bundle rewards with their freshly computed advantages."""
    return GrpoGroup(
        rewards=tuple(float(r) for r in rewards),
        advantages=tuple(group_advantages(rewards, eps)),
    )


def clipped_term(ratio: float, advantage: float, clip_eps: float) -> float:
    """Pessimistic clipped surrogate: ``min(rho * A, clip(rho) * A)``."""
    if ratio <= 0.0:
        raise ValueError(f"policy ratio must be positive, got {ratio}")
    clipped = min(max(ratio, 1.0 - clip_eps), 1.0 + clip_eps)
    return min(ratio * advantage, clipped * advantage)


def kl_term(logp_policy: Sequence[float], logp_ref: Sequence[float]) -> list[float]:
    """Per-token KL estimate ``exp(d) - d - 1`` with ``d = logp_ref - logp_policy``.

    Nonnegative for every d, zero exactly when the two log-probs agree.
    """
    if len(logp_policy) != len(logp_ref):
        raise ValueError(
            f"length mismatch: policy {len(logp_policy)} vs reference {len(logp_ref)}"
        )
    out = []
    for p, r in zip(logp_policy, logp_ref):
        d = r - p
        out.append(math.exp(d) - d - 1.0)
    return out


@dataclass(frozen=True)
class GrpoResult:
    loss: float
    surrogate: float
    kl: float
    advantages: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "surrogate": self.surrogate,
            "kl": self.kl,
            "advantages": list(self.advantages),
        }


def grpo_objective(
    group: GrpoGroup,
    logprobs: Optional[TokenLogProbs] = None,
    *,
    config: RewardConfig = RewardConfig(),
) -> GrpoResult:
    """Evaluate the objective for one group and expose its components.

    Ratios and KL terms come from the group when present, otherwise they are
    derived from ``logprobs`` (``rho_t = exp(logp_policy - logp_ref)``); pass
    explicit ratios when the sampling policy differs from the reference.
    Token terms are averaged within each response, then across responses.
    """
    n = len(group.rewards)
    if n == 0:
        raise ValueError("group has no responses")

    ratios = group.ratios
    kl_terms = group.kl_terms
    if ratios is None or kl_terms is None:
        if logprobs is None:
            raise ValueError("need token log-probs or precomputed ratios and kl terms")
        if len(logprobs.policy) != n:
            raise ValueError(
                f"log-probs cover {len(logprobs.policy)} responses, group has {n}"
            )
        if ratios is None:
            ratios = tuple(
                tuple(math.exp(p - r) for p, r in zip(pol, ref))
                for pol, ref in zip(logprobs.policy, logprobs.ref)
            )
        if kl_terms is None:
            kl_terms = tuple(
                tuple(kl_term(pol, ref))
                for pol, ref in zip(logprobs.policy, logprobs.ref)
            )

    if len(ratios) != n or len(kl_terms) != n:
        raise ValueError("per-token series must cover every response")

    surrogate_means = []
    kl_means = []
    for advantage, rho_row, kl_row in zip(group.advantages, ratios, kl_terms):
        if len(rho_row) != len(kl_row):
            raise ValueError("ratio and kl series differ in token count")
        if not rho_row:
            surrogate_means.append(0.0)
            kl_means.append(0.0)
            continue
        terms = [clipped_term(rho, advantage, config.clip_eps) for rho in rho_row]
        surrogate_means.append(sum(terms) / len(terms))
        kl_means.append(sum(kl_row) / len(kl_row))

    surrogate = sum(surrogate_means) / n
    kl = sum(kl_means) / n
    loss = -(surrogate - config.kl_coeff * kl)
    return GrpoResult(loss=loss, surrogate=surrogate, kl=kl, advantages=group.advantages)
