"""Noise-tolerant recovery from a perturbed distance oracle.

The splitting operations already take an ``epsilon`` width; this module
packages them with the feasibility arithmetic for bounded sup-norm noise:
every oracle value may be off by at most epsilon from some tree metric
whose minimum distance is ell. Below ell / (4 (1 + log_delta n)) the
noisy run makes exactly the decisions the noiseless run would make, so
with a shared probe stream the two recover the same topology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import NoiseTooLarge
from .oracle import DistanceOracle
from .recovery import (
    Bag,
    RecoveryStats,
    Skeleton,
    _recover_impl,
    basic,
    explode,
)
from .tree import NodeId, SemiLabeledTree

__all__ = [
    "NoisyConfig",
    "basic_noisy",
    "explode_noisy",
    "perturbation_bound",
    "recover_noisy",
]


def _log_delta(n: int, delta: int) -> float:
    if n < 2:
        return 1.0
    return math.log(n) / math.log(delta)


@dataclass(frozen=True)
class NoisyConfig:
    """Noise regime for one recovery run.

    ``epsilon`` bounds the per-entry oracle error, ``ell`` lower-bounds
    the true minimum pairwise distance, and ``round_budget`` caps the
    number of shrinking rounds before the run is abandoned.
    """

    epsilon: float
    ell: float
    delta_param: int
    round_budget: int

    def __post_init__(self):
        if not self.epsilon >= 0.0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not self.ell > 0.0:
            raise ValueError(f"ell must be positive, got {self.ell}")
        if self.delta_param < 2:
            raise ValueError(f"delta must be at least 2, got {self.delta_param}")
        if self.round_budget < 1:
            raise ValueError(
                f"round budget must be at least 1, got {self.round_budget}")
        if self.epsilon > 0.0 and not self.epsilon < self.ell / 4.0:
            raise ValueError(
                f"epsilon {self.epsilon} must stay below ell/4 = {self.ell / 4.0}")

    @classmethod
    def for_size(cls, n: int, delta: int, epsilon: float, ell: float,
                 round_budget: int | None = None) -> "NoisyConfig":
        """Config with the default round budget of ceil(2 log_delta n)."""
        if round_budget is None:
            round_budget = max(1, math.ceil(2.0 * _log_delta(n, delta)))
        return cls(epsilon=float(epsilon), ell=float(ell),
                   delta_param=int(delta), round_budget=int(round_budget))

    def feasible(self, n: int) -> bool:
        """Whether epsilon sits inside the guaranteed-recovery region."""
        return self.epsilon <= self.max_epsilon(n)

    def max_epsilon(self, n: int) -> float:
        """Largest epsilon with a recovery guarantee at this size."""
        return self.ell / (4.0 * (1.0 + _log_delta(n, self.delta_param)))


def perturbation_bound(a: Iterable[float], epsilon: float) -> float:
    """Worst-case error of a signed combination of oracle values.

    Each value errs by at most epsilon independently of the others, so a
    combination with coefficients ``a`` errs by at most the l1 norm of
    ``a`` times epsilon. The 3-epsilon and 4-epsilon decision widths are
    this bound applied to the three- and four-term path expressions.
    """
    return sum(abs(float(x)) for x in a) * float(epsilon)


def basic_noisy(bag: Bag, alpha: NodeId, oracle: DistanceOracle,
                epsilon: float, *, tolerance: float = 1e-9,
                on_latent=None) -> tuple[list[Bag], Skeleton]:
    """Path split with decision widths opened up for noise.

    With epsilon = 0 this is exactly :func:`latree.recovery.basic`; the
    widened thresholds keep the partition equal to the noiseless one as
    long as the perturbation stays below ell/4.
    """
    return basic(bag, alpha, oracle, tolerance=tolerance,
                 epsilon=float(epsilon), on_latent=on_latent)


def explode_noisy(bag: Bag, oracle: DistanceOracle, epsilon: float, *,
                  tolerance: float = 1e-9) -> list[Bag]:
    """Subtree split with the same-subtree test widened for noise."""
    return explode(bag, oracle, tolerance=tolerance, epsilon=float(epsilon))


def recover_noisy(oracle: DistanceOracle, regular_labels=None,
                  delta: int = 3, epsilon: float = 0.0, *,
                  ell: float | None = None, round_budget: int | None = None,
                  tolerance: float = 1e-9, seed: int | None = None,
                  engine: str = "auto", record_latents: bool = False
                  ) -> tuple[SemiLabeledTree, RecoveryStats]:
    """Recover a tree from an oracle whose entries err by at most epsilon.

    ``ell``, when given, is a lower bound on the true minimum pairwise
    distance and is used only for an upfront feasibility check; the run
    itself needs just ``epsilon``. ``round_budget`` defaults to
    ceil(2 log_delta n): past that many shrinking rounds the run raises
    RoundBudgetExceeded instead of looping on inconsistent splits. All
    failures surface as typed errors, never as corrupted output.
    """
    epsilon = float(epsilon)
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    labels: Sequence[int] = (oracle.labels if regular_labels is None
                             else list(regular_labels))
    n = len(labels)
    if ell is not None and epsilon > 0.0 and epsilon >= float(ell) / 4.0:
        raise NoiseTooLarge(
            f"epsilon {epsilon} is not below ell/4 = {float(ell) / 4.0}; "
            f"no recovery guarantee exists in this regime")
    if round_budget is None:
        round_budget = max(1, math.ceil(2.0 * _log_delta(n, int(delta))))
    return _recover_impl(oracle, regular_labels, delta, tolerance, epsilon,
                         seed, engine, int(round_budget), record_latents)
