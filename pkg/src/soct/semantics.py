"""Per-cell semantic class distributions and their Bayesian fusion.

A map cell carries a categorical distribution over class ids 0..K where id 0
is free space and ids 1..K are semantic categories (road, grass, building,
...). Leaf cells store a truncated record: the three most likely non-free
classes, the free-space probability, and a single residual mass covering
every remaining class. Expanding a truncated record back to a dense vector
spreads the residual uniformly over the K-3 outstanding classes, which is
why K >= 4 is required.

All functions here are pure and operate on immutable values; they are safe
to call concurrently from any number of threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DistributionError

SUM_TOL = 1e-9
FIELD_TOL = 1e-12

ROLE_RELEVANT = "relevant"
ROLE_IRRELEVANT = "irrelevant"
ROLE_NEUTRAL = "neutral"
_ROLES = (ROLE_RELEVANT, ROLE_IRRELEVANT, ROLE_NEUTRAL)


@dataclass(frozen=True)
class ClassRegistry:
    """Set of class ids 0..num_classes with optional names and task roles.

    Id 0 is always free space. Roles partition the ids into relevant
    (information to retain), irrelevant (information to discard) and neutral
    classes; ids without an entry in ``roles`` are neutral.
    """

    num_classes: int
    names: dict[int, str] = field(default_factory=dict)
    roles: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.num_classes < 1:
            raise ConfigError("num_classes must be a positive integer")
        for cid in list(self.names) + list(self.roles):
            if not 0 <= cid <= self.num_classes:
                raise ConfigError(f"class id {cid} outside 0..{self.num_classes}")
        for cid, role in self.roles.items():
            if role not in _ROLES:
                raise ConfigError(f"unknown role {role!r} for class {cid}")

    @property
    def relevant_ids(self) -> frozenset[int]:
        return frozenset(c for c, r in self.roles.items() if r == ROLE_RELEVANT)

    @property
    def irrelevant_ids(self) -> frozenset[int]:
        return frozenset(c for c, r in self.roles.items() if r == ROLE_IRRELEVANT)

    def name_of(self, cid: int) -> str:
        return self.names.get(cid, f"class{cid}")


@dataclass(frozen=True)
class TruncatedSemanticDistribution:
    """Compact per-leaf storage: top-3 classes + free space + residual mass.

    ``top3`` holds up to three (class_id, probability) pairs with distinct
    non-zero ids, sorted by descending probability (ties by lower id). The
    residual is the total mass of every class outside top3 and free space;
    records with fewer than three stored classes must carry zero residual,
    otherwise some outstanding class would outrank a stored one.
    """

    top3: tuple[tuple[int, float], ...]
    p_free: float
    p_residual: float

    def validate(self, num_classes: int) -> None:
        if len(self.top3) > 3:
            raise DistributionError("more than 3 stored classes")
        ids = [c for c, _ in self.top3]
        if len(set(ids)) != len(ids) or any(c == 0 for c in ids):
            raise DistributionError("stored class ids must be distinct and non-zero")
        if any(not 1 <= c <= num_classes for c in ids):
            raise DistributionError("stored class id out of range")
        probs = [p for _, p in self.top3]
        for value in probs + [self.p_free, self.p_residual]:
            if not -FIELD_TOL <= value <= 1 + FIELD_TOL:
                raise DistributionError(f"probability {value} outside [0, 1]")
        if any(probs[i] < probs[i + 1] for i in range(len(probs) - 1)):
            raise DistributionError("stored classes not sorted by probability")
        total = sum(probs) + self.p_free + self.p_residual
        if abs(total - 1.0) > SUM_TOL:
            raise DistributionError(f"probabilities sum to {total}, not 1")
        if len(self.top3) < 3 and self.p_residual > SUM_TOL:
            raise DistributionError("residual mass requires 3 stored classes")
        if num_classes > 3 and self.top3:
            share = self.p_residual / (num_classes - 3)
            if self.top3[-1][1] < share - FIELD_TOL:
                raise DistributionError("stored probability below residual share")

    def is_close(self, other: "TruncatedSemanticDistribution",
                 tol: float = FIELD_TOL) -> bool:
        """Field-by-field equality within ``tol`` (same ids, close values)."""
        if len(self.top3) != len(other.top3):
            return False
        for (ca, pa), (cb, pb) in zip(self.top3, other.top3):
            if ca != cb or abs(pa - pb) > tol:
                return False
        return (abs(self.p_free - other.p_free) <= tol
                and abs(self.p_residual - other.p_residual) <= tol)


class FullSemanticDistribution:
    """Dense categorical distribution over class ids 0..K (index 0 = free)."""

    __slots__ = ("probs",)

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=np.float64)

    @property
    def num_classes(self) -> int:
        return len(self.probs) - 1

    def validate(self) -> None:
        if self.probs.ndim != 1 or len(self.probs) < 2:
            raise DistributionError("need a 1-d vector over ids 0..K")
        if np.any(self.probs < -FIELD_TOL):
            raise DistributionError("negative probability entry")
        total = float(self.probs.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise DistributionError(f"probabilities sum to {total}, not 1")

    def __repr__(self):
        return f"FullSemanticDistribution({self.probs.tolist()})"


def uniform_full(num_classes: int) -> FullSemanticDistribution:
    """Maximum-entropy distribution over ids 0..num_classes."""
    return FullSemanticDistribution(np.full(num_classes + 1, 1.0 / (num_classes + 1)))


def expand_truncated(dist: TruncatedSemanticDistribution,
                     registry: ClassRegistry) -> FullSemanticDistribution:
    """Expand a truncated record to a dense vector over all class ids.

    Stored classes and free space keep their exact values; the residual mass
    is spread uniformly over the K-3 outstanding classes.
    """
    k = registry.num_classes
    if k < 4:
        raise ConfigError("expansion needs at least 4 semantic classes")
    dist.validate(k)
    probs = np.zeros(k + 1)
    probs[0] = dist.p_free
    stored = {0}
    for cid, p in dist.top3:
        probs[cid] = p
        stored.add(cid)
    share = dist.p_residual / (k - 3)
    for cid in range(1, k + 1):
        if cid not in stored:
            probs[cid] = share
    return FullSemanticDistribution(probs)


def truncate_full(full: FullSemanticDistribution) -> TruncatedSemanticDistribution:
    """Keep the three largest non-free classes; pool the rest into a residual.

    Ties are broken toward the lower class id; classes with zero probability
    are never stored. Expanding the result reproduces the stored fields and
    the total residual mass.
    """
    full.validate()
    probs = full.probs
    k = len(probs) - 1
    order = sorted(range(1, k + 1), key=lambda c: (-probs[c], c))
    top = tuple((c, float(probs[c])) for c in order[:3] if probs[c] > 0.0)
    p_free = float(probs[0])
    p_residual = float(sum(probs[c] for c in order[3:]))
    return TruncatedSemanticDistribution(top, p_free, p_residual)


def fuse_observation(prior: FullSemanticDistribution, obs_class: int,
                     confidence: float) -> FullSemanticDistribution:
    """Bayesian update of a cell distribution from one labeled observation.

    The observation likelihood puts ``confidence`` on the observed class and
    spreads the remainder uniformly over the other K classes, so repeated
    observations of one class concentrate the posterior monotonically. A
    confidence at or below 1/(K+1) carries no information and is rejected.
    """
    prior.validate()
    k = prior.num_classes
    if not 0 <= obs_class <= k:
        raise DistributionError(f"observed class {obs_class} outside 0..{k}")
    if not 1.0 / (k + 1) < confidence <= 1.0:
        raise DistributionError(
            f"confidence {confidence} outside (1/{k + 1}, 1]")
    likelihood = np.full(k + 1, (1.0 - confidence) / k)
    likelihood[obs_class] = confidence
    posterior = prior.probs * likelihood
    total = float(posterior.sum())
    if total <= 0.0:
        raise DistributionError("observation contradicts a zero-probability prior")
    return FullSemanticDistribution(posterior / total)
