"""Stage-wise assignment mechanisms bound to a realized recruitment set.

A ``BoundMechanism`` works on the stage-local treatment vector (length
|R_k|) and has already resolved every design parameter that depends on the
previous selection value. All methods are vectorized over rows of an
``int8`` matrix.

Conditioning on pinned entries is expressed through a ``free`` mask: pinned
entries keep the value they have in ``current`` and only free entries are
re-randomized. For both shipped mechanisms this is the mechanism's law
conditioned on the pinned entries.
"""

from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from selrand.errors import InfeasibleAssignment
from selrand.trial.spec import INITIAL_SELECTION, CRDMechanismSpec, TrialSpec

ASSIGNMENT_DTYPE = np.int8
MAX_ARM_CODE = int(np.iinfo(ASSIGNMENT_DTYPE).max)


def _all_free(n: int, free: np.ndarray | None) -> np.ndarray:
    return np.ones(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)


def _next_permutation(values: list[int]) -> bool:
    """Advance ``values`` to the next lexicographic permutation in place."""
    i = len(values) - 2
    while i >= 0 and values[i] >= values[i + 1]:
        i -= 1
    if i < 0:
        return False
    j = len(values) - 1
    while values[j] <= values[i]:
        j -= 1
    values[i], values[j] = values[j], values[i]
    values[i + 1 :] = reversed(values[i + 1 :])
    return True


def multiset_permutations(values: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """Distinct permutations of a multiset in lexicographic order."""
    current = sorted(values)
    yield tuple(current)
    while _next_permutation(current):
        yield tuple(current)


class BoundMechanism(ABC):
    """Assignment law of one stage with all design parameters resolved."""

    size: int
    num_arms: int

    @abstractmethod
    def log_prob(self, z: np.ndarray) -> np.ndarray:
        """Log probability of each row of ``z`` (shape (B, size)); -inf if infeasible."""

    @abstractmethod
    def sample(
        self,
        rng: np.random.Generator,
        size: int,
        current: np.ndarray | None = None,
        free: np.ndarray | None = None,
    ) -> np.ndarray:
        """Draw ``size`` rows; entries outside ``free`` are copied from ``current``."""

    @abstractmethod
    def propose(
        self, rng: np.random.Generator, current: np.ndarray, subset: np.ndarray
    ) -> np.ndarray:
        """Random-walk kernel: re-randomize ``current`` on the positions in ``subset``."""

    @abstractmethod
    def count(self, current: np.ndarray | None = None, free: np.ndarray | None = None) -> int:
        """Number of distinct assignments reachable by re-randomizing free entries."""

    @abstractmethod
    def enumerate(
        self, current: np.ndarray | None = None, free: np.ndarray | None = None
    ) -> np.ndarray:
        """All such assignments as a matrix in lexicographic order."""

    def _fill(
        self, current: np.ndarray | None, free: np.ndarray, values: np.ndarray
    ) -> np.ndarray:
        out = np.empty((values.shape[0], self.size), dtype=ASSIGNMENT_DTYPE)
        if current is not None:
            out[:] = np.asarray(current, dtype=ASSIGNMENT_DTYPE)
        out[:, free] = values
        return out


@dataclass(frozen=True)
class CompletelyRandomized(BoundMechanism):
    """Uniform over vectors with fixed per-arm counts."""

    counts: tuple[int, ...]
    size: int = field(init=False)
    num_arms: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "size", int(sum(self.counts)))
        object.__setattr__(self, "num_arms", len(self.counts))

    @property
    def log_count(self) -> float:
        return float(gammaln(self.size + 1) - np.sum(gammaln(np.asarray(self.counts) + 1)))

    def log_prob(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        observed = np.stack([(z == a).sum(axis=1) for a in range(self.num_arms)], axis=1)
        ok = np.all(observed == np.asarray(self.counts), axis=1)
        return np.where(ok, -self.log_count, -np.inf)

    def _base(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_arms, dtype=ASSIGNMENT_DTYPE), self.counts)

    def sample(self, rng, size, current=None, free=None):
        free = _all_free(self.size, free)
        source = self._base() if current is None else np.asarray(current)[free]
        if current is None and not free.all():
            raise ValueError("a pinned CRD draw needs the current assignment")
        values = rng.permuted(np.tile(source, (size, 1)), axis=1)
        return self._fill(current, free, values)

    def propose(self, rng, current, subset):
        out = np.array(current, dtype=ASSIGNMENT_DTYPE, copy=True)
        out[subset] = rng.permutation(out[subset])
        return out

    def count(self, current=None, free=None):
        free = _all_free(self.size, free)
        values = self._base() if current is None else np.asarray(current)[free]
        _, multiplicities = np.unique(values, return_counts=True)
        total = math.factorial(len(values))
        for m in multiplicities:
            total //= math.factorial(int(m))
        return total

    def enumerate(self, current=None, free=None):
        free = _all_free(self.size, free)
        values = self._base() if current is None else np.asarray(current)[free]
        rows = np.array(list(multiset_permutations(values.tolist())), dtype=ASSIGNMENT_DTYPE)
        return self._fill(current, free, rows.reshape(len(rows), int(free.sum())))


@dataclass(frozen=True, eq=False)
class Bernoulli(BoundMechanism):
    """Independent binary draws with per-unit P(arm 1)."""

    p: np.ndarray
    num_arms: int = 2
    size: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "size", int(self.p.shape[0]))

    def log_prob(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        binary = np.all((z == 0) | (z == 1), axis=1)
        with np.errstate(divide="ignore"):
            log_p = np.log(self.p)
            log_q = np.log1p(-self.p)
        terms = np.where(z == 1, log_p, log_q)
        return np.where(binary, terms.sum(axis=1), -np.inf)

    def sample(self, rng, size, current=None, free=None):
        free = _all_free(self.size, free)
        if current is None and not free.all():
            raise ValueError("a pinned Bernoulli draw needs the current assignment")
        draws = (rng.random((size, int(free.sum()))) < self.p[free]).astype(ASSIGNMENT_DTYPE)
        return self._fill(current, free, draws)

    def propose(self, rng, current, subset):
        out = np.array(current, dtype=ASSIGNMENT_DTYPE, copy=True)
        out[subset] = (rng.random(len(subset)) < self.p[subset]).astype(ASSIGNMENT_DTYPE)
        return out

    def _choices(self, free: np.ndarray) -> list[tuple[int, ...]]:
        choices = []
        for p in self.p[free]:
            if p <= 0.0:
                choices.append((0,))
            elif p >= 1.0:
                choices.append((1,))
            else:
                choices.append((0, 1))
        return choices

    def count(self, current=None, free=None):
        free = _all_free(self.size, free)
        return math.prod(len(c) for c in self._choices(free))

    def enumerate(self, current=None, free=None):
        free = _all_free(self.size, free)
        rows = np.array(list(itertools.product(*self._choices(free))), dtype=ASSIGNMENT_DTYPE)
        return self._fill(current, free, rows.reshape(len(rows), int(free.sum())))


@dataclass(frozen=True)
class StageHistory:
    """Prior-stage data along a candidate assignment, for adaptive mechanisms."""

    assignments: tuple[np.ndarray, ...]
    outcomes: tuple[np.ndarray, ...]
    groups: np.ndarray


class AdaptiveMechanism(ABC):
    """Mechanism whose stage law may read all previously realized data.

    Not expressible in the JSON schema; pass instances as per-stage overrides
    to ``assignment_log_weight``.
    """

    @abstractmethod
    def log_prob(self, z: np.ndarray, history: StageHistory) -> float: ...


@dataclass(frozen=True)
class ResponseAdaptiveBernoulli(AdaptiveMechanism):
    """Bernoulli stage whose P(arm 1) tilts toward the arm that did better so far."""

    base: float = 0.5
    gain: float = 0.25
    floor: float = 0.1

    def probability(self, history: StageHistory) -> float:
        z = np.concatenate(history.assignments) if history.assignments else np.empty(0)
        y = np.concatenate(history.outcomes) if history.outcomes else np.empty(0)
        if not (z == 1).any() or not (z == 0).any():
            return self.base
        diff = float(y[z == 1].mean() - y[z == 0].mean())
        return float(np.clip(self.base + self.gain * np.tanh(diff), self.floor, 1 - self.floor))

    def log_prob(self, z: np.ndarray, history: StageHistory) -> float:
        p = self.probability(history)
        if not np.all((z == 0) | (z == 1)):
            return -math.inf
        treated = int((z == 1).sum())
        return treated * math.log(p) + (len(z) - treated) * math.log1p(-p)


def _crd_counts(
    mech: CRDMechanismSpec,
    stage: int,
    size: int,
    previous: str | None,
    num_arms: int,
    observed: np.ndarray | None,
) -> tuple[int, ...]:
    key = INITIAL_SELECTION if previous is None else previous
    if key in mech.counts:
        counts = tuple(mech.counts[key])
        if sum(counts) != size:
            raise InfeasibleAssignment(
                stage, f"CRD counts {counts} do not sum to stage size {size}"
            )
        return counts
    if mech.fractions is None and observed is not None:
        # arm sizes of a completed stage are part of the design
        return tuple(int(c) for c in np.bincount(observed, minlength=num_arms)[:num_arms])
    fractions = mech.fractions or [1.0 / num_arms] * num_arms
    base = [int(math.floor(f * size)) for f in fractions]
    for a in range(size - sum(base)):
        base[a % num_arms] += 1
    return tuple(base)


def bind_mechanism(
    spec: TrialSpec,
    stage: int,
    groups: np.ndarray,
    previous: str | None,
    observed: np.ndarray | None = None,
) -> BoundMechanism:
    """Resolve the 1-based ``stage`` mechanism for recruited ``groups`` given S_{stage-1}.

    ``observed`` is the realized stage assignment, used for CRD arm sizes when
    the trial spec fixes neither counts nor fractions.
    """
    mech = spec.stages[stage - 1].mechanism
    if isinstance(mech, CRDMechanismSpec):
        counts = _crd_counts(mech, stage, len(groups), previous, spec.num_arms, observed)
        return CompletelyRandomized(counts)
    table = dict(mech.p_by_group)
    if previous is not None:
        table.update(mech.p_by_selection.get(previous, {}))
    p = np.array([table.get(str(g), mech.p) for g in groups], dtype=float)
    return Bernoulli(p)
