"""Selection rules, vectorized over rows of candidate assignments."""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from selrand.stats.statistics import SQRT2, ate_zscore_rows, relative_risk_rows
from selrand.trial.spec import EnrichmentRuleSpec, MinRelativeRiskRuleSpec

ENRICHMENT_SIZES: dict[str, dict[str, int]] = {
    "only_low": {"low": 40},
    "only_high": {"high": 40},
    "both": {"low": 20, "high": 20},
}


def enrichment_select(
    delta: float,
    thresholds: tuple[float, float],
    sizes: Mapping[str, Mapping[str, int]] = ENRICHMENT_SIZES,
) -> tuple[str, dict[str, int]]:
    """Map the scaled effect difference to a selection label and its recruitment sizes."""
    lo, hi = thresholds
    if not lo < hi:
        raise ValueError(f"thresholds must be increasing, got {thresholds}")
    if delta < lo:
        label = "only_low"
    elif delta > hi:
        label = "only_high"
    else:
        label = "both"
    return label, dict(sizes[label])


class Selector(ABC):
    """A selection rule evaluated on the stages it is allowed to read."""

    labels: tuple[str, ...]

    @abstractmethod
    def reads(self, groups: np.ndarray) -> np.ndarray:
        """Mask of the units (by group label) whose outcomes the rule reads."""

    @abstractmethod
    def evaluate(
        self, y: np.ndarray, z: np.ndarray, groups: np.ndarray, arm_pair: tuple[int, int]
    ) -> np.ndarray:
        """Label index per row, for rows over exactly the columns in ``groups``."""

    @abstractmethod
    def selected_groups(self, label: str) -> tuple[str, ...]:
        """Groups the final hypothesis covers after ``label`` is selected."""


@dataclass(frozen=True)
class EnrichmentSelector(Selector):
    rule: EnrichmentRuleSpec

    @property
    def labels(self) -> tuple[str, ...]:
        return self.rule.labels

    def reads(self, groups: np.ndarray) -> np.ndarray:
        return np.isin(groups, [self.rule.low_group, self.rule.high_group])

    def deltas(
        self, y: np.ndarray, z: np.ndarray, groups: np.ndarray, arm_pair: tuple[int, int]
    ) -> np.ndarray:
        # an undefined per-group effect counts as no effect
        low, _ = ate_zscore_rows(y, z, groups == self.rule.low_group, arm_pair)
        high, _ = ate_zscore_rows(y, z, groups == self.rule.high_group, arm_pair)
        return (high - low) / SQRT2

    def evaluate(self, y, z, groups, arm_pair):
        lo, hi = self.rule.thresholds
        delta = self.deltas(y, z, groups, arm_pair)
        return np.where(delta < lo, 0, np.where(delta > hi, 1, 2)).astype(np.int64)

    def selected_groups(self, label: str) -> tuple[str, ...]:
        return self.rule.selected_groups(label)


@dataclass(frozen=True)
class MinRelativeRiskSelector(Selector):
    rule: MinRelativeRiskRuleSpec

    @property
    def labels(self) -> tuple[str, ...]:
        return self.rule.labels

    def reads(self, groups: np.ndarray) -> np.ndarray:
        return np.isin(groups, self.rule.groups)

    def risks(
        self, y: np.ndarray, z: np.ndarray, groups: np.ndarray, arm_pair: tuple[int, int]
    ) -> np.ndarray:
        # zero control events makes a group unselectable (+inf)
        return np.stack(
            [relative_risk_rows(y, z, groups == g, arm_pair)[0] for g in self.rule.groups], axis=1
        )

    def evaluate(self, y, z, groups, arm_pair):
        # ties go to the first group in declared order
        return np.argmin(self.risks(y, z, groups, arm_pair), axis=1).astype(np.int64)

    def selected_groups(self, label: str) -> tuple[str, ...]:
        return self.rule.selected_groups(label)


def make_selector(rule: EnrichmentRuleSpec | MinRelativeRiskRuleSpec) -> Selector:
    if isinstance(rule, EnrichmentRuleSpec):
        return EnrichmentSelector(rule)
    return MinRelativeRiskSelector(rule)
