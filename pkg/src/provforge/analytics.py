"""Compare recorded runs across containerization strategies.

Summary statistics, classical equal-variance one-way ANOVA, and Bonferroni
post-hoc pairwise t-tests. Every operation accepts either raw duration
samples (from run records) or published summary triplets (mean, std, n), so
results reported only as summaries can be re-analyzed exactly.
"""

from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .distributions import f_critical, f_sf, t_two_sided_p
from .errors import DegenerateInput, EmptyGroup
from .runs import RunRecord


@dataclass(frozen=True)
class StrategySample:
    """Run durations (minutes) of one strategy in one environment."""

    strategy: str
    environment_label: str
    durations: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "durations", tuple(float(d) for d in self.durations))
        if not self.durations:
            raise EmptyGroup(f"no durations for strategy {self.strategy}")
        if any(d <= 0 for d in self.durations):
            raise DegenerateInput(f"non-positive duration in strategy {self.strategy}")

    @property
    def n(self) -> int:
        return len(self.durations)

    @property
    def mean(self) -> float:
        return sum(self.durations) / len(self.durations)

    @property
    def std(self) -> float:
        """Sample standard deviation (n-1 denominator); 0.0 for a single value."""
        if len(self.durations) < 2:
            return 0.0
        return statistics.stdev(self.durations)


@dataclass(frozen=True)
class GroupSummary:
    """Published summary of one group: mean, sample std, and group size."""

    label: str
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class AnovaResult:
    f_statistic: float
    df_between: int
    df_within: int
    alpha: float
    critical_value: float
    reject_null: bool
    group_means: dict[str, float]
    group_stds: dict[str, float]

    def to_json_dict(self) -> dict[str, Any]:
        f = self.f_statistic
        return {
            "f_statistic": "Infinity" if math.isinf(f) else f,
            "df_between": self.df_between,
            "df_within": self.df_within,
            "alpha": self.alpha,
            "critical_value": self.critical_value,
            "reject_null": self.reject_null,
            "group_means": self.group_means,
            "group_stds": self.group_stds,
        }


@dataclass(frozen=True)
class PairwiseComparison:
    pair: tuple[str, str]
    t_statistic: float
    p_value: float
    per_test_alpha: float
    significant: bool

    def to_json_dict(self) -> dict[str, Any]:
        t = self.t_statistic
        return {
            "pair": list(self.pair),
            "t_statistic": "Infinity" if math.isinf(t) else t,
            "p_value": self.p_value,
            "per_test_alpha": self.per_test_alpha,
            "significant": self.significant,
        }


def summarize_runs(runs: Sequence[RunRecord]) -> list[StrategySample]:
    """Group run durations by strategy (all runs must share workflow and environment)."""
    if not runs:
        raise EmptyGroup("no runs to summarize")
    workflows = {r.workflow_name for r in runs}
    environments = {r.environment_label for r in runs}
    if len(workflows) > 1 or len(environments) > 1:
        raise DegenerateInput(
            f"runs mix workflows {sorted(workflows)} / environments {sorted(environments)}; filter first"
        )
    by_strategy: dict[str, list[float]] = {}
    for run in runs:
        by_strategy.setdefault(run.strategy.value, []).append(run.duration_minutes)
    return [
        StrategySample(
            strategy=strategy,
            environment_label=next(iter(environments)),
            durations=tuple(durations),
        )
        for strategy, durations in sorted(by_strategy.items())
    ]


def _coerce_groups(groups: Iterable[Any]) -> list[StrategySample | GroupSummary]:
    coerced: list[StrategySample | GroupSummary] = []
    for i, group in enumerate(groups):
        if isinstance(group, (StrategySample, GroupSummary)):
            coerced.append(group)
        elif isinstance(group, Mapping):
            coerced.append(
                GroupSummary(
                    label=str(group.get("label", f"group{i}")),
                    mean=float(group["mean"]),
                    std=float(group["std"]),
                    n=int(group["n"]),
                )
            )
        else:
            raise DegenerateInput(f"cannot interpret group input: {group!r}")
    return coerced


def _label(group: StrategySample | GroupSummary) -> str:
    return group.strategy if isinstance(group, StrategySample) else group.label


def _sums_of_squares(groups: list[StrategySample | GroupSummary]) -> tuple[float, float, int, int]:
    """(ss_between, ss_within, df_between, df_within).

    Raw samples are reduced with direct deviation sums; summaries use the
    closed form ss_within = sum((n_i - 1) s_i^2).
    """
    sizes = [g.n for g in groups]
    means = [g.mean for g in groups]
    total = sum(sizes)
    grand_mean = sum(n * m for n, m in zip(sizes, means)) / total
    ss_between = sum(n * (m - grand_mean) ** 2 for n, m in zip(sizes, means))
    ss_within = 0.0
    for group in groups:
        if isinstance(group, StrategySample):
            mean = group.mean
            ss_within += sum((d - mean) ** 2 for d in group.durations)
        else:
            ss_within += (group.n - 1) * group.std**2
    return ss_between, ss_within, len(groups) - 1, total - len(groups)


def _means_equal(groups: list[StrategySample | GroupSummary]) -> bool:
    first = groups[0].mean
    return all(math.isclose(g.mean, first, rel_tol=1e-12, abs_tol=1e-12) for g in groups)


def _check_anova_input(groups: list[StrategySample | GroupSummary], alpha: float) -> None:
    if len(groups) < 2:
        raise DegenerateInput(f"ANOVA needs at least 2 groups, got {len(groups)}")
    for group in groups:
        if group.n < 2:
            raise DegenerateInput(f"group {_label(group)} has n={group.n} < 2")
    if not (isinstance(alpha, float) and 0.0 < alpha < 1.0):
        raise DegenerateInput(f"alpha must be in (0, 1), got {alpha!r}")


def anova_one_way(groups: Iterable[Any], alpha: float = 0.05) -> AnovaResult:
    """One-way ANOVA over raw samples or summary triplets.

    F = MS_between / MS_within. Two degenerate inputs are defined, not errors:
    all groups constant and equal gives F = 0 (accept); zero within-variance
    with unequal means gives F = +inf (reject).
    """
    coerced = _coerce_groups(groups)
    _check_anova_input(coerced, alpha)
    ss_between, ss_within, df_between, df_within = _sums_of_squares(coerced)
    critical = f_critical(alpha, df_between, df_within)
    if ss_within == 0.0:
        # zero within-variance: decide by the means themselves (ss_between
        # carries grand-mean rounding noise at the 1e-30 level)
        f_statistic = 0.0 if _means_equal(coerced) else math.inf
    else:
        f_statistic = (ss_between / df_between) / (ss_within / df_within)
    return AnovaResult(
        f_statistic=f_statistic,
        df_between=df_between,
        df_within=df_within,
        alpha=alpha,
        critical_value=critical,
        reject_null=f_statistic > critical,
        group_means={_label(g): g.mean for g in coerced},
        group_stds={_label(g): g.std for g in coerced},
    )


def anova_p_value(result: AnovaResult) -> float:
    if math.isinf(result.f_statistic):
        return 0.0
    return f_sf(result.f_statistic, result.df_between, result.df_within)


def bonferroni_posthoc(groups: Iterable[Any], family_alpha: float = 0.05) -> list[PairwiseComparison]:
    """Pairwise two-sample t-tests with pooled within-variance and a
    Bonferroni-corrected per-test alpha of family_alpha / number_of_pairs."""
    coerced = _coerce_groups(groups)
    _check_anova_input(coerced, family_alpha)
    _, ss_within, _, df_within = _sums_of_squares(coerced)
    ms_within = ss_within / df_within
    pairs = list(itertools.combinations(coerced, 2))
    per_test_alpha = family_alpha / len(pairs)
    results = []
    for left, right in pairs:
        diff = left.mean - right.mean
        if ms_within == 0.0:
            equal = math.isclose(left.mean, right.mean, rel_tol=1e-12, abs_tol=1e-12)
            t_statistic = 0.0 if equal else math.copysign(math.inf, diff)
            p_value = 1.0 if equal else 0.0
        else:
            se = math.sqrt(ms_within * (1.0 / left.n + 1.0 / right.n))
            t_statistic = diff / se
            p_value = t_two_sided_p(t_statistic, df_within)
        results.append(
            PairwiseComparison(
                pair=(_label(left), _label(right)),
                t_statistic=t_statistic,
                p_value=p_value,
                per_test_alpha=per_test_alpha,
                significant=p_value < per_test_alpha,
            )
        )
    return results
