"""Scott-Knott effect-size clustering of technique ranks.

The F1 results table is first turned into rank observations: within each
(dataset, model, parsing, aggregation, window) context, techniques are ranked
by descending F1 (exact ties share the mean rank).  Each technique's ranks
across contexts form its observation sample; samples may have unequal sizes
when combinations are incompatible or failed, and such techniques are flagged
in the output.

Clustering then recursively splits the mean-ordered techniques at the binary
split maximizing the between-group sum of squares, accepting a split only if
the likelihood-ratio statistic lambda = pi/(2*(pi-2)) * B/sigma0^2 clears the
chi-square critical value at the given alpha (with k/(pi-2) degrees of
freedom) and the pooled Cohen's d across the split is non-negligible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import chi2

from .errors import RankingError

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05
DEFAULT_EFFECT_THRESHOLD = 0.2

_SK_COEF = math.pi / (2.0 * (math.pi - 2.0))
_SK_DOF = 1.0 / (math.pi - 2.0)


@dataclass
class Observation:
    technique: str
    model: str
    dataset: str
    initial_rank: float


@dataclass
class RankGroup:
    rank: int
    techniques: list[str]
    mean_rank: float


@dataclass
class RankGroups:
    groups: list[RankGroup]
    flagged: list[str] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)

    def group_of(self, technique: str) -> int:
        for g in self.groups:
            if technique in g.techniques:
                return g.rank
        raise RankingError(f"technique {technique!r} not in any group")


def initial_ranks(
    f1_by_technique: Mapping[str, float], model: str, dataset: str
) -> list[Observation]:
    """Rank techniques by descending F1; exact ties share the mean rank."""
    if len(f1_by_technique) < 2:
        raise RankingError(
            f"ranking needs at least 2 techniques, got {len(f1_by_technique)}"
        )
    ordered = sorted(f1_by_technique.items(), key=lambda kv: (-kv[1], kv[0]))
    observations = []
    position = 0
    while position < len(ordered):
        tie_end = position
        while tie_end + 1 < len(ordered) and ordered[tie_end + 1][1] == ordered[position][1]:
            tie_end += 1
        # positions are 0-based; ranks are 1-based
        mean_rank = (position + tie_end) / 2.0 + 1.0
        for i in range(position, tie_end + 1):
            observations.append(
                Observation(
                    technique=ordered[i][0],
                    model=model,
                    dataset=dataset,
                    initial_rank=mean_rank,
                )
            )
        position = tie_end + 1
    return observations


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Mean difference over pooled (n-1)-weighted standard deviation."""
    if len(a) < 2 or len(b) < 2:
        raise RankingError(
            f"cohens_d needs at least 2 values per sample, got {len(a)}/{len(b)}"
        )
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    diff = float(xa.mean() - xb.mean())
    pooled_var = (
        (len(a) - 1) * float(xa.var(ddof=1)) + (len(b) - 1) * float(xb.var(ddof=1))
    ) / (len(a) + len(b) - 2)
    if pooled_var <= 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / math.sqrt(pooled_var)


def _variance_estimate(samples: list[np.ndarray]) -> float:
    """Classic Scott-Knott sigma0^2 over treatment means.

    (sum of squared mean deviations + v * s^2 / r_h) / (k + v) with v the
    pooled error degrees of freedom, s^2 the pooled within-treatment variance
    and r_h the harmonic mean sample size.
    """
    k = len(samples)
    means = np.array([s.mean() for s in samples])
    sq_means = float(np.sum((means - means.mean()) ** 2))
    n_total = sum(len(s) for s in samples)
    v = n_total - k
    if v > 0:
        within = sum(float(np.sum((s - s.mean()) ** 2)) for s in samples)
        s2 = within / v
        r_h = k / sum(1.0 / len(s) for s in samples)
        return (sq_means + v * s2 / r_h) / (k + v)
    return sq_means / k if k > 0 else 0.0


def _best_between_split(means: np.ndarray) -> tuple[int, float]:
    """Index i and between-group SS of the best ordered split [0:i) vs [i:)."""
    k = len(means)
    grand = float(means.mean())
    best_i, best_b = 1, -1.0
    for i in range(1, k):
        m1 = float(means[:i].mean())
        m2 = float(means[i:].mean())
        b = i * (m1 - grand) ** 2 + (k - i) * (m2 - grand) ** 2
        if b > best_b:
            best_i, best_b = i, b
    return best_i, best_b


def sk_esd(
    samples_by_technique: Mapping[str, Sequence[float]],
    alpha: float = DEFAULT_ALPHA,
    effect_threshold: float = DEFAULT_EFFECT_THRESHOLD,
) -> RankGroups:
    """Cluster techniques into statistically distinct groups of mean rank."""
    usable: dict[str, np.ndarray] = {}
    excluded: list[str] = []
    for name in sorted(samples_by_technique):
        obs = np.asarray(samples_by_technique[name], dtype=np.float64)
        if len(obs) < 2:
            log.warning(
                "technique %r has %d observation(s); excluded from ranking",
                name, len(obs),
            )
            excluded.append(name)
            continue
        usable[name] = obs
    if not usable:
        raise RankingError("no technique has enough observations to rank")

    max_n = max(len(obs) for obs in usable.values())
    flagged = sorted(name for name, obs in usable.items() if len(obs) < max_n)

    # mean-ordered technique list; name tiebreak keeps this a pure function
    # of the sample multiset rather than of dict insertion order
    ordered = sorted(usable, key=lambda name: (float(usable[name].mean()), name))

    def partition(names: list[str]) -> list[list[str]]:
        k = len(names)
        if k < 2:
            return [names]
        means = np.array([float(usable[n].mean()) for n in names])
        split_at, between = _best_between_split(means)
        if between <= 0.0:
            return [names]
        sigma0 = _variance_estimate([usable[n] for n in names])
        if sigma0 <= 0.0:
            return [names]
        lam = _SK_COEF * between / sigma0
        critical = float(chi2.ppf(1.0 - alpha, k * _SK_DOF))
        left, right = names[:split_at], names[split_at:]
        pooled_left = np.concatenate([usable[n] for n in left])
        pooled_right = np.concatenate([usable[n] for n in right])
        effect = abs(cohens_d(pooled_left, pooled_right))
        if lam > critical and effect >= effect_threshold:
            return partition(left) + partition(right)
        return [names]

    groups = []
    for rank, names in enumerate(partition(ordered), start=1):
        mean_rank = float(np.mean([usable[n].mean() for n in names]))
        groups.append(RankGroup(rank=rank, techniques=names, mean_rank=mean_rank))
    return RankGroups(groups=groups, flagged=flagged, excluded=excluded)


def observations_from_results(rows: Sequence[Mapping[str, str]]) -> dict[str, list[float]]:
    """Build per-technique rank samples from results-CSV rows.

    A context is everything identifying a cell except the representation;
    each context with >=2 techniques contributes one rank observation per
    technique present.
    """
    contexts: dict[tuple, dict[str, float]] = {}
    for row in rows:
        key = (
            row["dataset"],
            row["model"],
            row.get("parsing", ""),
            row.get("aggregation", ""),
            row.get("window", ""),
            row.get("stride", ""),
        )
        contexts.setdefault(key, {})[row["representation"]] = float(row["f1"])
    samples: dict[str, list[float]] = {}
    for key in sorted(contexts):
        cell = contexts[key]
        if len(cell) < 2:
            continue
        for obs in initial_ranks(cell, model=key[1], dataset=key[0]):
            samples.setdefault(obs.technique, []).append(obs.initial_rank)
    return samples


def format_rank_report(result: RankGroups, n_obs: Mapping[str, int] | None = None) -> str:
    """Plain-text table: group, technique, mean_rank, n_observations, missing flag."""
    lines = ["group  technique             mean_rank  n_obs  missing"]
    for group in result.groups:
        for name in group.techniques:
            count = "" if n_obs is None else str(n_obs.get(name, ""))
            flag = "*" if name in result.flagged else ""
            lines.append(
                f"{group.rank:<5d}  {name:<20s}  {group.mean_rank:>9.3f}  {count:>5s}  {flag}"
            )
    if result.excluded:
        lines.append("")
        lines.append(
            "excluded (fewer than 2 observations): " + ", ".join(result.excluded)
        )
    return "\n".join(lines) + "\n"
