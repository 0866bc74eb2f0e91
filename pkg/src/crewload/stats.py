"""Within-subject statistics for strategy comparisons.

Works on a subjects-by-conditions score matrix: per-row normalization,
one-way repeated-measures ANOVA, paired t-tests with Bonferroni correction,
and column summaries. The F-distribution upper tail is computed through
the regularized incomplete beta function; two-sided paired-t p-values reuse
it via the identity t^2(d) ~ F(1, d).

All functions are pure. CSV layout: header row holds the condition labels,
the first column the subject/team ids.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.special import betainc


@dataclass
class TrialMatrix:
    """Rectangular subjects x conditions score table with labels."""

    values: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("matrix must be 2-dimensional")
        n, k = self.values.shape
        if n < 2 or k < 2:
            raise ValueError(f"need at least 2 subjects and 2 conditions, got {n}x{k}")
        if not np.isfinite(self.values).all():
            raise ValueError("matrix contains missing or non-finite cells")
        self.row_labels = tuple(str(r) for r in self.row_labels)
        self.col_labels = tuple(str(c) for c in self.col_labels)
        if len(self.row_labels) != n or len(self.col_labels) != k:
            raise ValueError("label counts do not match matrix shape")

    @property
    def n_subjects(self) -> int:
        return self.values.shape[0]

    @property
    def n_conditions(self) -> int:
        return self.values.shape[1]

    def select(self, labels: Sequence[str]) -> "TrialMatrix":
        """Column subset in the given order."""
        idx = []
        for lab in labels:
            if lab not in self.col_labels:
                raise KeyError(f"unknown condition {lab!r}; have {list(self.col_labels)}")
            idx.append(self.col_labels.index(lab))
        return TrialMatrix(self.values[:, idx], self.row_labels, tuple(labels))

    @classmethod
    def from_csv(cls, text: str) -> "TrialMatrix":
        rows = [line.split(",") for line in text.strip().splitlines() if line.strip()]
        if len(rows) < 3 or len(rows[0]) < 3:
            raise ValueError("CSV needs a header plus >=2 rows and >=2 condition columns")
        width = len(rows[0])
        for i, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(f"ragged CSV: line {i + 1} has {len(row)} fields, expected {width}")
        header = [c.strip() for c in rows[0]]
        row_labels = [r[0].strip() for r in rows[1:]]
        try:
            values = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
        except ValueError as exc:
            raise ValueError(f"non-numeric cell in CSV: {exc}") from exc
        return cls(values, tuple(row_labels), tuple(header[1:]))

    @classmethod
    def read_csv(cls, path: str) -> "TrialMatrix":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_csv(fh.read())

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("," + ",".join(self.col_labels) + "\n")
        for label, row in zip(self.row_labels, self.values):
            out.write(label + "," + ",".join(repr(float(x)) for x in row) + "\n")
        return out.getvalue()


def normalize_rows(matrix: TrialMatrix) -> TrialMatrix:
    """Divide every cell by its row mean so each subject's row averages 1."""
    means = matrix.values.mean(axis=1, keepdims=True)
    if np.any(means <= 0):
        bad = matrix.row_labels[int(np.argmax(means[:, 0] <= 0))]
        raise ValueError(f"row {bad!r} has non-positive mean; cannot normalize")
    return TrialMatrix(matrix.values / means, matrix.row_labels, matrix.col_labels)


def f_sf(f: float, d1: int, d2: int) -> float:
    """Upper-tail probability of the F(d1, d2) distribution.

    P[F > f] = I_x(d2/2, d1/2) with x = d2 / (d2 + d1*f), where I is the
    regularized incomplete beta function.
    """
    if d1 < 1 or d2 < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got ({d1}, {d2})")
    if f < 0:
        raise ValueError(f"F statistic must be >= 0, got {f}")
    if math.isinf(f):
        return 0.0
    x = d2 / (d2 + d1 * f)
    return float(betainc(d2 / 2.0, d1 / 2.0, x))


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided tail P[|T| > |t|] with ``df`` degrees of freedom (via t^2 ~ F(1, df))."""
    return f_sf(t * t, 1, df)


@dataclass(frozen=True)
class AnovaResult:
    ss_between: float
    ss_within: float
    ss_subjects: float
    ss_error: float
    df_between: int
    df_within: int
    df_error: int
    ms_between: float
    ms_error: float
    f_stat: float
    p_value: float
    degenerate: bool = False


def rm_anova(matrix: TrialMatrix) -> AnovaResult:
    """One-way repeated-measures decomposition over conditions.

    SS_between over condition means, SS_subjects over row means,
    SS_within = SS_total - SS_between, SS_error = SS_within - SS_subjects;
    F = MS_between / MS_error on (k-1, (k-1)(n-1)) degrees of freedom.
    A zero error variance is reported as p=0 with the degenerate flag set
    (p=1 when the between-condition variance is zero as well).
    """
    x = matrix.values
    n, k = x.shape
    grand = x.mean()
    col_means = x.mean(axis=0)
    row_means = x.mean(axis=1)
    ss_between = n * float(((col_means - grand) ** 2).sum())
    ss_subjects = k * float(((row_means - grand) ** 2).sum())
    ss_total = float(((x - grand) ** 2).sum())
    ss_within = ss_total - ss_between
    ss_error = ss_within - ss_subjects
    df_between = k - 1
    df_within = k * (n - 1)
    df_error = (k - 1) * (n - 1)
    ms_between = ss_between / df_between
    ms_error = ss_error / df_error
    # Subtractive cancellation can leave tiny dust where a sum of squares is
    # conceptually zero; judge degeneracy relative to the data scale.
    tiny = 1e-12 * max(1.0, ss_total)
    if ms_error <= tiny:
        degenerate = True
        if ms_between <= tiny:
            f_stat, p_value = 0.0, 1.0
        else:
            f_stat, p_value = float("inf"), 0.0
    else:
        degenerate = False
        f_stat = ms_between / ms_error
        p_value = f_sf(f_stat, df_between, df_error)
    return AnovaResult(
        ss_between, ss_within, ss_subjects, ss_error,
        df_between, df_within, df_error,
        ms_between, ms_error, f_stat, p_value, degenerate,
    )


@dataclass(frozen=True)
class PairwiseResult:
    pair: tuple[str, str]
    mean_diff: float
    t_stat: float
    df: int
    p_raw: float
    p_adjusted: float
    significant_raw: bool
    significant_adjusted: bool
    degenerate: bool = False


def paired_t(x: np.ndarray, y: np.ndarray) -> tuple[float, int, float, bool]:
    """Paired t-test: returns (t, df, two-sided p, degenerate flag)."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    n = len(d)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    tiny = 1e-12 * max(1.0, float(np.abs(d).max()))
    if sd <= tiny:
        if abs(mean) <= tiny:
            return 0.0, n - 1, 1.0, True
        return math.copysign(float("inf"), mean), n - 1, 0.0, True
    t = mean / (sd / math.sqrt(n))
    return t, n - 1, t_sf_two_sided(t, n - 1), False


def bonferroni_pairwise(matrix: TrialMatrix, alpha: float = 0.1) -> list[PairwiseResult]:
    """Paired t-tests for every condition pair with Bonferroni adjustment.

    Both the raw and the adjusted p are reported, each with its own
    significance flag at ``alpha`` (adjusted p = min(1, raw * number of
    pairs)).
    """
    k = matrix.n_conditions
    n_pairs = k * (k - 1) // 2
    results = []
    for i, j in combinations(range(k), 2):
        xi, xj = matrix.values[:, i], matrix.values[:, j]
        t, df, p_raw, degenerate = paired_t(xi, xj)
        p_adj = min(1.0, p_raw * n_pairs)
        results.append(
            PairwiseResult(
                pair=(matrix.col_labels[i], matrix.col_labels[j]),
                mean_diff=float(xi.mean() - xj.mean()),
                t_stat=t,
                df=df,
                p_raw=p_raw,
                p_adjusted=p_adj,
                significant_raw=p_raw < alpha,
                significant_adjusted=p_adj < alpha,
                degenerate=degenerate,
            )
        )
    return results


@dataclass(frozen=True)
class ConditionSummary:
    label: str
    mean: float
    sd: float


def summarize(matrix: TrialMatrix) -> list[ConditionSummary]:
    """Per-condition mean and sample (n-1) standard deviation."""
    return [
        ConditionSummary(lab, float(col.mean()), float(col.std(ddof=1)))
        for lab, col in zip(matrix.col_labels, matrix.values.T)
    ]


@dataclass
class StatsReport:
    """ANOVA + post-hoc bundle with text and JSON renderings."""

    conditions: tuple[str, ...]
    n_subjects: int
    anova: AnovaResult
    pairwise: list[PairwiseResult]
    summaries: list[ConditionSummary]
    alpha: float
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "conditions": list(self.conditions),
            "n_subjects": self.n_subjects,
            "alpha": self.alpha,
            "anova": {
                "ss_between": self.anova.ss_between,
                "ss_within": self.anova.ss_within,
                "ss_subjects": self.anova.ss_subjects,
                "ss_error": self.anova.ss_error,
                "df_between": self.anova.df_between,
                "df_within": self.anova.df_within,
                "df_error": self.anova.df_error,
                "ms_between": self.anova.ms_between,
                "ms_error": self.anova.ms_error,
                "f_stat": self.anova.f_stat,
                "p_value": self.anova.p_value,
                "degenerate": self.anova.degenerate,
            },
            "pairwise": [
                {
                    "pair": list(p.pair),
                    "mean_diff": p.mean_diff,
                    "t_stat": p.t_stat,
                    "df": p.df,
                    "p_raw": p.p_raw,
                    "p_adjusted": p.p_adjusted,
                    "significant_raw": p.significant_raw,
                    "significant_adjusted": p.significant_adjusted,
                    "degenerate": p.degenerate,
                }
                for p in self.pairwise
            ],
            "summary": [
                {"condition": s.label, "mean": s.mean, "sd": s.sd} for s in self.summaries
            ],
            "notes": self.notes,
        }
        return json.dumps(doc, indent=2) + "\n"

    def to_text(self) -> str:
        a = self.anova
        lines = [
            f"Repeated-measures ANOVA over {len(self.conditions)} conditions, "
            f"{self.n_subjects} subjects (no sphericity correction)",
            "",
            f"{'source':<16}{'df':>6}{'SS':>12}{'MS':>12}{'F':>10}{'p':>10}",
            f"{'between':<16}{a.df_between:>6}{a.ss_between:>12.4f}{a.ms_between:>12.4f}"
            f"{a.f_stat:>10.4f}{a.p_value:>10.4f}",
            f"{'within':<16}{a.df_within:>6}{a.ss_within:>12.4f}"
            f"{a.ss_within / a.df_within:>12.4f}",
            f"{'error':<16}{a.df_error:>6}{a.ss_error:>12.4f}{a.ms_error:>12.4f}",
            "",
            f"{'condition':<16}{'mean':>10}{'sd':>10}",
        ]
        for s in self.summaries:
            lines.append(f"{s.label:<16}{s.mean:>10.4f}{s.sd:>10.4f}")
        lines += [
            "",
            f"pairwise paired t-tests (alpha={self.alpha}, "
            f"Bonferroni x{len(self.pairwise)}):",
            f"{'pair':<20}{'diff':>10}{'t':>10}{'p raw':>10}{'p adj':>10}  flags",
        ]
        for p in self.pairwise:
            flags = []
            if p.significant_raw:
                flags.append("sig(raw)")
            if p.significant_adjusted:
                flags.append("sig(adj)")
            if p.degenerate:
                flags.append("degenerate")
            lines.append(
                f"{p.pair[0] + ' vs ' + p.pair[1]:<20}{p.mean_diff:>10.4f}{p.t_stat:>10.4f}"
                f"{p.p_raw:>10.4f}{p.p_adjusted:>10.4f}  {' '.join(flags)}"
            )
        if a.degenerate:
            lines.append("warning: zero error variance; p-value degenerate")
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines) + "\n"


def analyze(matrix: TrialMatrix, alpha: float = 0.1, notes: Sequence[str] = ()) -> StatsReport:
    """Full battery on one matrix: ANOVA, Bonferroni pairwise, summaries."""
    return StatsReport(
        conditions=matrix.col_labels,
        n_subjects=matrix.n_subjects,
        anova=rm_anova(matrix),
        pairwise=bonferroni_pairwise(matrix, alpha),
        summaries=summarize(matrix),
        alpha=alpha,
        notes=list(notes),
    )
