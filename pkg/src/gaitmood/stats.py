"""Behavioral statistics: paired t-test, Wilcoxon signed-rank, one-way ANOVA.

Conventions: the t-test uses the sample (n-1) standard deviation of the
differences; Wilcoxon drops zero differences, assigns midranks to ties, and
reports the normal approximation Z with tie-corrected variance; ANOVA is the
between-subjects F. Tail probabilities come from scipy.special's
incomplete-beta based CDFs (absolute error well under 1e-8).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .errors import DataError, DegenerateDataError, ParseError


@dataclass(frozen=True)
class PairedSample:
    """Before/after scores for the same participants (e.g. a PANAS subscale)."""

    pre: np.ndarray
    post: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "pre", np.asarray(self.pre, dtype=np.float64))
        object.__setattr__(self, "post", np.asarray(self.post, dtype=np.float64))
        if self.pre.shape != self.post.shape or self.pre.ndim != 1:
            raise DataError("pre and post must be equal-length vectors")
        if self.pre.size < 2:
            raise DataError("paired sample needs n >= 2")

    @property
    def differences(self) -> np.ndarray:
        return self.post - self.pre


@dataclass(frozen=True)
class GroupedSample:
    """Independent groups of observations (e.g. mean heart rate per emotion)."""

    groups: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        arrays = tuple(np.asarray(g, dtype=np.float64) for g in self.groups)
        object.__setattr__(self, "groups", arrays)
        if len(arrays) < 2:
            raise DataError("need at least 2 groups")
        if any(g.ndim != 1 or g.size == 0 for g in arrays):
            raise DataError("every group must be a non-empty vector")


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float


@dataclass(frozen=True)
class WilcoxonResult:
    z: float
    p: float
    n_nonzero: int


@dataclass(frozen=True)
class AnovaResult:
    f: float
    df_between: int
    df_within: int
    p: float


def paired_t_test(sample: PairedSample) -> TTestResult:
    """Two-tailed paired t-test on post - pre."""
    d = sample.differences
    n = d.size
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateDataError("paired differences have zero variance")
    t = float(d.mean() / (sd / np.sqrt(n)))
    df = n - 1
    p = float(2.0 * special.stdtr(df, -abs(t)))
    return TTestResult(t, df, min(p, 1.0))


def wilcoxon_signed_rank(sample: PairedSample) -> WilcoxonResult:
    """Signed-rank test via the normal approximation with tie correction.

    Z is signed: positive when post tends to exceed pre. Two-tailed p.
    """
    d = sample.differences
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise DegenerateDataError("all paired differences are zero")
    magnitudes = np.abs(d)
    order = np.argsort(magnitudes, kind="mergesort")
    ranks = np.empty(n, dtype=np.float64)
    sorted_mag = magnitudes[order]
    tie_term = 0.0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_mag[j + 1] == sorted_mag[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        size = j - i + 1
        tie_term += size ** 3 - size
        i = j + 1
    w_plus = float(ranks[d > 0].sum())
    mean = n * (n + 1) / 4.0
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0
    if variance <= 0.0:
        raise DegenerateDataError("zero variance in signed ranks (all magnitudes tied at one value)")
    z = (w_plus - mean) / np.sqrt(variance)
    p = float(2.0 * special.ndtr(-abs(z)))
    return WilcoxonResult(float(z), min(p, 1.0), n)


def one_way_anova(sample: GroupedSample) -> AnovaResult:
    """One-way between-subjects ANOVA."""
    groups = sample.groups
    k = len(groups)
    n = sum(g.size for g in groups)
    if n <= k:
        raise DataError(f"ANOVA needs more observations ({n}) than groups ({k})")
    grand = float(np.concatenate(groups).mean())
    ss_between = float(sum(g.size * (g.mean() - grand) ** 2 for g in groups))
    ss_within = float(sum(((g - g.mean()) ** 2).sum() for g in groups))
    df_between = k - 1
    df_within = n - k
    if ss_within == 0.0:
        if ss_between == 0.0:
            raise DegenerateDataError("all observations identical; F is undefined")
        return AnovaResult(float("inf"), df_between, df_within, 0.0)
    f = (ss_between / df_between) / (ss_within / df_within)
    p = float(special.fdtrc(df_between, df_within, f))
    return AnovaResult(float(f), df_between, df_within, min(p, 1.0))


# ---------------------------------------------------------------------------
# CLI-facing file formats

_PANAS_HEADER = ["participant", "condition", "emotion", "phase", "positive_affect", "negative_affect"]
_HR_SUMMARY_HEADER = ["participant", "condition", "emotion", "mean_bpm"]


def load_panas_csv(path: Path | str) -> list[dict]:
    """Rows of the PANAS CSV: one pre or post rating per participant, emotion."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _PANAS_HEADER:
            raise ParseError(f"{path}: expected header {','.join(_PANAS_HEADER)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append(
                    {
                        "participant": row[0],
                        "condition": int(row[1]),
                        "emotion": row[2],
                        "phase": row[3],
                        "positive_affect": float(row[4]),
                        "negative_affect": float(row[5]),
                    }
                )
            except (IndexError, ValueError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            if rows[-1]["phase"] not in ("pre", "post"):
                raise ParseError(f"{path}: line {lineno}: phase must be 'pre' or 'post'")
    return rows


def load_hr_summary_csv(path: Path | str) -> list[dict]:
    """Rows of the heart-rate summary CSV: one mean bpm per participant, emotion."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _HR_SUMMARY_HEADER:
            raise ParseError(f"{path}: expected header {','.join(_HR_SUMMARY_HEADER)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append(
                    {
                        "participant": row[0],
                        "condition": int(row[1]),
                        "emotion": row[2],
                        "mean_bpm": float(row[3]),
                    }
                )
            except (IndexError, ValueError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    return rows


def panas_report(rows: list[dict]) -> dict:
    """Paired pre/post tests per condition, emotion, and affect subscale.

    Both the t-test and the Wilcoxon signed-rank are reported; choosing
    between them (a normality judgement) is left to the analyst.
    """
    report: dict = {}
    conditions = sorted({r["condition"] for r in rows})
    for condition in conditions:
        cond_doc: dict = {}
        cond_rows = [r for r in rows if r["condition"] == condition]
        emotions = sorted({r["emotion"] for r in cond_rows})
        for emotion in emotions:
            emo_doc: dict = {}
            for affect in ("positive_affect", "negative_affect"):
                pre, post = [], []
                by_pid: dict[str, dict[str, float]] = {}
                for r in cond_rows:
                    if r["emotion"] == emotion:
                        by_pid.setdefault(r["participant"], {})[r["phase"]] = r[affect]
                for pid in sorted(by_pid):
                    phases = by_pid[pid]
                    if "pre" in phases and "post" in phases:
                        pre.append(phases["pre"])
                        post.append(phases["post"])
                if len(pre) < 2:
                    emo_doc[affect] = {"error": f"fewer than 2 complete pre/post pairs ({len(pre)})"}
                    continue
                sample = PairedSample(np.array(pre), np.array(post))
                entry: dict = {
                    "n": len(pre),
                    "pre_mean": float(np.mean(pre)),
                    "pre_sd": float(np.std(pre, ddof=1)),
                    "post_mean": float(np.mean(post)),
                    "post_sd": float(np.std(post, ddof=1)),
                }
                try:
                    t = paired_t_test(sample)
                    entry["t_test"] = {"t": t.t, "df": t.df, "p": t.p}
                except DegenerateDataError as exc:
                    entry["t_test"] = {"error": str(exc)}
                try:
                    w = wilcoxon_signed_rank(sample)
                    entry["wilcoxon"] = {"z": w.z, "p": w.p, "n_nonzero": w.n_nonzero}
                except DegenerateDataError as exc:
                    entry["wilcoxon"] = {"error": str(exc)}
                emo_doc[affect] = entry
            cond_doc[emotion] = emo_doc
        report[str(condition)] = cond_doc
    return report


def heart_rate_report(rows: list[dict]) -> dict:
    """One-way ANOVA of mean heart rate grouped by emotion (conditions pooled)."""
    emotions = sorted({r["emotion"] for r in rows})
    groups = [
        np.array([r["mean_bpm"] for r in rows if r["emotion"] == emotion]) for emotion in emotions
    ]
    doc: dict = {
        "emotions": {
            emotion: {
                "n": int(g.size),
                "mean": float(g.mean()),
                "sd": float(g.std(ddof=1)) if g.size > 1 else None,
            }
            for emotion, g in zip(emotions, groups)
        }
    }
    try:
        result = one_way_anova(GroupedSample(tuple(groups)))
        doc["anova"] = {
            "f": result.f,
            "df_between": result.df_between,
            "df_within": result.df_within,
            "p": result.p,
        }
    except (DataError, DegenerateDataError) as exc:
        doc["anova"] = {"error": str(exc)}
    return doc
