"""ROC analysis: Mann-Whitney AUC, plug-in binormal fit, design ranking."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.stats import norm

__all__ = [
    "AUCResult",
    "BinormalFit",
    "DesignAUC",
    "RankReport",
    "ScoreSet",
    "binormal_fit",
    "empirical_auc",
    "empirical_roc",
    "rank_designs",
    "roc_csv",
]

Z95 = norm.ppf(0.975)


@dataclass(frozen=True)
class ScoreSet:
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        for name in ("positives", "negatives"):
            v = np.asarray(getattr(self, name), dtype=float).ravel()
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} contain non-finite scores")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class AUCResult:
    auc: float
    se: float
    ci_low: float
    ci_high: float

    @property
    def ci_half_width(self) -> float:
        return Z95 * self.se


def _as_scoreset(s, negatives=None) -> ScoreSet:
    if negatives is not None:
        return ScoreSet(s, negatives)
    return s if isinstance(s, ScoreSet) else ScoreSet(*s)


def empirical_auc(s, negatives=None) -> AUCResult:
    """Mann-Whitney AUC (ties count one half) with a Hanley-McNeil 95% interval.

    Accepts a :class:`ScoreSet` or ``(positives, negatives)``.
    """
    s = _as_scoreset(s, negatives)
    p, n = s.positives, s.negatives
    if p.size == 0 or n.size == 0:
        raise ValueError("both score sets must be non-empty")
    ns = np.sort(n)
    below = np.searchsorted(ns, p, side="left")
    upto = np.searchsorted(ns, p, side="right")
    auc = float((below + 0.5 * (upto - below)).sum() / (p.size * n.size))
    q1 = auc / (2.0 - auc)
    q2 = 2.0 * auc * auc / (1.0 + auc)
    var = (auc * (1 - auc) + (p.size - 1) * (q1 - auc ** 2)
           + (n.size - 1) * (q2 - auc ** 2)) / (p.size * n.size)
    se = float(np.sqrt(max(var, 0.0)))
    half = Z95 * se
    return AUCResult(auc, se, max(0.0, auc - half), min(1.0, auc + half))


@dataclass(frozen=True)
class BinormalFit:
    a: float
    b: float
    auc: float

    def tpf(self, fpf) -> np.ndarray:
        fpf = np.asarray(fpf, dtype=float)
        with np.errstate(divide="ignore"):
            return norm.cdf(self.a + self.b * norm.ppf(fpf))


def binormal_fit(s, negatives=None) -> BinormalFit:
    """Moment plug-in binormal ROC: ``a = (mu_P - mu_N)/sd_P``, ``b = sd_N/sd_P``."""
    s = _as_scoreset(s, negatives)
    if s.positives.size < 2 or s.negatives.size < 2:
        raise ValueError("binormal fit needs at least two scores per class")
    sd_p = s.positives.std(ddof=1)
    sd_n = s.negatives.std(ddof=1)
    if sd_p == 0 or sd_n == 0:
        raise ValueError("binormal fit needs non-zero variance in both classes")
    a = (s.positives.mean() - s.negatives.mean()) / sd_p
    b = sd_n / sd_p
    return BinormalFit(float(a), float(b), float(norm.cdf(a / np.sqrt(1.0 + b * b))))


def empirical_roc(s, fpf, negatives=None) -> np.ndarray:
    """Empirical ROC polyline (ties drawn as diagonal segments) evaluated at ``fpf``."""
    s = _as_scoreset(s, negatives)
    thresholds = np.unique(np.concatenate([s.positives, s.negatives]))[::-1]
    fp = np.concatenate([[0.0], [(s.negatives >= t).mean() for t in thresholds]])
    tp = np.concatenate([[0.0], [(s.positives >= t).mean() for t in thresholds]])
    fpf = np.asarray(fpf, dtype=float)
    j = np.searchsorted(fp, fpf, side="right") - 1
    j = np.clip(j, 0, fp.size - 1)
    out = tp[j].copy()
    inner = j < fp.size - 1
    jj = j[inner]
    span = fp[jj + 1] - fp[jj]
    out[inner] = tp[jj] + (tp[jj + 1] - tp[jj]) * (fpf[inner] - fp[jj]) / span
    return out


def roc_csv(s, negatives=None, points: int = 101) -> str:
    """CSV text ``fpf,tpf_empirical,tpf_binormal`` at ``points`` evenly spaced FPFs."""
    s = _as_scoreset(s, negatives)
    fpf = np.linspace(0.0, 1.0, points)
    emp = empirical_roc(s, fpf)
    try:
        bino = binormal_fit(s).tpf(fpf)
    except ValueError:
        bino = np.full_like(fpf, np.nan)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fpf", "tpf_empirical", "tpf_binormal"])
    for row in zip(fpf, emp, bino):
        w.writerow([f"{v:.10g}" for v in row])
    return buf.getvalue()


# -- ranking --------------------------------------------------------------------

@dataclass(frozen=True)
class DesignAUC:
    auc_empirical: float
    ci_half_width: float = 0.0
    binormal: BinormalFit | None = None
    n_pos: int = 0
    n_neg: int = 0

    @classmethod
    def from_scores(cls, s, negatives=None) -> "DesignAUC":
        s = _as_scoreset(s, negatives)
        emp = empirical_auc(s)
        try:
            bino = binormal_fit(s)
        except ValueError:
            bino = None
        return cls(emp.auc, emp.ci_half_width, bino, s.positives.size, s.negatives.size)


@dataclass
class RankReport:
    entries: dict
    ordering: list
    separated: dict = field(default_factory=dict)
    """``(design_a, design_b) -> bool``; False when the 95% intervals overlap."""

    def not_separated(self) -> list:
        return [pair for pair, ok in self.separated.items() if not ok]


def rank_designs(auc_by_design: dict) -> RankReport:
    """Order designs by empirical AUC, descending; ties break on the name.

    Values may be plain floats or :class:`DesignAUC` records.
    """
    entries = {name: v if isinstance(v, DesignAUC) else DesignAUC(float(v))
               for name, v in auc_by_design.items()}
    ordering = sorted(entries, key=lambda k: (-entries[k].auc_empirical, k))
    separated = {}
    for a, b in combinations(ordering, 2):
        ea, eb = entries[a], entries[b]
        gap = abs(ea.auc_empirical - eb.auc_empirical)
        separated[(a, b)] = gap > ea.ci_half_width + eb.ci_half_width
    return RankReport(entries, ordering, separated)
