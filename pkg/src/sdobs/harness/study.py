"""Ranking and reconstruction studies over the acquisition designs.

Every random draw comes from a Philox stream keyed by ``(seed, stream, ...)``,
so a work item's inputs do not depend on evaluation order or worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..linops import DESIGN_KINDS, HaarTransform, LinearOperator, MRIOperator, make_design
from ..observers import hotelling_log_stat, sdo_log_lr, train_hotelling
from ..priors import estimate_tau
from ..recon import pls_l1, pls_l1_approx, pls_l2, ssim, zero_fill
from ..rocstat import DesignAUC, RankReport, ScoreSet, empirical_auc, rank_designs, roc_csv
from ..varinf import DENSE_LIMIT, InnerLoopConfig, double_loop, transformed_gram
from .config import StudyConfig
from .phantoms import generate_sparse_phantom, load_phantom, make_signal, save_phantom

__all__ = [
    "RankingResult",
    "ReconStudyResult",
    "StudyData",
    "prepare_study",
    "run_ranking_study",
    "run_recon_study",
    "simulate_measurement",
    "stream_rng",
]

log = logging.getLogger(__name__)

# stream identifiers for stream_rng
TRAIN, TEST, NOISE, FILES = 0, 1, 2, 3
RECON_METHODS = ("zero_fill", "pls_l2", "pls_l1", "pls_l1_approx")


def stream_rng(seed, *key) -> np.random.Generator:
    """Independent Philox generator for the stream ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def simulate_measurement(f, H: LinearOperator, sigma: float, seed) -> np.ndarray:
    """``g = Hf + n``; ``sigma`` is the complex noise std, so each real
    component gets variance ``sigma^2 / 2``.

    ``seed`` may be an int, a sequence of ints (a stream key) or a Generator.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    clean = H.apply(np.asarray(f, dtype=float))
    if sigma == 0:
        return clean
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        key = [seed] if np.isscalar(seed) else list(seed)
        rng = stream_rng(*key)
    return clean + (sigma / np.sqrt(2.0)) * rng.standard_normal(clean.shape)


# -- shared study inputs ---------------------------------------------------------

@dataclass
class StudyData:
    n: int
    B: HaarTransform
    f_s: np.ndarray
    train: list
    test: list
    """``n_neg + n_pos`` backgrounds; the first ``n_neg`` are signal-absent."""
    tau: float
    sigma: float
    """Complex noise std."""

    @property
    def sigma_component(self) -> float:
        return self.sigma / np.sqrt(2.0)


def prepare_study(cfg: StudyConfig) -> StudyData:
    """Phantoms, signal, tau and noise level shared by every design."""
    n = cfg.n
    B = HaarTransform(n, cfg.haar_levels)
    n_test = cfg.n_neg + cfg.n_pos
    if cfg.phantom_files:
        pool = [load_phantom(p) for p in cfg.phantom_files]
        if any(p.size != n * n for p in pool):
            raise ValueError(f"phantom files must all be {n}x{n}")
        if len(pool) < cfg.n_train + n_test:
            raise ValueError(f"need {cfg.n_train + n_test} phantom files, got {len(pool)}")
        order = stream_rng(cfg.seed, FILES).permutation(len(pool))
        train = [pool[i] for i in order[:cfg.n_train]]
        test = [pool[i] for i in order[cfg.n_train:cfg.n_train + n_test]]
    else:
        train = [generate_sparse_phantom(n, stream_rng(cfg.seed, TRAIN, i)) for i in range(cfg.n_train)]
        test = [generate_sparse_phantom(n, stream_rng(cfg.seed, TEST, i)) for i in range(n_test)]
    sig = cfg.signal
    f_s = make_signal(n, sig.shape, sig.center, sig.radius, sig.contrast)
    if cfg.tau_override is not None:
        tau = float(cfg.tau_override)
    else:
        tau = estimate_tau(train, B, outlier_percentile=cfg.outlier_percentile)
    if cfg.sigma is not None:
        sigma = float(cfg.sigma)
    else:
        peak = np.abs(np.fft.fft2(f_s.reshape(n, n), norm="ortho")).max()
        sigma = float(cfg.noise_fraction * peak)
    if not sigma > 0:
        raise ValueError("noise level is zero; set sigma explicitly")
    return StudyData(n, B, f_s, train, test, tau, sigma)


def _measurement(data: StudyData, cfg: StudyConfig, H, kind: str, hyp: int, idx: int):
    bg = data.test[idx if hyp == 0 else cfg.n_neg + idx]
    f = bg + data.f_s if hyp else bg
    return simulate_measurement(f, H, data.sigma,
                                stream_rng(cfg.seed, NOISE, DESIGN_KINDS.index(kind), hyp, idx))


# -- gamma fit with an on-disk cache ------------------------------------------------

_OPERATORS: dict = {}


def _operators(n: int, kind: str, seed: int, levels: int):
    """Per-process memo of ``(H, B, gram)`` for one design."""
    key = (n, kind, seed, levels)
    if key not in _OPERATORS:
        H = MRIOperator(make_design(kind, n, seed=seed), n)
        B = HaarTransform(n, levels)
        gram = transformed_gram(H, B) if n * n <= DENSE_LIMIT else None
        _OPERATORS.clear()
        _OPERATORS[key] = (H, B, gram)
    return _OPERATORS[key]


def _inner_cfg(cfg: StudyConfig) -> InnerLoopConfig:
    return InnerLoopConfig(max_iters=cfg.inner_max_iters, grad_tol=cfg.inner_grad_tol)


def _gamma_key(g, H: MRIOperator, tau, sigma, cfg: StudyConfig) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(g, dtype="<f8").tobytes())
    h.update(np.asarray(H.mask.line_flags, dtype=np.uint8).tobytes())
    params = [cfg.n, cfg.haar_levels, repr(float(tau)), repr(float(sigma)), cfg.outer_iters,
              repr(cfg.gamma_init), repr(cfg.early_exit), repr(_inner_cfg(cfg)),
              cfg.variance_method, repr(cfg.variance_threshold)]
    h.update(json.dumps(params).encode())
    return h.hexdigest()


def fit_gamma(g, H, B, tau, sigma, cfg: StudyConfig, gram=None, cache_dir=None) -> np.ndarray:
    """``double_loop`` with results memoized on disk by content hash."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"{_gamma_key(g, H, tau, sigma, cfg)}.npy"
        if path.exists():
            return np.load(path)
    res = double_loop(g, H, B, tau, sigma, k0=cfg.outer_iters, gamma_init=cfg.gamma_init,
                      early_exit=cfg.early_exit, inner=_inner_cfg(cfg), gram=gram,
                      variance_method=cfg.variance_method, threshold=cfg.variance_threshold)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".{os.getpid()}.tmp")
        with open(tmp, "wb") as fh:
            np.save(fh, res.gamma)
        os.replace(tmp, path)
    return res.gamma


def _sdo_item(task):
    """Worker entry point: one SDO score. ``task`` holds only plain data."""
    cfg_dict, kind, g, tau, sigma, f_s, cache_dir = task
    cfg = StudyConfig.from_dict(cfg_dict)
    H, B, gram = _operators(cfg.n, kind, cfg.seed, cfg.haar_levels)
    gamma = fit_gamma(g, H, B, tau, sigma, cfg, gram=gram, cache_dir=cache_dir)
    return sdo_log_lr(g, f_s, H, B, gamma, sigma, cg_tol=cfg.sdo_cg_tol).value


# -- ranking study -------------------------------------------------------------

@dataclass
class RankingResult:
    reports: dict
    """observer -> :class:`RankReport` over the designs that succeeded."""
    scores: dict
    """``(design, observer) -> ScoreSet``."""
    summary: dict
    failures: dict = field(default_factory=dict)
    out_dir: Path | None = None


def _score_design(kind, data: StudyData, cfg: StudyConfig, pool, cache_dir) -> dict:
    H, _, _ = _operators(cfg.n, kind, cfg.seed, cfg.haar_levels)
    items = [(h, i) for h in (0, 1) for i in range(cfg.n_neg if h == 0 else cfg.n_pos)]
    gs = {item: _measurement(data, cfg, H, kind, *item) for item in items}
    out = {}
    if "SDO" in cfg.observers:
        cfg_dict = cfg.to_dict()
        tasks = [(cfg_dict, kind, gs[item], data.tau, data.sigma_component, data.f_s,
                  cache_dir) for item in items]
        values = pool.map(_sdo_item, tasks) if pool is not None else map(_sdo_item, tasks)
        scores = dict(zip(items, values))
        out["SDO"] = _split(scores)
    if "HO" in cfg.observers:
        tmpl = train_hotelling(data.train, data.f_s, H, data.sigma_component,
                               shrinkage=cfg.ho_shrinkage)
        out["HO"] = _split({item: hotelling_log_stat(gs[item], tmpl).value for item in items})
    return out


def _split(scores: dict) -> ScoreSet:
    neg = [v for (h, i), v in sorted(scores.items()) if h == 0]
    pos = [v for (h, i), v in sorted(scores.items()) if h == 1]
    return ScoreSet(pos, neg)


def _summary_entry(s: ScoreSet) -> dict:
    emp = empirical_auc(s)
    d = DesignAUC.from_scores(s)
    return {
        "auc_empirical": emp.auc,
        "auc_binormal": None if d.binormal is None else d.binormal.auc,
        "ci": [emp.ci_low, emp.ci_high],
        "ci_half_width": emp.ci_half_width,
        "n_pos": int(s.positives.size),
        "n_neg": int(s.negatives.size),
    }


def _config_record(cfg: StudyConfig) -> dict:
    rec = cfg.to_dict()
    rec.pop("output_dir")
    return rec


def run_ranking_study(cfg: StudyConfig, out_dir=None, workers: int = 1) -> RankingResult:
    """Score every design with the configured observers and rank them by AUC.

    Writes ``scores.csv``, ``roc_<design>_<observer>.csv``, ``summary.json``
    (byte-for-byte reproducible) and ``run_info.json`` (timestamp, versions)
    into ``out_dir`` (defaults to ``cfg.output_dir``).
    """
    data = prepare_study(cfg)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache_dir = str(out / "gamma_cache") if cfg.cache_gamma else None
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    per_design, failures = {}, {}
    try:
        for kind in cfg.designs:
            t0 = time.perf_counter()
            try:
                per_design[kind] = _score_design(kind, data, cfg, pool, cache_dir)
            except Exception as exc:  # noqa: BLE001 - recorded, other designs proceed
                log.error("design %s failed: %s", kind, exc)
                failures[kind] = f"{type(exc).__name__}: {exc}"
                continue
            log.info("design %s scored in %.1f s", kind, time.perf_counter() - t0)
    finally:
        if pool is not None:
            pool.shutdown()

    scores = {(k, obs): s for k, by_obs in per_design.items() for obs, s in by_obs.items()}
    reports = {}
    for obs in cfg.observers:
        reports[obs] = rank_designs({k: DesignAUC.from_scores(per_design[k][obs]) for k in per_design})

    summary = {
        "config": _config_record(cfg),
        "tau": data.tau,
        "sigma": data.sigma,
        "sigma_component": data.sigma_component,
        "designs": {k: {obs: _summary_entry(s) for obs, s in by_obs.items()}
                    for k, by_obs in per_design.items()},
        "ordering": {obs: r.ordering for obs, r in reports.items()},
        "not_separated": {obs: [list(p) for p in r.not_separated()] for obs, r in reports.items()},
        "failures": failures,
    }

    with open(out / "scores.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["design", "observer", "hypothesis", "score"])
        for (kind, obs), s in scores.items():
            for hyp, vals in ((0, s.negatives), (1, s.positives)):
                for v in vals:
                    w.writerow([kind, obs, hyp, repr(float(v))])
    for (kind, obs), s in scores.items():
        (out / f"roc_{kind}_{obs}.csv").write_text(roc_csv(s))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    info = {"created": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "sdobs": __version__,
            "numpy": np.__version__, "workers": workers}
    (out / "run_info.json").write_text(json.dumps(info, indent=2) + "\n")
    return RankingResult(reports, scores, summary, failures, out)


# -- reconstruction study ----------------------------------------------------------

@dataclass
class ReconStudyResult:
    table: list
    """Rows ``(design, method, ssim, rel_error)``."""
    images: dict
    """``(design, method) -> image``; ``truth`` is stored under ``("truth", "truth")``."""
    failures: dict = field(default_factory=dict)
    out_dir: Path | None = None


def run_recon_study(cfg: StudyConfig, out_dir=None) -> ReconStudyResult:
    """Reconstruct the first signal-present test object under every design.

    The measurement is the same one the ranking study scores, so a shared
    gamma cache is reused. Writes ``recon.csv`` and one phantom file per image.
    """
    data = prepare_study(cfg)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    img_dir = out / "recon"
    img_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = str(out / "gamma_cache") if cfg.cache_gamma else None
    truth = data.test[cfg.n_neg] + data.f_s
    dyn = float(truth.max() - truth.min()) or 1.0
    s_c = data.sigma_component
    save_phantom(img_dir / "truth.sdop", truth)
    images = {("truth", "truth"): truth}
    table, failures = [], {}
    for kind in cfg.designs:
        H, B, gram = _operators(cfg.n, kind, cfg.seed, cfg.haar_levels)
        g = _measurement(data, cfg, H, kind, 1, 0)
        for method in RECON_METHODS:
            try:
                if method == "zero_fill":
                    img = zero_fill(g, H.mask, cfg.n)
                elif method == "pls_l2":
                    beta = cfg.l2_beta
                    if beta is None:
                        beta = 1e-3 * float(np.abs(H.apply_adjoint(g)).max())
                    img = pls_l2(g, H, beta).image
                elif method == "pls_l1":
                    img = pls_l1(g, H, B, s_c, data.tau, max_iters=cfg.l1_max_iters,
                                 tol=cfg.l1_tol).image
                else:
                    gamma = fit_gamma(g, H, B, data.tau, s_c, cfg, gram=gram, cache_dir=cache_dir)
                    img = pls_l1_approx(g, H, B, s_c, gamma).image
            except Exception as exc:  # noqa: BLE001 - per-cell failure, study continues
                log.error("recon %s/%s failed: %s", kind, method, exc)
                failures[(kind, method)] = f"{type(exc).__name__}: {exc}"
                table.append((kind, method, float("nan"), float("nan")))
                continue
            images[(kind, method)] = img
            save_phantom(img_dir / f"{kind}_{method}.sdop", img)
            rel = float(np.linalg.norm(img - truth) / np.linalg.norm(truth))
            table.append((kind, method, ssim(img, truth, dyn), rel))
    with open(out / "recon.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["design", "method", "ssim", "rel_error"])
        for kind, method, s, r in table:
            w.writerow([kind, method, f"{s:.10g}", f"{r:.10g}"])
    return ReconStudyResult(table, images, failures, out)
