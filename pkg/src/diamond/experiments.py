"""Experiment orchestration shared by the service and the CLI.

Expands a Config into concrete operators, runs the restoration loop for
every (step, delta, epsilon) combination of a sweep, and renders the
summary CSV. Combinations are independent, so they run on a thread pool
bounded by the DIAMOND_THREADS environment variable (results keep the
deterministic combo order regardless of scheduling).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .config import Config
from .degrade import DegradationOp, gaussian_kernel
from .diter import ConvergenceTrace, DiterParams, PriorOperator, run_diamond
from .imagebuf import Image
from .metrics import format_metric
from . import nnexec

SUMMARY_HEADER = "task,prior,K_used,rmse,psnr,ssim"


def build_degradation(cfg: Config) -> DegradationOp:
    if cfg.degradation_kind == "blur":
        kernel = gaussian_kernel(cfg.kernel_size, cfg.kernel_sigma)
        return DegradationOp(kind="blur", kernel=kernel, boundary=cfg.degradation_boundary)
    return DegradationOp(kind=cfg.degradation_kind, boundary=cfg.degradation_boundary)


def build_prior(cfg: Config, model: "nnexec.ModelGraph | None" = None) -> PriorOperator:
    """Prior from config; a preloaded model short-circuits bundle reading."""
    if cfg.prior_kind == "identity":
        return PriorOperator.identity()
    if cfg.prior_kind == "gaussian_smooth":
        return PriorOperator.gaussian_smooth(cfg.prior_sigma)
    if model is None:
        model = nnexec.load_bundle(cfg.bundle)
    return PriorOperator.network(model, name=f"network({os.path.basename(cfg.bundle or 'inline')})")


def prior_label(cfg: Config) -> str:
    if cfg.prior_kind == "gaussian_smooth":
        return f"gaussian_smooth({cfg.prior_sigma:g})"
    if cfg.prior_kind == "network":
        return f"network({os.path.basename(cfg.bundle or 'inline')})"
    return "identity"


@dataclass(frozen=True)
class ComboResult:
    step: float
    delta: float
    epsilon: float
    restored: Image
    trace: ConvergenceTrace
    k_used: int

    def tag(self) -> str:
        return f"s{self.step:g}_delta{self.delta:g}_eps{self.epsilon:g}"


def thread_budget(n_jobs: int) -> int:
    """Worker count: DIAMOND_THREADS when set, else one per combo (max 4)."""
    raw = os.environ.get("DIAMOND_THREADS")
    if raw:
        try:
            budget = int(raw)
        except ValueError:
            raise ValueError(f"DIAMOND_THREADS must be an integer, got {raw!r}") from None
        if budget < 1:
            raise ValueError(f"DIAMOND_THREADS must be >= 1, got {budget}")
    else:
        budget = min(4, os.cpu_count() or 1)
    return max(1, min(budget, n_jobs))


def run_restore(
    cfg: Config,
    low: Image,
    reference: Image | None,
    model: "nnexec.ModelGraph | None" = None,
) -> list:
    """Run every sweep combination; returns ComboResults in combo order."""
    H = build_degradation(cfg)
    prior = build_prior(cfg, model)
    combos = cfg.combos()

    def one(combo):
        s, d, e = combo
        params = DiterParams(
            mu=cfg.mu,
            upsilon=cfg.upsilon,
            delta=d,
            epsilon_tv=e,
            step=s,
            outer_iters=cfg.outer_iters,
            tol=cfg.tol,
        )
        restored, trace = run_diamond(low, H, prior, params, reference)
        return ComboResult(step=s, delta=d, epsilon=e, restored=restored,
                           trace=trace, k_used=len(trace))

    workers = thread_budget(len(combos))
    if workers == 1 or len(combos) == 1:
        return [one(c) for c in combos]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, combos))


def summary_csv(cfg: Config, results: list) -> str:
    """One row per combination: task,prior,K_used,rmse,psnr,ssim."""
    label = prior_label(cfg)
    lines = [SUMMARY_HEADER]
    for res in results:
        last = res.trace.records[-1] if res.trace.records else None
        if last is None or last.rmse is None:
            tail = ",,"
        else:
            p = "inf" if last.psnr is None else format_metric(last.psnr)
            tail = f"{format_metric(last.rmse)},{p},{format_metric(last.ssim)}"
        lines.append(f"{cfg.task},{label},{res.k_used},{tail}")
    return "\n".join(lines) + "\n"
