"""Delay and unmet-demand curves and the resilience metrics built on them.

Metrics are always recomputed from the plan and the response, never read
off solver auxiliaries.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from dadres.core import Instance, ResponsePlan

# Curve values within this distance of the threshold count as recovered;
# matches the feasibility tolerance the backends run with.
RECOVERY_TOL = 1e-6


@dataclass(frozen=True)
class ResilienceReport:
    delay_curve: tuple[float, ...]
    unmet_curve: tuple[float, ...]
    loss_delay: float
    loss_unmet: float
    rec_delay: float
    rec_unmet: float
    res_delay: float
    res_unmet: float
    weighted: float

    def metrics(self) -> dict[str, float]:
        d = asdict(self)
        del d["delay_curve"], d["unmet_curve"]
        return d

    def to_dict(self, digits: int = 6) -> dict:
        return {k: round(v, digits) + 0.0 for k, v in self.metrics().items()}


def _check(inst: Instance, plan: ResponsePlan) -> np.ndarray:
    y = plan.y_array(inst)
    if y.shape != (inst.tau + 1, len(inst.procedures), len(inst.hospitals)):
        raise ValueError("response dimensions do not match the instance")
    return y


def delay_curve(inst: Instance, plan: ResponsePlan) -> np.ndarray:
    """Cumulative planned minus cumulative delivered capacity, network-wide."""
    x = inst.plan_array()
    y = _check(inst, plan)
    return np.cumsum(x.sum(axis=(1, 2)) - y.sum(axis=(1, 2)))


def unmet_curve(inst: Instance, plan: ResponsePlan) -> np.ndarray:
    """Per step, the positive part of each procedure's overdue plan, summed.

    The plan of step ``t - w - 1`` (``w`` the completion window) is charged
    against everything served in steps ``t - w - 1 .. t - 1``.
    """
    x = inst.plan_array().sum(axis=2)  # [t, p]
    y = _check(inst, plan).sum(axis=2)
    n = inst.tau + 1
    out = np.zeros(n)
    for j, p in enumerate(inst.procedures):
        w = p.completion_window
        for t in range(n):
            start = t - w - 1
            due = x[start, j] if 0 <= start < n else 0.0
            served = y[max(start, 0) : max(t, 0), j].sum() if t > 0 else 0.0
            out[t] += max(0.0, due - served)
    return out


def recovery_time(curve: Sequence[float], kappa: float, penalty: float, tol: float = RECOVERY_TOL) -> float:
    """First step from which the curve stays within ``kappa``; ``penalty`` if never."""
    t_star = None
    for t in range(len(curve) - 1, -1, -1):
        if curve[t] > kappa + tol:
            break
        t_star = t
    return penalty if t_star is None else float(t_star)


def evaluate_metrics(inst: Instance, plan: ResponsePlan) -> ResilienceReport:
    obj = inst.objective
    fd = delay_curve(inst, plan)
    fu = unmet_curve(inst, plan)
    m = inst.recovery_penalty
    loss_d, loss_u = float(fd.sum()), float(fu.sum())
    rec_d = recovery_time(fd, obj.kappa_delay, m)
    rec_u = recovery_time(fu, obj.kappa_unmet, m)
    res_d, res_u = float(fd.max()), float(fu.max())
    weighted = (
        obj.w_loss_delay * loss_d
        + obj.w_loss_unmet * loss_u
        + obj.w_rec_delay * rec_d
        + obj.w_rec_unmet * rec_u
        + obj.w_res_delay * res_d
        + obj.w_res_unmet * res_u
    )
    return ResilienceReport(
        delay_curve=tuple(float(v) for v in fd),
        unmet_curve=tuple(float(v) for v in fu),
        loss_delay=loss_d,
        loss_unmet=loss_u,
        rec_delay=rec_d,
        rec_unmet=rec_u,
        res_delay=res_d,
        res_unmet=res_u,
        weighted=float(weighted),
    )


def write_curves_csv(report: ResilienceReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "delay", "unmet"])
        for t, (d, u) in enumerate(zip(report.delay_curve, report.unmet_curve)):
            w.writerow([t, f"{round(d, 6) + 0.0:.6f}", f"{round(u, 6) + 0.0:.6f}"])
