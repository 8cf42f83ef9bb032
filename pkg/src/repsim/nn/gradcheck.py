"""Central finite-difference gradient checker.

The loss closure must be deterministic: anything stochastic (masks,
negative sampling) has to be driven by an explicit fixed seed, otherwise
the two perturbed evaluations see different noise and the check is
meaningless. Checks should run on a float64 ParamStore; float32 rounding
drowns the h=1e-5 differences.

Per tensor we report the relative error of the whole gradient vector,

    ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8),

plus the per-element maximum of |a - n| / max(|a|, |n|, 1e-8) as a
diagnostic. The vector form is the pass/fail number: for coordinates whose
true gradient is below ~1e-8 the element ratio measures nothing but
finite-difference round-off (about eps * |loss| / 2h), so it cannot be
driven under small tolerances no matter how correct the backward pass is.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .params import ParamStore

LossClosure = Callable[[], float]
GradClosure = Callable[[], tuple[float, dict[str, np.ndarray]]]


@dataclass(frozen=True)
class GradCheckEntry:
    norm_rel: float  # vector relative error (pass/fail number)
    max_elem_rel: float  # worst single-element ratio (diagnostic)
    grad_norm: float


def grad_check(
    loss_and_grads: GradClosure,
    loss_only: LossClosure,
    store: ParamStore,
    h: float = 1e-5,
    param_names: list[str] | None = None,
) -> dict[str, GradCheckEntry]:
    """Full elementwise central differences over every parameter tensor."""
    _, grads = loss_and_grads()
    report: dict[str, GradCheckEntry] = {}
    names = param_names if param_names is not None else store.names()
    for name in names:
        param = store.params[name]
        analytic = grads.get(name)
        if analytic is None:
            analytic = np.zeros_like(param)
        flat = param.reshape(-1)
        a_flat = np.asarray(analytic).reshape(-1)
        numeric = np.empty_like(a_flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_only()
            flat[i] = orig - h
            lm = loss_only()
            flat[i] = orig
            numeric[i] = (lp - lm) / (2.0 * h)
        diff = a_flat - numeric
        norm_rel = float(
            np.linalg.norm(diff)
            / max(np.linalg.norm(a_flat), np.linalg.norm(numeric), 1e-8)
        )
        elem = np.abs(diff) / np.maximum(
            np.maximum(np.abs(a_flat), np.abs(numeric)), 1e-8
        )
        report[name] = GradCheckEntry(
            norm_rel=norm_rel,
            max_elem_rel=float(elem.max(initial=0.0)),
            grad_norm=float(np.linalg.norm(a_flat)),
        )
    return report
