"""Finite-difference validation of the engine's analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..seeding import rng_from
from .train import softmax_cross_entropy

FD_STEP = 1e-5


@dataclass
class GradCheckReport:
    per_param: dict  # parameter path -> max relative error over sampled entries
    max_rel_error: float
    tolerance: float
    passed: bool

    def worst(self):
        path = max(self.per_param, key=self.per_param.get)
        return path, self.per_param[path]


def _loss(net, x, labels):
    # update_stats=False keeps batch-norm running averages frozen so the loss
    # is a pure function of the parameters during differencing
    logits, _ = net.forward(x, train=True, update_stats=False)
    loss, _ = softmax_cross_entropy(logits, labels)
    return loss


def gradient_check(net, batch, tolerance=1e-4, samples_per_param=6, seed=0):
    """Compares analytic parameter gradients against central differences.

    The network is copied to 64-bit first.  For every parameter tensor a
    handful of entries are perturbed by +/- FD_STEP; the relative error
    uses max(1e-4, |analytic|, |numeric|) as denominator so near-zero
    gradients do not inflate the ratio.
    """
    x, labels = batch
    net64 = net.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)

    net64.zero_grads()
    logits, _ = net64.forward(x, train=True, update_stats=False)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    net64.backward(dlogits)
    analytic = {path: g.copy() for path, _, g in net64.param_items()}

    rng = rng_from(seed, "gradcheck")
    per_param = {}
    for path, param, _ in net64.param_items():
        flat = param.reshape(-1)
        k = min(samples_per_param, flat.size)
        picks = rng.choice(flat.size, size=k, replace=False)
        worst = 0.0
        for i in picks:
            orig = flat[i]
            flat[i] = orig + FD_STEP
            up = _loss(net64, x, labels)
            flat[i] = orig - FD_STEP
            down = _loss(net64, x, labels)
            flat[i] = orig
            numeric = (up - down) / (2.0 * FD_STEP)
            ana = analytic[path].reshape(-1)[i]
            denom = max(1e-4, abs(ana), abs(numeric))
            worst = max(worst, abs(ana - numeric) / denom)
        per_param[path] = worst
    max_err = max(per_param.values())
    return GradCheckReport(per_param, max_err, tolerance, max_err < tolerance)
