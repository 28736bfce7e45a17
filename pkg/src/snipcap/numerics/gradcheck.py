"""Central finite-difference verification of the analytic backward pass.

The closure must rebuild the forward computation from the shared param
tensors on every call and return a scalar loss. It must be deterministic
(dropout off): the checker evaluates it twice and rejects on any
difference. Checks run in float64 only; float32 round-off would swamp
the comparison.

For large parameter blocks a seeded sample of elements is perturbed
(`samples_per_block`); blocks at or below that size are checked
exhaustively. Every block always gets at least that coverage, and the
report carries one max-relative-error entry per block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Tensor, backward
from .optim import zero_grads


class StochasticClosureError(RuntimeError):
    """Two evaluations of the closure differed; gradients cannot be checked."""


@dataclass
class GradCheckReport:
    rel_tol: float
    per_block: dict[str, float]
    passed: bool

    @property
    def max_rel_err(self) -> float:
        return max(self.per_block.values()) if self.per_block else 0.0

    def lines(self) -> list[str]:
        out = []
        for name in sorted(self.per_block):
            err = self.per_block[name]
            mark = "ok" if err <= self.rel_tol else "FAIL"
            out.append(f"{mark:4s} {name:30s} max_rel_err={err:.3e}")
        out.append(f"{'PASS' if self.passed else 'FAIL'} overall max_rel_err={self.max_rel_err:.3e} (tol {self.rel_tol:.1e})")
        return out


def _rel_err(a: float, n: float) -> float:
    # The denominator floor turns the check into an absolute one for
    # near-zero gradients (|a - n| <= rel_tol * 1e-3), below which central
    # differences are pure float64 round-off.
    return abs(a - n) / max(abs(a), abs(n), 1e-3)


def grad_check(
    closure: Callable[[], Tensor],
    params: dict[str, Tensor],
    rel_tol: float = 1e-5,
    *,
    fd_step: float = 1e-5,
    samples_per_block: int = 24,
    seed: int = 0,
    corrupt_block: str | None = None,
) -> GradCheckReport:
    """Compare analytic gradients against central differences per block.

    corrupt_block is a test hook: it perturbs that block's analytic
    gradient so a healthy checker reports failure (negative control).
    """
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise ValueError(f"grad_check requires float64 params; {name} is {p.data.dtype}")
        if not p.requires_grad:
            raise ValueError(f"param {name} does not require grad")

    base1 = closure().item()
    base2 = closure().item()
    if base1 != base2:
        raise StochasticClosureError(
            f"closure is not deterministic ({base1!r} != {base2!r}); disable dropout"
        )

    zero_grads(params)
    backward(closure())
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}
    if corrupt_block is not None:
        analytic[corrupt_block] = analytic[corrupt_block] + 1e-2

    rng = np.random.default_rng(seed)
    per_block: dict[str, float] = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        size = flat.size
        if size <= samples_per_block:
            indices = np.arange(size)
        else:
            indices = rng.choice(size, size=samples_per_block, replace=False)
        worst = 0.0
        for idx in indices:
            orig = flat[idx]
            flat[idx] = orig + fd_step
            plus = closure().item()
            flat[idx] = orig - fd_step
            minus = closure().item()
            flat[idx] = orig
            numeric = (plus - minus) / (2.0 * fd_step)
            worst = max(worst, _rel_err(float(analytic[name].reshape(-1)[idx]), numeric))
        per_block[name] = worst

    passed = all(err <= rel_tol for err in per_block.values())
    return GradCheckReport(rel_tol=rel_tol, per_block=per_block, passed=passed)
