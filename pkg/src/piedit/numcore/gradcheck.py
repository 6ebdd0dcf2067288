"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import backward


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: dict = field(default_factory=dict)
    probes: dict = field(default_factory=dict)

    @property
    def worst(self):
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self):
        return self.worst < self.tolerance

    def failures(self):
        return {k: v for k, v in self.max_rel_error.items() if v >= self.tolerance}

    def summary(self):
        lines = [f"{'parameter':<40} {'probes':>6} {'max rel err':>12}"]
        for name, err in self.max_rel_error.items():
            flag = "" if err < self.tolerance else "  FAIL"
            lines.append(f"{name:<40} {self.probes[name]:>6} {err:>12.3e}{flag}")
        return "\n".join(lines)


def relative_error(analytic, numeric, floor=1e-8):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(loss_fn, params, tolerance=1e-4, probes=25, step=1e-5, seed=0):
    """Compare analytic and central-difference gradients of ``loss_fn``.

    ``loss_fn`` takes no arguments and returns a scalar Tensor built from the
    parameters in ``params`` (a name -> Parameter mapping).  Parameters should
    hold float64 data.  For every parameter, ``probes`` coordinates (or all,
    when smaller) are perturbed by ``+-step``.  Failures are reported, never
    raised.

    Gradients below ``1e-6 * max(1, |loss|)`` are under the resolution of a
    central difference at this step in double precision, so that value is
    the denominator floor of the relative error.
    """
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    backward(loss)
    floor = 1e-6 * max(1.0, abs(float(loss.data)))
    analytic = {name: p.grad.copy() for name, p in params.items()}

    report = GradCheckReport(tolerance=tolerance)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        count = min(probes, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        worst = 0.0
        for c in coords:
            saved = flat[c]
            flat[c] = saved + step
            up = float(loss_fn().data)
            flat[c] = saved - step
            down = float(loss_fn().data)
            flat[c] = saved
            numeric = (up - down) / (2.0 * step)
            worst = max(worst, relative_error(float(analytic[name].reshape(-1)[c]), numeric, floor))
        report.max_rel_error[name] = worst
        report.probes[name] = int(count)
    return report
