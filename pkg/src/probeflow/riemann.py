"""Exact solution of the Riemann problem for a concave-flux conservation law.

For ``rho_t + f(rho)_x = 0`` with strictly concave flux and piecewise
constant data ``(rho_l, rho_r)``, the entropy solution is self-similar in
``xi = x / t``: a shock travelling at the Rankine-Hugoniot speed when
``rho_l < rho_r``, a rarefaction fan spanning the characteristic speeds
``f'(rho_l) > f'(rho_r)`` when ``rho_l > rho_r``, and the constant state
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import check_admissible

#: Bisection tolerance (in density) when inverting f' inside a fan.
_INVERT_TOL = 1e-12


@dataclass(frozen=True)
class RiemannSolution:
    """Self-similar solution of a single Riemann problem.

    ``kind`` is ``"constant"``, ``"shock"`` or ``"rarefaction"``.  A shock
    carries its ``speed``; a rarefaction its edge speeds
    ``(head, tail) = (f'(rho_l), f'(rho_r))`` with ``head > tail`` replaced
    by the sorted pair ``fan = (lower, upper)``.
    """

    law: object
    rho_l: float
    rho_r: float
    kind: str
    speed: float | None = None
    fan: tuple | None = None

    def sample(self, xi):
        """Evaluate the solution at similarity coordinates ``xi = x/t``.

        Along a shock the right state is reported (the solution is taken
        right-continuous in ``xi``).  Accepts scalars or arrays.
        """
        xi = np.asarray(xi, dtype=float)
        if self.kind == "constant":
            out = np.full(xi.shape, self.rho_l)
        elif self.kind == "shock":
            out = np.where(xi < self.speed, self.rho_l, self.rho_r)
        else:
            lo, hi = self.fan
            out = np.empty(xi.shape)
            left = xi <= lo
            right = xi >= hi
            out[left] = self.rho_l
            out[right] = self.rho_r
            inside = ~(left | right)
            if np.any(inside):
                out[inside] = _invert_slope(self.law, xi[inside], self.rho_r, self.rho_l)
        if out.ndim == 0:
            return float(out)
        return out

    def profile(self, t, x):
        """Evaluate at physical coordinates (t, x), jump centred at x = 0."""
        x = np.asarray(x, dtype=float)
        if t <= 0.0:
            out = np.where(x < 0.0, self.rho_l, self.rho_r)
            return float(out) if out.ndim == 0 else out
        return self.sample(x / t)


def solve_riemann(law, rho_l, rho_r):
    """Entropy solution of the Riemann problem for the flux ``rho*v(rho)``.

    The law must pass :func:`probeflow.model.check_admissible`; otherwise
    :class:`DomainError` is raised.  States must lie in [0, 1].
    """
    report = check_admissible(law)
    if not report.passed:
        failing = ", ".join(c.name for c in report.conditions if not c.passed)
        raise DomainError(f"speed law not admissible ({failing})")
    rho_l = float(rho_l)
    rho_r = float(rho_r)
    for name, r in (("rho_l", rho_l), ("rho_r", rho_r)):
        if not 0.0 <= r <= 1.0:
            raise DomainError(f"{name} = {r} outside [0, 1]")
    if rho_l == rho_r:
        return RiemannSolution(law=law, rho_l=rho_l, rho_r=rho_r, kind="constant")
    if rho_l < rho_r:
        # concave flux, increasing jump: admissible shock at the chord slope
        speed = (law.flux(rho_r) - law.flux(rho_l)) / (rho_r - rho_l)
        return RiemannSolution(
            law=law, rho_l=rho_l, rho_r=rho_r, kind="shock", speed=float(speed)
        )
    head = float(law.flux_slope(rho_l))
    tail = float(law.flux_slope(rho_r))
    return RiemannSolution(
        law=law, rho_l=rho_l, rho_r=rho_r, kind="rarefaction", fan=(head, tail)
    )


def sample_solution(solution, xi):
    """Evaluate a Riemann solution at similarity coordinates ``xi = x/t``
    (right-continuous across a shock).  Accepts scalars or arrays."""
    return solution.sample(xi)


def _invert_slope(law, xi, lo, hi):
    """Solve ``f'(rho) = xi`` for ``rho`` in [lo, hi] by bisection.

    ``f'`` is strictly decreasing (concave flux), so on each bracket the
    root is unique; ``lo < hi`` in density means slopes ``f'(lo) > f'(hi)``.
    """
    xi = np.asarray(xi, dtype=float)
    a = np.full(xi.shape, lo)
    b = np.full(xi.shape, hi)
    # invariant: f'(a) >= xi >= f'(b)
    while np.max(b - a) > _INVERT_TOL:
        mid = 0.5 * (a + b)
        slope = law.flux_slope(mid)
        take_left = slope >= xi
        a = np.where(take_left, mid, a)
        b = np.where(take_left, b, mid)
    return 0.5 * (a + b)
