"""Speed laws, cutoff profiles, probe trajectories, and the probe-encoded flux.

The traffic state is a density ``rho`` in ``[0, 1]``.  A speed law ``v(rho)``
gives the preferred speed of cars.  A probe vehicle at position ``p(t)``
moving with measured speed ``pdot(t)`` modifies the speed field near itself:
within the support of a cutoff profile ``chi`` centred on the probe, the
effective speed is the harmonic-type blend ``2*pdot*v / (pdot + v)`` of the
measured and the modelled speed, interpolated by ``chi`` back to ``v(rho)``
away from the probe.  The conservation-law flux is
``f(t, x, rho) = rho * V(t, x, rho)`` with ``V`` the blended speed field.

This module also provides the analytic moduli attached to that flux: the
Lipschitz constants of the blended speed, the mixed-difference bound of the
auxiliary map ``g(rho, q) = q*rho*v(rho) / (q + v(rho))``, and the growth
rate ``C`` entering the L1 stability estimate
``||rho1(t) - rho2(t)||_L1 <= exp(C*t) * ||rho1(0) - rho2(0)||_L1``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .errors import DomainError, ProbeStateError

#: Denominators below this threshold make the harmonic blend (and the map g)
#: return 0, the continuous extension at (probe speed, law speed) = (0, 0).
ZERO_DENOM_TOL = 1e-12

#: Relative tolerance for matching a probe's cached runtime state to a query
#: time.
_TIME_TOL = 1e-9


def _as_density(rho, check=True):
    """Coerce to float array; optionally reject values outside [0, 1]."""
    rho = np.asarray(rho, dtype=float)
    if check and rho.size and (np.min(rho) < -1e-12 or np.max(rho) > 1 + 1e-12):
        raise DomainError(
            f"density outside [0, 1]: range [{np.min(rho)}, {np.max(rho)}]"
        )
    return rho


# ---------------------------------------------------------------------------
# Speed laws
# ---------------------------------------------------------------------------

class SpeedLaw(ABC):
    """Density-dependent speed ``v(rho)`` on ``[0, 1]``.

    Implementations are immutable and vectorised: ``law(rho)`` accepts
    scalars or arrays.  ``v_max`` is the maximal speed, ``lipschitz`` a
    Lipschitz constant of ``v`` and ``flux_lipschitz`` one of the flux
    ``rho -> rho*v(rho)``, both on ``[0, 1]``.
    """

    @abstractmethod
    def __call__(self, rho):
        """Evaluate the speed at density ``rho`` (no domain check)."""

    @property
    @abstractmethod
    def v_max(self):
        """Maximal speed over ``[0, 1]``."""

    @abstractmethod
    def lipschitz(self):
        """Lipschitz constant of ``rho -> v(rho)`` on ``[0, 1]``."""

    def flux(self, rho):
        """The flux ``rho * v(rho)``."""
        rho = np.asarray(rho, dtype=float)
        return rho * self(rho)

    def flux_slope(self, rho):
        """Derivative of the flux; central finite differences by default."""
        rho = np.asarray(rho, dtype=float)
        h = 1e-7
        lo = np.clip(rho - h, 0.0, 1.0)
        hi = np.clip(rho + h, 0.0, 1.0)
        return (self.flux(hi) - self.flux(lo)) / (hi - lo)

    def flux_lipschitz(self):
        """Sampled Lipschitz constant of the flux (sup of secant slopes)."""
        r = np.linspace(0.0, 1.0, 4097)
        f = self.flux(r)
        return float(np.max(np.abs(np.diff(f))) / (r[1] - r[0]))


@dataclass(frozen=True)
class Greenshields(SpeedLaw):
    """Linear speed law ``v(rho) = v_max * (1 - rho)``."""

    vmax: float = 1.0

    def __post_init__(self):
        if not self.vmax > 0:
            raise DomainError(f"vmax must be positive, got {self.vmax}")

    def __call__(self, rho):
        return self.vmax * (1.0 - np.asarray(rho, dtype=float))

    @property
    def v_max(self):
        return self.vmax

    def lipschitz(self):
        return self.vmax

    def flux_slope(self, rho):
        return self.vmax * (1.0 - 2.0 * np.asarray(rho, dtype=float))

    def flux_lipschitz(self):
        return self.vmax


@dataclass(frozen=True)
class EpsilonLaw(SpeedLaw):
    """Quadratic one-parameter family ``v(rho) = (1 + eps*rho) * (1 - rho)``.

    The family keeps ``v >= 0`` on ``[0, 1]`` for ``eps >= -1``; it is
    admissible (strictly concave flux, declared validity range) only for
    ``eps`` in ``[-1/3, 1/3]``, which :func:`check_admissible` reports.
    """

    eps: float

    def __post_init__(self):
        if self.eps < -1.0:
            raise DomainError(f"eps must be >= -1 to keep v >= 0, got {self.eps}")

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        return (1.0 + self.eps * rho) * (1.0 - rho)

    @property
    def v_max(self):
        if self.eps <= 1.0:
            return 1.0
        # interior maximum at rho = (eps - 1) / (2 eps)
        return (1.0 + self.eps) ** 2 / (4.0 * self.eps)

    def lipschitz(self):
        # v' = eps - 2*eps*rho - 1 is linear; extrema at the endpoints.
        return 1.0 + abs(self.eps)

    def flux_slope(self, rho):
        rho = np.asarray(rho, dtype=float)
        return 1.0 + 2.0 * (self.eps - 1.0) * rho - 3.0 * self.eps * rho * rho


class TabulatedLaw(SpeedLaw):
    """Speed law given by samples on a uniform density grid over [0, 1],
    evaluated by linear interpolation."""

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise DomainError("tabulated law needs a 1-d table of >= 2 values")
        if np.min(values) < 0:
            raise DomainError("tabulated speeds must be non-negative")
        self._values = values
        self._values.setflags(write=False)
        self._grid = np.linspace(0.0, 1.0, values.size)

    @property
    def values(self):
        return self._values

    def __call__(self, rho):
        return np.interp(np.asarray(rho, dtype=float), self._grid, self._values)

    @property
    def v_max(self):
        return float(np.max(self._values))

    def lipschitz(self):
        dr = self._grid[1] - self._grid[0]
        return float(np.max(np.abs(np.diff(self._values))) / dr)

    def __repr__(self):
        return f"TabulatedLaw(n={self._values.size}, v_max={self.v_max})"


# ---------------------------------------------------------------------------
# Cutoff profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffProfile:
    """Even, compactly supported C^1 weight with a cubic smoothstep skirt.

    ``chi(xi) = 1`` for ``|xi| <= inner``, ``0`` for ``|xi| >= outer`` and
    ``1 - s^2 (3 - 2 s)`` with ``s = (|xi| - inner) / (outer - inner)``
    in between.
    """

    inner: float = 0.05
    outer: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.inner < self.outer:
            raise DomainError(
                f"cutoff radii must satisfy 0 < inner < outer, "
                f"got ({self.inner}, {self.outer})"
            )

    def __call__(self, xi):
        a = np.abs(np.asarray(xi, dtype=float))
        s = np.clip((a - self.inner) / (self.outer - self.inner), 0.0, 1.0)
        return 1.0 - s * s * (3.0 - 2.0 * s)

    def derivative(self, xi):
        """d chi / d xi, closed form."""
        xi = np.asarray(xi, dtype=float)
        a = np.abs(xi)
        width = self.outer - self.inner
        s = (a - self.inner) / width
        inside = (s > 0.0) & (s < 1.0)
        slope = np.where(inside, -6.0 * s * (1.0 - s) / width, 0.0)
        return slope * np.sign(xi)

    def lipschitz(self):
        """Lipschitz constant of chi: the skirt's maximal slope 1.5/(outer-inner)."""
        return 1.5 / (self.outer - self.inner)


# ---------------------------------------------------------------------------
# Probe trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExogenousSpeed:
    """Program segment with a prescribed constant speed on [start, end)."""

    start: float
    end: float | None
    speed: float

    def __post_init__(self):
        if self.speed < 0.0:
            raise DomainError(f"probe speeds must be >= 0, got {self.speed}")
        _check_interval(self.start, self.end)


@dataclass(frozen=True)
class ModelCoupled:
    """Program segment on [start, end) where the probe rides the traffic:
    its speed is the law evaluated at the density trace just ahead."""

    start: float
    end: float | None

    def __post_init__(self):
        _check_interval(self.start, self.end)


def _check_interval(start, end):
    if start < 0.0:
        raise DomainError(f"segment start must be >= 0, got {start}")
    if end is not None and end <= start:
        raise DomainError(f"empty segment [{start}, {end})")


class _Timeline:
    """Compiled speed profile of a fully exogenous program.

    With ``tau == 0`` the speed is piecewise constant on half-open pieces;
    with ``tau > 0`` each speed jump at an interior piece boundary ``t_b``
    is replaced by a linear ramp on ``[t_b - tau, t_b + tau]`` (the moving
    box average of the raw profile), making the speed continuous and
    piecewise linear.
    """

    def __init__(self, segments, tau):
        pieces = _program_pieces(segments)
        self.tau = tau
        self.max_speed = max(w for _, _, w in pieces)
        self.jumps = [
            abs(pieces[i + 1][2] - pieces[i][2]) for i in range(len(pieces) - 1)
        ]
        if tau == 0.0:
            self.starts = np.array([a for a, _, _ in pieces])
            self.speeds = np.array([w for _, _, w in pieces])
            self.knot_t = None
        else:
            widths = [
                (b if b is not None else math.inf) - a for a, b, _ in pieces
            ]
            if tau > min(widths) / 2.0:
                raise DomainError(
                    f"mollification radius {tau} exceeds half the narrowest "
                    f"program piece ({min(widths)})"
                )
            # knots of the continuous piecewise-linear speed
            ts, ws = [0.0], [pieces[0][2]]
            for i in range(len(pieces) - 1):
                t_b = pieces[i][1]
                ts += [t_b - tau, t_b + tau]
                ws += [pieces[i][2], pieces[i + 1][2]]
            self.knot_t = np.array(ts)
            self.knot_w = np.array(ws)
            # cumulative displacement at the knots (trapezoid on each span)
            disp = np.concatenate(
                [[0.0], np.cumsum(np.diff(ts) * (self.knot_w[1:] + self.knot_w[:-1]) / 2.0)]
            )
            self.knot_disp = disp
        if tau == 0.0:
            self.knot_t = None
            disp = np.concatenate(
                [[0.0], np.cumsum(np.diff(self.starts) * self.speeds[:-1])]
            )
            self.start_disp = disp

    def speed(self, t):
        t = np.asarray(t, dtype=float)
        if self.knot_t is None:
            idx = np.clip(np.searchsorted(self.starts, t, side="right") - 1, 0, None)
            return self.speeds[idx]
        return np.interp(t, self.knot_t, self.knot_w)

    def displacement(self, t):
        t = np.asarray(t, dtype=float)
        if self.knot_t is None:
            idx = np.clip(np.searchsorted(self.starts, t, side="right") - 1, 0, None)
            return self.start_disp[idx] + self.speeds[idx] * (t - self.starts[idx])
        idx = np.clip(np.searchsorted(self.knot_t, t, side="right") - 1, 0, None)
        t0 = self.knot_t[idx]
        w0 = self.knot_w[idx]
        w1 = np.interp(t, self.knot_t, self.knot_w)
        return self.knot_disp[idx] + (t - t0) * (w0 + w1) / 2.0

    def boundary_times(self):
        """Times where the speed profile changes slope or value."""
        if self.knot_t is None:
            return [float(t) for t in self.starts if t > 0.0]
        return [float(t) for t in self.knot_t if t > 0.0]

    def min_speed(self):
        """Smallest speed the profile ever takes (ramps are monotone, so
        knot and plateau values suffice)."""
        if self.knot_t is None:
            return float(np.min(self.speeds))
        return float(np.min(self.knot_w))


def _program_pieces(segments):
    """Normalise a segment list into contiguous (start, end, speed) pieces
    covering [0, inf); uncovered time runs at speed 0.  Only valid for fully
    exogenous programs."""
    segs = sorted(segments, key=lambda s: s.start)
    pieces = []
    t = 0.0
    for s in segs:
        if s.start > t:
            pieces.append((t, s.start, 0.0))
        pieces.append((s.start, s.end, s.speed))
        if s.end is None:
            return pieces
        t = s.end
    pieces.append((t, None, 0.0))
    return pieces


class ProbeTrajectory:
    """A probe vehicle: initial position, speed program, runtime state.

    The program is an ordered list of :class:`ExogenousSpeed` /
    :class:`ModelCoupled` segments with disjoint half-open intervals; time
    not covered by any segment runs at exogenous speed 0.  ``mollify_radius``
    smooths speed jumps of fully exogenous programs into linear ramps (used
    both when driving the probe and when computing stability constants).
    ``observer=True`` excludes the probe from the flux blend: it is advanced
    and recorded, but does not feed back into the equation.

    ``realized_path`` collects ``(t, p, pdot, trace)`` records while a
    simulation advances the probe; it is owned by a single run.
    """

    def __init__(self, x0, program, mollify_radius=0.0, observer=False):
        program = tuple(program)
        if not program:
            raise DomainError("probe program must contain at least one segment")
        _check_disjoint(program)
        if mollify_radius < 0.0:
            raise DomainError("mollify_radius must be >= 0")
        has_coupled = any(isinstance(s, ModelCoupled) for s in program)
        if mollify_radius > 0.0 and has_coupled:
            raise DomainError(
                "mollification is defined only for fully exogenous programs"
            )
        self.x0 = float(x0)
        self.program = program
        self.mollify_radius = float(mollify_radius)
        self.observer = bool(observer)
        self.realized_path = []
        self._runtime = None
        self._tl = None if has_coupled else _Timeline(program, self.mollify_radius)

    # -- program queries ---------------------------------------------------

    @property
    def is_exogenous(self):
        return self._tl is not None

    @property
    def has_coupled(self):
        return self._tl is None

    def segment_at(self, t):
        """The program segment covering time t, or None (gap: speed 0)."""
        for s in self.program:
            if s.start <= t and (s.end is None or t < s.end):
                return s
        return None

    def max_speed(self, law_vmax):
        """Upper bound for the probe's speed over its whole program."""
        bound = 0.0
        for s in self.program:
            if isinstance(s, ExogenousSpeed):
                bound = max(bound, s.speed)
            else:
                bound = max(bound, law_vmax)
        return bound

    def boundary_times(self):
        """Times where the program's speed law changes (segment edges and
        mollification ramp edges), for exact time-step alignment."""
        times = set()
        for s in self.program:
            for t in (s.start, s.end):
                if t is not None and t > 0.0:
                    times.add(float(t))
        if self.is_exogenous:
            times.update(self._tl.boundary_times())
        return sorted(times)

    # -- runtime state -----------------------------------------------------

    def clone(self, observer=None):
        """Fresh probe with the same program and a clean runtime state."""
        return ProbeTrajectory(
            self.x0,
            self.program,
            mollify_radius=self.mollify_radius,
            observer=self.observer if observer is None else observer,
        )

    def set_runtime(self, t, p, pdot, trace=math.nan):
        self._runtime = SimpleNamespace(
            t=float(t), p=float(p), pdot=float(pdot), trace=float(trace)
        )

    def clear_runtime(self):
        self._runtime = None
        self.realized_path = []

    def state_at(self, t):
        """Position and speed at time t.

        Uses the cached runtime state when it matches ``t``; otherwise falls
        back to the closed-form path for fully exogenous programs.  A
        model-coupled probe without a matching runtime state raises
        :class:`ProbeStateError`.
        """
        rt = self._runtime
        if rt is not None and abs(rt.t - t) <= _TIME_TOL * max(1.0, abs(rt.t)):
            if not math.isnan(rt.pdot):
                return rt.p, rt.pdot
            if not self.is_exogenous:
                raise ProbeStateError(
                    f"probe speed at t={t} not yet resolved against a density field"
                )
        if self.is_exogenous:
            return (
                self.x0 + float(self._tl.displacement(t)),
                float(self._tl.speed(t)),
            )
        raise ProbeStateError(
            f"model-coupled probe has no resolved state at t={t}; "
            "positions become available only while a simulation advances it"
        )

    def exogenous_speed(self, t):
        """Programmed (possibly mollified) speed at time t; valid only where
        the program is not model-coupled."""
        if self.is_exogenous:
            return float(self._tl.speed(t))
        seg = self.segment_at(t)
        if isinstance(seg, ModelCoupled):
            raise ProbeStateError(f"program is model-coupled at t={t}")
        return 0.0 if seg is None else seg.speed

    def realized_array(self):
        """Recorded (t, p, pdot, trace) rows as an (n, 4) array."""
        if not self.realized_path:
            return np.empty((0, 4))
        return np.asarray(self.realized_path, dtype=float)


def _check_disjoint(program):
    spans = sorted(
        ((s.start, math.inf if s.end is None else s.end) for s in program),
        key=lambda ab: ab[0],
    )
    for (a0, b0), (a1, _) in zip(spans, spans[1:]):
        if a1 < b0:
            raise DomainError(
                f"probe program segments overlap near t={a1}"
            )


# ---------------------------------------------------------------------------
# Flux model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FluxModel:
    """The conservation-law flux assembled from a speed law, a cutoff
    profile, and probe trajectories.

    ``trace_side`` fixes how the density field is read at a probe position:
    ``"right"`` takes the first cell at or ahead of the probe, ``"left"``
    the last cell at or behind it.
    """

    speed_law: SpeedLaw
    cutoff: CutoffProfile = field(default_factory=CutoffProfile)
    probes: tuple = ()
    trace_side: str = "right"

    def __post_init__(self):
        if self.trace_side not in ("right", "left"):
            raise DomainError(f"trace_side must be 'right' or 'left', got {self.trace_side!r}")
        object.__setattr__(self, "probes", tuple(self.probes))

    @property
    def coupled_probes(self):
        """Probes that participate in the flux blend (non-observers)."""
        return tuple(p for p in self.probes if not p.observer)

    def max_probe_speed(self):
        """Largest speed any blended probe can be programmed to take."""
        vmax = self.speed_law.v_max
        speeds = [p.max_speed(vmax) for p in self.coupled_probes]
        return max(speeds) if speeds else 0.0


def eval_speed_law(law, rho):
    """Evaluate a speed law at densities ``rho`` in [0, 1].

    Raises :class:`DomainError` for out-of-range densities.
    """
    return law(_as_density(rho))


def harmonic_speed(w, v):
    """Blend of a measured speed ``w`` and a law speed ``v``:
    ``2*w*v / (w + v)``, extended by 0 where ``w + v`` vanishes.

    The blend is symmetric, lies in ``[min(w, v), 2*min(w, v)]`` for
    positive arguments, and returns ``v`` exactly when ``w == v``.
    """
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    denom = w + v
    safe = np.where(denom < ZERO_DENOM_TOL, 1.0, denom)
    out = np.where(denom < ZERO_DENOM_TOL, 0.0, 2.0 * w * v / safe)
    # exact fixed point: agreement between the two speeds is preserved bitwise
    out = np.where(w == v, v, out)
    if out.ndim == 0:
        return float(out)
    return out


def eval_encoded_speed(model, t, x, rho):
    """The blended speed field ``V(t, x, rho)``.

    Each non-observer probe contributes a weight ``w_i = chi(x - p_i(t))``.
    With ``W = sum(w_i) <= 1`` the speed is
    ``(1 - W) * v(rho) + sum_i w_i * harmonic_speed(pdot_i, v(rho))``; for
    ``W > 1`` the weights are first normalised by ``W`` (the blend stays a
    convex combination).

    Probe positions must be resolvable at ``t``: exogenous programs are
    evaluated in closed form, model-coupled probes require the runtime state
    a running simulation maintains (:class:`ProbeStateError` otherwise).
    """
    rho = _as_density(rho)
    x = np.asarray(x, dtype=float)
    v = model.speed_law(rho)
    shape = np.broadcast_shapes(x.shape, rho.shape)
    total = np.zeros(shape)
    weights = []
    for probe in model.coupled_probes:
        p, pdot = probe.state_at(t)
        w = model.cutoff(x - p)
        weights.append((w, pdot))
        total = total + w
    scale = np.maximum(total, 1.0)
    # accumulate as v + sum w_i (H_i - v): algebraically the convex
    # combination, but exact (not just close) wherever every H_i equals v
    out = v + np.zeros(shape)
    for w, pdot in weights:
        out = out + (w / scale) * (harmonic_speed(pdot, v) - v)
    return out


def eval_flux(model, t, x, rho):
    """The conservation-law flux ``rho * V(t, x, rho)``."""
    rho = _as_density(rho)
    return rho * eval_encoded_speed(model, t, x, rho)


def eval_g(law, rho, q):
    """The auxiliary map ``g(rho, q) = q * rho * v(rho) / (q + v(rho))``,
    extended by 0 where the denominator vanishes."""
    rho = _as_density(rho)
    q = np.asarray(q, dtype=float)
    v = law(rho)
    denom = q + v
    safe = np.where(denom < ZERO_DENOM_TOL, 1.0, denom)
    out = np.where(denom < ZERO_DENOM_TOL, 0.0, q * rho * v / safe)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Admissibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    worst_violation: float


@dataclass(frozen=True)
class AdmissibilityReport:
    law: SpeedLaw
    n_samples: int
    conditions: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.conditions)

    def condition(self, name):
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        lines = [f"admissibility of {self.law!r}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.conditions:
            lines.append(
                f"  {'ok  ' if c.passed else 'FAIL'} {c.name}"
                f" (worst violation {c.worst_violation:.3e})"
            )
        return "\n".join(lines)


def _second_differences(values, h):
    """Normalised interior second differences (approximate f'')."""
    return (values[2:] - 2.0 * values[1:-1] + values[:-2]) / (h * h)


def _boundary_curvature(f, at_zero, h=1e-4):
    """Second derivative of ``f`` at an endpoint of [0, 1], one-sided.

    Uses Richardson extrapolation ``2 D(h/2) - D(h)`` of the one-sided
    second difference, which cancels the O(h) skew of the one-sided stencil
    (exact for cubic f, up to rounding).
    """
    def one_sided(hh):
        if at_zero:
            pts = f(np.array([0.0, hh, 2.0 * hh]))
        else:
            pts = f(np.array([1.0, 1.0 - hh, 1.0 - 2.0 * hh]))
        return (pts[2] - 2.0 * pts[1] + pts[0]) / (hh * hh)

    return 2.0 * one_sided(h / 2.0) - one_sided(h)


#: Relative strictness floor for the flux-concavity scan: the estimated f''
#: must stay below -STRICT_CONCAVITY_REL * max|f''|.  This resolves genuine
#: curvature degeneracy (f'' -> 0 somewhere on the closed interval) while
#: sitting far above finite-difference noise (~1e-7).
STRICT_CONCAVITY_REL = 1e-4

#: Declared validity range of the quadratic family parameter.
EPSILON_ADMISSIBLE = (-1.0 / 3.0, 1.0 / 3.0)


def check_admissible(law, n_samples=201):
    """Scan a speed law for the admissibility conditions.

    Checks, each reported with its worst violation magnitude:

    * ``v(1) = 0``;
    * ``v`` non-increasing on a sampled grid (tolerance 1e-12);
    * ``0 <= v <= v_max``;
    * strict concavity of the flux ``rho*v(rho)`` on the closed interval,
      via interior second differences plus extrapolated one-sided second
      derivatives at both endpoints;
    * strict concavity (interior samples) of the blended flux
      ``rho -> w*rho*v/(w+v)`` for ``w`` in ``{0.1, 0.5, 1, 2} * v_max``;
    * for :class:`EpsilonLaw`, the declared parameter range [-1/3, 1/3].
    """
    if n_samples < 3:
        raise DomainError(f"n_samples must be >= 3, got {n_samples}")
    grid = np.linspace(0.0, 1.0, n_samples)
    h = grid[1] - grid[0]
    v = law(grid)
    conditions = []

    viol = abs(float(v[-1]))
    conditions.append(ConditionCheck("speed_vanishes_at_full_density", viol <= 1e-12, viol))

    increase = float(np.max(np.diff(v), initial=-np.inf))
    viol = max(0.0, increase)
    conditions.append(ConditionCheck("speed_monotone_nonincreasing", viol <= 1e-12, viol))

    viol = max(0.0, float(np.max(-v)), float(np.max(v - law.v_max)))
    conditions.append(ConditionCheck("speed_within_range", viol <= 1e-12, viol))

    flux = grid * v
    curv = list(_second_differences(flux, h))
    curv.append(_boundary_curvature(law.flux, at_zero=True))
    curv.append(_boundary_curvature(law.flux, at_zero=False))
    curv = np.asarray(curv)
    scale = float(np.max(np.abs(curv)))
    threshold = -STRICT_CONCAVITY_REL * scale
    worst = float(np.max(curv))
    passed = scale > 0.0 and worst <= threshold
    conditions.append(
        ConditionCheck("flux_strictly_concave", passed, max(0.0, worst - threshold))
    )

    worst_blend = -math.inf
    for w in (0.1, 0.5, 1.0, 2.0):
        g = eval_g(law, grid, w * law.v_max)
        worst_blend = max(worst_blend, float(np.max(_second_differences(g, h))))
    passed = worst_blend <= -1e-12
    conditions.append(
        ConditionCheck("blend_strictly_concave", passed, max(0.0, worst_blend + 1e-12))
    )

    if isinstance(law, EpsilonLaw):
        lo, hi = EPSILON_ADMISSIBLE
        viol = max(0.0, lo - law.eps, law.eps - hi)
        conditions.append(ConditionCheck("family_parameter_range", viol == 0.0, viol))

    return AdmissibilityReport(law=law, n_samples=n_samples, conditions=tuple(conditions))


# ---------------------------------------------------------------------------
# Lipschitz moduli and the stability rate C
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LipschitzConstants:
    """Moduli of the blended speed field.

    ``M``: maximal value of the blend ``2*w*v/(w+v)`` over programmed probe
    speeds and law speeds.  ``Lx`` bounds ``|d V / d x|``, ``Lrho`` bounds
    ``|d V / d rho|``.  ``Lxrho_sampled`` is a finite-difference estimate of
    the Lipschitz constant of ``rho -> dV/dx``, reported next to two
    reference bounds it can be compared against.
    """

    M: float
    Lx: float
    Lrho: float
    Lxrho_sampled: float
    Lxrho_reference: float
    Lxrho_direct: float


def lipschitz_constants(model):
    """Compute the moduli of the blended speed field of ``model``."""
    law = model.speed_law
    vmax = law.v_max
    lip_v = law.lipschitz()
    lip_chi = model.cutoff.lipschitz()
    P = model.max_probe_speed()
    # the blend is monotone in both arguments: maximum at the corner (P, vmax)
    M = 0.0 if P == 0.0 else 2.0 * P * vmax / (P + vmax)
    has_probes = bool(model.coupled_probes)
    Lx = (M + vmax) * lip_chi if has_probes else 0.0
    Lrho = 2.0 * lip_v
    return LipschitzConstants(
        M=M,
        Lx=Lx,
        Lrho=Lrho,
        Lxrho_sampled=_sampled_xrho_lipschitz(model),
        Lxrho_reference=(1.0 + lip_chi) * lip_v,
        Lxrho_direct=3.0 * lip_chi * lip_v,
    )


def _sampled_xrho_lipschitz(model):
    """Finite-difference estimate of Lip of ``rho -> dV/dx``.

    ``dV/dx = chi'(x - p) * (blend(pdot, v) - v)`` depends on (t, x) only
    through the offset ``xi = x - p(t)`` and the probe speed, so the sup is
    taken over a (xi, speed, rho) grid; probe speeds are sampled from each
    program (the law's maximal speed stands in for model-coupled segments).
    """
    if not model.coupled_probes:
        return 0.0
    law = model.speed_law
    speeds = set()
    for probe in model.coupled_probes:
        for seg in probe.program:
            if isinstance(seg, ExogenousSpeed):
                speeds.add(seg.speed)
            else:
                speeds.add(law.v_max)
        speeds.add(0.0)  # gaps and program end run at speed 0
    xi = np.linspace(-model.cutoff.outer, model.cutoff.outer, 201)
    slope = model.cutoff.derivative(xi)[:, None]
    rho = np.linspace(0.0, 1.0, 201)
    v = law(rho)[None, :]
    worst = 0.0
    drho = rho[1] - rho[0]
    for w in sorted(speeds):
        dvdx = slope * (harmonic_speed(w, v) - v)
        worst = max(worst, float(np.max(np.abs(np.diff(dvdx, axis=1))) / drho))
    return worst


def mixed_difference_constant(law, P, n=241, h=1e-5):
    """Sampled bound on the mixed second derivative of ``g``.

    Returns the sup over a fine ``(rho, q)`` grid of
    ``|d^2 g / (d rho d q)|`` estimated by nested central differences of
    :func:`eval_g`; this constant ``B`` satisfies (up to sampling)
    ``|g(r1,q1) - g(r1,q2) - g(r2,q1) + g(r2,q2)| <= B |r1-r2| |q1-q2|``.
    """
    if P <= 0.0:
        return 0.0
    k = min(h, P / 4.0)
    rho = np.linspace(h, 1.0 - h, n)[:, None]
    q = np.linspace(k, P - k, n)[None, :]
    mixed = (
        eval_g(law, rho + h, q + k)
        - eval_g(law, rho + h, q - k)
        - eval_g(law, rho - h, q + k)
        + eval_g(law, rho - h, q - k)
    ) / (4.0 * h * k)
    return float(np.max(np.abs(mixed)))


@dataclass(frozen=True)
class StabilityConstant:
    """The L1-stability growth rate, with its ingredients.

    ``value`` is ``+inf`` when the probe program does not admit a finite
    rate (a model-coupled segment, or unmollified speed jumps).
    """

    value: float
    per_probe: tuple
    reason: str = ""

    @property
    def unbounded(self):
        return math.isinf(self.value)

    def __str__(self):
        if self.unbounded:
            return f"StabilityConstant(unbounded: {self.reason})"
        return f"StabilityConstant({self.value:.6g})"


def stability_constant_C(model):
    """Growth rate ``C`` of the L1 stability estimate for ``model``.

    Per probe, ``C_i = Lip(chi) * (1 + P) * (P * L_hm + Lip(rho*v))
    + Lip(g) * Lip(pdot)`` where ``P`` is the probe's maximal speed,
    ``L_hm`` the sampled Lipschitz constant of
    ``rho -> rho*v(rho)/(w + v(rho))`` over the speeds ``w`` the (possibly
    mollified) program takes, ``Lip(g)`` the mixed-difference constant, and
    ``Lip(pdot)`` the slope bound of the mollified speed profile.  The total
    is the sum over probes; no probes give ``C = 0``.
    """
    law = model.speed_law
    probes = model.coupled_probes
    if not probes:
        return StabilityConstant(value=0.0, per_probe=())
    lip_chi = model.cutoff.lipschitz()
    lip_flux = law.flux_lipschitz()
    parts = []
    total = 0.0
    for i, probe in enumerate(probes):
        if probe.has_coupled:
            return StabilityConstant(
                value=math.inf,
                per_probe=(),
                reason=f"probe {i} has a model-coupled segment; its speed "
                "inherits jumps from the density trace",
            )
        tl = probe._tl
        jumps = [j for j in tl.jumps if j > 0.0]
        if jumps and probe.mollify_radius == 0.0:
            return StabilityConstant(
                value=math.inf,
                per_probe=(),
                reason=f"probe {i} has unmollified speed jumps "
                "(piecewise-constant program)",
            )
        lip_pdot = max(jumps) / (2.0 * probe.mollify_radius) if jumps else 0.0
        P = tl.max_speed
        L_hm = _sampled_harmonic_lipschitz(law, _profile_speeds(tl))
        lip_g = mixed_difference_constant(law, P)
        contribution = lip_chi * (1.0 + P) * (P * L_hm + lip_flux) + lip_g * lip_pdot
        parts.append(
            {
                "P": P,
                "L_hm": L_hm,
                "lip_flux": lip_flux,
                "lip_g": lip_g,
                "lip_pdot": lip_pdot,
                "value": contribution,
            }
        )
        total += contribution
    return StabilityConstant(value=total, per_probe=tuple(parts))


def _profile_speeds(tl):
    """Representative speed values a compiled program takes: plateau values
    plus, for mollified programs, samples across each ramp."""
    if tl.knot_t is None:
        values = set(float(w) for w in tl.speeds)
    else:
        values = set(float(w) for w in tl.knot_w)
        for w0, w1 in zip(tl.knot_w, tl.knot_w[1:]):
            if w0 != w1:
                values.update(float(w) for w in np.linspace(w0, w1, 9))
    return sorted(w for w in values if w > ZERO_DENOM_TOL)


def _sampled_harmonic_lipschitz(law, speeds, n=2001):
    """Sampled sup over probe speeds ``w`` of the Lipschitz constant of
    ``rho -> rho * v(rho) / (w + v(rho))``."""
    if not speeds:
        return 0.0
    rho = np.linspace(0.0, 1.0, n)
    v = law(rho)
    drho = rho[1] - rho[0]
    worst = 0.0
    for w in speeds:
        m = rho * v / (w + v)
        worst = max(worst, float(np.max(np.abs(np.diff(m))) / drho))
    return worst
