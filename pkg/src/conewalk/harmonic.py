"""Positive harmonic functions of the walk killed outside the cone.

For a boundary tilt ``a`` whose normal direction lies in the cone's
sector, the function

* ``h(z) = (f_i.z) exp(a.z) - E_z[(f_i.S) exp(a.S) at exit]`` when the
  normal equals the boundary ray ``c_i`` (endpoint branch), and
* ``h(z) = exp(a.z) - E_z[exp(a.S) at exit]`` when the normal points
  strictly inside the sector (interior branch),

is harmonic for the killed walk and strictly positive inside the cone,
with ``h = 0`` outside.  This module assembles those functions from the
solver's certified brackets, classifies positivity, and provides the two
analytic side constructions used to control them: the exactly harmonic
linear-exponential functions of the free walk, and the exponential bound
on the opposite-wall payoff term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cone import ConeGeometry
from .solver import (Bracket, HarmonicField, TruncatedDomain,
                     DEFAULT_DELTA_GRID, exit_expectation)
from .steplaw import StepLaw
from .tiltgeom import (TiltPoint, epsilon_for_delta, normal_direction,
                       point_with_normal, tilt_point)

#: Angular tolerance deciding the endpoint branch.
BRANCH_ANGLE_TOL = 1e-8

#: Within 10x of the branch tolerance a warning is attached to the spec.
BRANCH_WARN_FACTOR = 10.0


def _angle_between(u: np.ndarray, v: np.ndarray) -> float:
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), float(u @ v))


@dataclass(frozen=True)
class HarmonicSpec:
    """A boundary tilt together with its branch of the construction."""

    law: StepLaw
    cone: ConeGeometry
    tilt: TiltPoint
    branch: str  # "endpoint_wall1" | "endpoint_wall2" | "interior"
    warning: str | None = None

    @property
    def wall(self) -> int | None:
        if self.branch == "endpoint_wall1":
            return 1
        if self.branch == "endpoint_wall2":
            return 2
        return None


def classify_spec(law: StepLaw, cone: ConeGeometry, a) -> HarmonicSpec:
    """Classify a boundary tilt into its branch by the normal direction.

    The tilt must lie on the unit level set with normal in the closed
    sector.  Normals within ``BRANCH_ANGLE_TOL`` of a boundary ray select
    that ray's endpoint branch; borderline normals (within ten times the
    tolerance) attach a warning since the two formulas are different
    objects.
    """
    point = a if isinstance(a, TiltPoint) else tilt_point(law, a)
    if not point.on_boundary:
        raise ValueError(f"tilt is not on the level-set boundary "
                         f"(mgf = {point.value!r})")
    q = normal_direction(law, point)
    if not cone.direction_in_sector(q, tol=BRANCH_ANGLE_TOL):
        raise ValueError("normal direction falls outside the cone's sector")
    ang1 = _angle_between(q, cone.c1)
    ang2 = _angle_between(q, cone.c2)
    warning = None
    if ang1 <= BRANCH_ANGLE_TOL:
        branch = "endpoint_wall1"
    elif ang2 <= BRANCH_ANGLE_TOL:
        branch = "endpoint_wall2"
    else:
        branch = "interior"
        near = min(ang1, ang2)
        if near <= BRANCH_WARN_FACTOR * BRANCH_ANGLE_TOL:
            warning = (f"normal is within {near:.2e} rad of a boundary ray; "
                       "branch selection is borderline")
    return HarmonicSpec(law=law, cone=cone, tilt=point, branch=branch,
                        warning=warning)


def spec_for_direction(law: StepLaw, cone: ConeGeometry, q) -> HarmonicSpec:
    """Build the spec for the boundary tilt whose normal is ``q``."""
    return classify_spec(law, cone, point_with_normal(law, q))


def spec_for_endpoint(law: StepLaw, cone: ConeGeometry, wall: int) -> HarmonicSpec:
    """Build the endpoint-branch spec for wall 1 or 2."""
    if wall not in (1, 2):
        raise ValueError("wall must be 1 or 2")
    return classify_spec(law, cone, point_with_normal(law, cone.ray(wall)))


def build_h(spec: HarmonicSpec, domain: TruncatedDomain,
            delta_grid=DEFAULT_DELTA_GRID, method: str = "auto") -> HarmonicField:
    """Assemble the harmonic function's brackets on a truncated domain.

    Subtracting the exit expectation flips the bracket: the lower bound on
    ``h`` uses the upper exit bracket and vice versa.  Outside the cone
    the function is 0 by convention; the field only stores interior states.
    """
    same_cone = domain.cone is spec.cone or (
        np.allclose(domain.cone.f1, spec.cone.f1)
        and np.allclose(domain.cone.f2, spec.cone.f2))
    if not same_cone:
        raise ValueError("domain was built for a different cone")
    av = spec.tilt.a
    z = domain.states.astype(float)
    e_az = np.exp(z @ av)
    if spec.wall is None:
        u = exit_expectation(spec.law, domain, spec.tilt, payoff="exp",
                             restriction="all_exits", delta_grid=delta_grid,
                             method=method)
        lead = e_az
        kind = "harmonic_interior"
    else:
        payoff = f"linear_wall{spec.wall}"
        u = exit_expectation(spec.law, domain, spec.tilt, payoff=payoff,
                             restriction="all_exits", delta_grid=delta_grid,
                             method=method)
        lead = (z @ spec.cone.normal(spec.wall)) * e_az
        kind = f"harmonic_wall{spec.wall}"
    lo = lead - u.hi
    hi = lead - u.lo
    return HarmonicField(domain=domain, kind=kind, a=av.copy(),
                         lo=np.minimum(lo, hi), hi=np.maximum(lo, hi))


@dataclass
class PositivityReport:
    """Three-way positivity classification of a harmonic field."""

    n_states: int
    n_certified_positive: int
    n_inconclusive: int
    n_certified_negative: int
    negative_states: list[tuple[int, int]]
    inconclusive_sample: list[tuple[int, int]]

    @property
    def clean(self) -> bool:
        return self.n_certified_negative == 0


def check_positive(h: HarmonicField, sample_cap: int = 20) -> PositivityReport:
    """Classify each state: certified positive, inconclusive, or negative.

    A state is certified positive when its lower bracket is strictly
    positive and certified negative when its upper bracket is strictly
    negative.  Brackets straddling zero are inconclusive; they indicate
    truncation error, not a violation, and shrink as the radius grows.
    """
    pos = h.lo > 0.0
    neg = h.hi < 0.0
    inconc = ~pos & ~neg
    states = h.domain.states
    negative = [(int(x), int(y)) for x, y in states[neg][:sample_cap]]
    sample = [(int(x), int(y)) for x, y in states[inconc][:sample_cap]]
    return PositivityReport(
        n_states=h.domain.n_states,
        n_certified_positive=int(pos.sum()),
        n_inconclusive=int(inconc.sum()),
        n_certified_negative=int(neg.sum()),
        negative_states=negative,
        inconclusive_sample=sample,
    )


def free_harmonic_value(law: StepLaw, q, q_perp, z) -> tuple[float, float]:
    """Value and one-step residual of ``(q_perp.z) exp(a(q).z)``.

    With ``a(q)`` the boundary tilt whose normal is ``q``, this function
    is exactly harmonic for the unkilled walk: the gradient of the mgf at
    ``a(q)`` is parallel to ``q``, so its ``q_perp`` component vanishes.
    Returns ``(value, residual)`` where the residual is the exact finite
    sum ``E_z[f(S(1))] - f(z)``; it should vanish to rounding.
    """
    q = np.asarray(q, dtype=float)
    qp = np.asarray(q_perp, dtype=float)
    if abs(float(q @ qp)) > 1e-14:
        raise ValueError("q_perp must be perpendicular to q")
    point = point_with_normal(law, q)
    zv = np.asarray(z, dtype=float)
    value = float(qp @ zv) * math.exp(float(point.a @ zv))
    succ = zv + law.steps.astype(float)
    one_step = float(np.sum(law.probs * (succ @ qp) * np.exp(succ @ point.a)))
    return value, one_step - value


@dataclass
class CrossExitBound:
    """Computed opposite-wall term and its certified exponential bound."""

    term: Bracket
    bound: float
    eps: float
    delta: float

    def holds(self, slack: float = 1e-10) -> bool:
        return self.term.hi <= self.bound + slack


def cross_exit_bound(spec: HarmonicSpec, domain: TruncatedDomain, z,
                     delta: float,
                     delta_grid=DEFAULT_DELTA_GRID) -> CrossExitBound:
    """Bound the payoff collected through the opposite wall.

    For the endpoint branch at wall ``i``, the contribution
    ``E_z[(f_i.S) exp(a.(S - z)); exit through wall j first]`` satisfies

        term <= (1/delta) * exp((delta*f_i - eps*f_j).z)

    where ``eps`` makes ``a + delta*f_i - eps*f_j`` land back on the unit
    level set.  The exponent is negative, and the bound decays along rays,
    wherever ``(delta*f_i - eps*f_j).z < 0``.
    """
    if spec.wall is None:
        raise ValueError("cross-exit bound needs an endpoint-branch spec")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    i = spec.wall
    j = 3 - i
    f_i = spec.cone.normal(i)
    f_j = spec.cone.normal(j)
    eps = epsilon_for_delta(spec.law, spec.tilt, delta, f_i, f_j)
    grid = tuple(delta_grid) + (delta,)
    u = exit_expectation(spec.law, domain, spec.tilt,
                         payoff=f"linear_wall{i}",
                         restriction=f"only_wall{j}_first",
                         delta_grid=grid)
    b = u.bracket(z)
    zv = np.asarray(z, dtype=float)
    scale = math.exp(-float(spec.tilt.a @ zv))
    term = Bracket(b.lo * scale, b.hi * scale)
    exponent = float((delta * f_i - eps * f_j) @ zv)
    return CrossExitBound(term=term, bound=(1.0 / delta) * math.exp(exponent),
                          eps=eps, delta=delta)
