"""Geometry of the unit level set of the moment generating function.

For an increment law with non-zero drift the set ``D = {a : mgf(a) <= 1}``
is strictly convex and compact, the origin lies on its boundary, and the
normalised gradient is a homeomorphism from the boundary onto the unit
circle.  This module solves the two directions of that map, locates level
crossings along rays (used for boundary shifts and for the certified
truncation bounds of the lattice solver), and packages boundary points as
:class:`TiltPoint` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cone import ConeGeometry
from .errors import (DeltaTooLargeError, NoIntersectionError,
                     NonConvergenceError, RangeOverflowError, ZeroGradientError)
from .steplaw import StepLaw

#: |mgf(a) - 1| below this counts as "on the boundary" for classification.
CLASSIFY_TOL = 1e-10

#: Target residual of root finds on the level set.
LEVEL_TOL = 1e-12

#: Angular tolerance of the normal map round trip.
ANGLE_TOL = 1e-8


@dataclass(frozen=True)
class TiltPoint:
    """A tilt vector with cached mgf value, gradient, and classification."""

    a: np.ndarray
    value: float
    grad: np.ndarray

    def __post_init__(self) -> None:
        self.a.setflags(write=False)
        self.grad.setflags(write=False)

    @property
    def classification(self) -> str:
        if abs(self.value - 1.0) <= CLASSIFY_TOL:
            return "boundary"
        return "interior" if self.value < 1.0 else "exterior"

    @property
    def on_boundary(self) -> bool:
        return self.classification == "boundary"

    @property
    def in_closed_set(self) -> bool:
        return self.value <= 1.0 + CLASSIFY_TOL


def tilt_point(law: StepLaw, a) -> TiltPoint:
    a = np.asarray(a, dtype=float).copy()
    return TiltPoint(a=a, value=law.mgf(a), grad=law.mgf_grad(a))


def normal_direction(law: StepLaw, a) -> np.ndarray:
    """Normalised mgf gradient at ``a`` (the outward normal on the boundary)."""
    grad = a.grad if isinstance(a, TiltPoint) else law.mgf_grad(a)
    norm = float(np.linalg.norm(grad))
    if norm < 1e-12:
        raise ZeroGradientError("mgf gradient vanishes; no normal direction here")
    return grad / norm


def _mgf_safe(law: StepLaw, a: np.ndarray) -> float:
    try:
        return law.mgf(a)
    except RangeOverflowError:
        return math.inf


def interior_minimum(law: StepLaw, max_iter: int = 200) -> np.ndarray:
    """The unique minimiser of the mgf (strictly inside the level set)."""
    a = np.zeros(2)
    for _ in range(max_iter):
        g = law.mgf_grad(a)
        if np.linalg.norm(g) < 1e-14:
            return a
        step = np.linalg.solve(law.mgf_hessian(a), g)
        t = 1.0
        base = _mgf_safe(law, a)
        for _ in range(60):
            cand = a - t * step
            if _mgf_safe(law, cand) < base:
                a = cand
                break
            t *= 0.5
        else:
            return a
    raise NonConvergenceError("interior minimum search did not converge")


def _first_crossing_above(law: StepLaw, base: np.ndarray, direction: np.ndarray,
                          t_lo: float, t_hi: float) -> float:
    """Bisect for mgf(base + t*direction) = 1 with mgf < 1 at t_lo, > 1 at t_hi."""
    for _ in range(200):
        mid = 0.5 * (t_lo + t_hi)
        if mid == t_lo or mid == t_hi:
            break
        if _mgf_safe(law, base + mid * direction) > 1.0:
            t_hi = mid
        else:
            t_lo = mid
    return 0.5 * (t_lo + t_hi)


def _smallest_level_crossing(law: StepLaw, base: np.ndarray, direction: np.ndarray,
                             zero_tol: float) -> float:
    """Smallest t >= 0 with mgf(base + t*direction) = 1.

    The restriction of the mgf to the ray is strictly convex and tends to
    infinity, so there are at most two crossings; bracketing plus bisection
    finds the smaller one without any smoothness assumptions beyond
    convexity.  Raises ``NoIntersectionError`` when the ray misses the
    level set entirely.
    """
    g0 = _mgf_safe(law, base)
    if abs(g0 - 1.0) <= zero_tol:
        return 0.0
    if g0 < 1.0:
        t = 1.0
        while _mgf_safe(law, base + t * direction) <= 1.0:
            t *= 2.0
            if t > 1e9:
                raise NonConvergenceError("level crossing bracket ran away")
        return _first_crossing_above(law, base, direction, t / 2.0 if t > 1.0 else 0.0, t)
    # Outside the set: descend along the ray if the slope allows it.
    slope0 = float(law.mgf_grad(base) @ direction)
    if slope0 >= 0.0:
        raise NoIntersectionError("ray points away from the level set")
    t = 1.0
    t_prev = 0.0
    for _ in range(200):
        val = _mgf_safe(law, base + t * direction)
        if val < 1.0:
            break
        slope = math.inf if math.isinf(val) else float(
            law.mgf_grad(base + t * direction) @ direction)
        if slope >= 0.0:
            raise NoIntersectionError("ray misses the level set")
        t_prev, t = t, 2.0 * t
    else:
        raise NoIntersectionError("no crossing found along the ray")
    # First crossing lies in (t_prev, t]: bisect on "still above 1".
    lo, hi = t_prev, t
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _mgf_safe(law, base + mid * direction) > 1.0:
            lo = mid
        else:
            hi = mid
    return hi


def boundary_shift(law: StepLaw, a_tilde, f) -> float:
    """Smallest ``lam >= 0`` with ``mgf(a_tilde - lam*f) = 1``.

    Returns 0 when ``a_tilde`` already sits on the level set.  Raises
    ``NoIntersectionError`` when the ray ``a_tilde - lam*f`` misses the
    set entirely.
    """
    base = np.asarray(a_tilde, dtype=float)
    f = np.asarray(f, dtype=float)
    lam = _smallest_level_crossing(law, base, -f, zero_tol=CLASSIFY_TOL)
    if lam > 0.0:
        residual = abs(law.mgf(base - lam * f) - 1.0)
        if residual > LEVEL_TOL:
            raise NonConvergenceError(f"boundary shift residual {residual:.2e}")
    return lam


def epsilon_for_delta(law: StepLaw, a, delta: float, f_add, f_sub) -> float:
    """Smallest ``eps > 0`` with ``mgf(a + delta*f_add - eps*f_sub) = 1``.

    ``a`` must lie on the boundary of the level set; pushing it out by
    ``delta`` along ``f_add`` and pulling back along ``f_sub`` lands on
    the boundary again provided ``delta`` is small enough.  Raises
    ``DeltaTooLargeError`` when the pulled-back line misses the set, in
    which case the caller should halve ``delta`` and retry.
    """
    if delta < 0.0:
        raise ValueError("delta must be nonnegative")
    a = a.a if isinstance(a, TiltPoint) else np.asarray(a, dtype=float)
    base = a + delta * np.asarray(f_add, dtype=float)
    try:
        eps = _smallest_level_crossing(law, base, -np.asarray(f_sub, dtype=float),
                                       zero_tol=1e-13)
    except NoIntersectionError as exc:
        raise DeltaTooLargeError(
            f"offset delta={delta} pushes the search line off the level set") from exc
    if eps > 0.0:
        residual = abs(law.mgf(base - eps * np.asarray(f_sub, dtype=float)) - 1.0)
        if residual > LEVEL_TOL:
            raise NonConvergenceError(f"eps search residual {residual:.2e}")
    return eps


def largest_level_shift(law: StepLaw, base, f) -> float:
    """Largest ``t >= 0`` with ``mgf(base - t*f) <= 1``.

    The restriction of the mgf to the ray is strictly convex, so the
    sub-unit section is an interval; this returns its far end.  Raises
    ``NoIntersectionError`` when the whole ray stays above 1.
    """
    base = base.a if isinstance(base, TiltPoint) else np.asarray(base, dtype=float)
    f = np.asarray(f, dtype=float)

    def slope(t: float) -> float:
        return -float(law.mgf_grad(base - t * f) @ f)

    t_star = 0.0
    if slope(0.0) < 0.0:
        t = 1.0
        while slope(t) < 0.0:
            t *= 2.0
            if t > 1e9:
                raise NonConvergenceError("level shift bracket ran away")
        lo_s, hi_s = t / 2.0 if t > 1.0 else 0.0, t
        for _ in range(200):
            mid = 0.5 * (lo_s + hi_s)
            if mid == lo_s or mid == hi_s:
                break
            if slope(mid) < 0.0:
                lo_s = mid
            else:
                hi_s = mid
        t_star = 0.5 * (lo_s + hi_s)
    if _mgf_safe(law, base - t_star * f) > 1.0 + 1e-13:
        raise NoIntersectionError("ray never enters the unit level set")
    t_hi = max(t_star, 1.0)
    while _mgf_safe(law, base - t_hi * f) <= 1.0:
        t_hi *= 2.0
        if t_hi > 1e12:
            raise NonConvergenceError("level shift bracket ran away")
    lo = t_star
    for _ in range(200):
        mid = 0.5 * (lo + t_hi)
        if mid == lo or mid == t_hi:
            break
        if _mgf_safe(law, base - mid * f) <= 1.0:
            lo = mid
        else:
            t_hi = mid
    return lo


def wall_decay_exponent(law: StepLaw, a, f) -> float:
    """Largest ``theta >= 0`` with ``mgf(a - theta*f) <= 1``.

    ``exp(-theta * f.z)`` is then an exact supermartingale for the walk
    tilted by ``a``, which bounds the probability of ever crossing the
    wall with inward normal ``f`` from distance ``d`` by ``exp(-theta*d)``.
    Returns 0 when the tilted drift has no component along ``f`` (the
    projected walk is mean-zero and no exponential bound exists).
    """
    a = a.a if isinstance(a, TiltPoint) else np.asarray(a, dtype=float)
    f = np.asarray(f, dtype=float)
    if float(law.mgf_grad(a) @ f) <= 1e-12:
        return 0.0

    def slope(t: float) -> float:
        return -float(law.mgf_grad(a - t * f) @ f)

    t = 1.0
    while slope(t) < 0.0:
        t *= 2.0
        if t > 1e9:
            raise NonConvergenceError("decay exponent bracket ran away")
    t_min, t_hi = t, t
    while _mgf_safe(law, a - t_hi * f) <= 1.0:
        t_hi *= 2.0
        if t_hi > 1e12:
            raise NonConvergenceError("decay exponent bracket ran away")
    lo = t_min if _mgf_safe(law, a - t_min * f) <= 1.0 else 0.0
    for _ in range(200):
        mid = 0.5 * (lo + t_hi)
        if mid == lo or mid == t_hi:
            break
        if _mgf_safe(law, a - mid * f) <= 1.0:
            lo = mid
        else:
            t_hi = mid
    return lo


# -- the normal map and its inverse ----------------------------------------


def point_with_normal(law: StepLaw, q, max_iter: int = 80) -> TiltPoint:
    """Boundary point of the level set whose outward normal is ``q``.

    Solves ``mgf_grad(a) = lam * q``, ``mgf(a) = 1``, ``lam > 0`` by damped
    Newton iteration from ``a = 0``; a monotone angular bisection around
    the interior minimiser serves as fallback.  Equivalently this is the
    maximiser of ``q . a`` over the level set.
    """
    q = np.asarray(q, dtype=float)
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise ValueError("normal direction must be non-zero")
    q = q / norm

    # Seed Newton at the boundary crossing in direction q from the interior
    # minimiser; for a convex oval its normal is already close to q.
    center = interior_minimum(law)
    t = 1.0
    while _mgf_safe(law, center + t * q) <= 1.0:
        t *= 2.0
    t = _first_crossing_above(law, center, q, t / 2.0, t)
    a0 = center + t * q
    x = np.array([a0[0], a0[1], float(np.linalg.norm(law.mgf_grad(a0)))])

    def residual(x: np.ndarray) -> np.ndarray | None:
        a, lam = x[:2], x[2]
        try:
            g = law.mgf_grad(a)
            return np.array([g[0] - lam * q[0], g[1] - lam * q[1], law.mgf(a) - 1.0])
        except RangeOverflowError:
            return None

    F = residual(x)
    for _ in range(max_iter):
        if F is None:
            break
        norm_f = float(np.linalg.norm(F))
        if norm_f < 1e-15:
            break
        a = x[:2]
        H = law.mgf_hessian(a)
        g = law.mgf_grad(a)
        J = np.array([
            [H[0, 0], H[0, 1], -q[0]],
            [H[1, 0], H[1, 1], -q[1]],
            [g[0], g[1], 0.0],
        ])
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            F = None
            break
        t = 1.0
        for _ in range(50):
            cand = x - t * step
            F_new = residual(cand)
            if F_new is not None and np.linalg.norm(F_new) < norm_f:
                x, F = cand, F_new
                break
            t *= 0.5
        else:
            F = None
            break
    ok = (F is not None and np.linalg.norm(F) < 1e-11 and x[2] > 0.0)
    if not ok:
        x = _point_with_normal_bisect(law, q)
    point = tilt_point(law, x[:2])
    qq = normal_direction(law, point)
    angle_err = math.atan2(abs(qq[0] * q[1] - qq[1] * q[0]), float(qq @ q))
    if abs(point.value - 1.0) > LEVEL_TOL or angle_err > ANGLE_TOL:
        raise NonConvergenceError(
            f"normal map inverse failed: level residual {point.value - 1.0:.2e}, "
            f"angular error {angle_err:.2e}")
    return point


def _point_with_normal_bisect(law: StepLaw, q: np.ndarray) -> np.ndarray:
    """Fallback: monotone bisection of the boundary angle parametrisation."""
    center = interior_minimum(law)
    target = math.atan2(q[1], q[0])

    def boundary_at(psi: float) -> np.ndarray:
        u = np.array([math.cos(psi), math.sin(psi)])
        t = 1.0
        while _mgf_safe(law, center + t * u) <= 1.0:
            t *= 2.0
        t = _first_crossing_above(law, center, u, t / 2.0, t)
        return center + t * u

    def wrapped_diff(psi: float) -> float:
        g = law.mgf_grad(boundary_at(psi))
        d = math.atan2(g[1], g[0]) - target
        while d <= -math.pi:
            d += 2.0 * math.pi
        while d > math.pi:
            d -= 2.0 * math.pi
        return d

    n = 128
    psis = [2.0 * math.pi * k / n for k in range(n + 1)]
    diffs = [wrapped_diff(p) for p in psis]
    lo = hi = None
    for i in range(n):
        d0, d1 = diffs[i], diffs[i + 1]
        if d0 == 0.0:
            lo = hi = psis[i]
            break
        # A true root crossing has a small total swing; the branch-cut
        # crossing swings by about 2*pi and must be skipped.
        if d0 * d1 < 0.0 and abs(d0 - d1) < math.pi:
            lo, hi = psis[i], psis[i + 1]
            break
    if lo is None:
        raise NonConvergenceError("angular bisection found no bracket")
    if lo != hi:
        d_lo = wrapped_diff(lo)
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            d_mid = wrapped_diff(mid)
            if d_mid == 0.0:
                lo = hi = mid
                break
            if (d_mid > 0.0) == (d_lo > 0.0):
                lo, d_lo = mid, d_mid
            else:
                hi = mid
    a = boundary_at(0.5 * (lo + hi))
    lam = float(np.linalg.norm(law.mgf_grad(a)))
    return np.array([a[0], a[1], lam])


@dataclass(frozen=True)
class BoundaryArc:
    """The boundary piece whose normals point into the cone's sector."""

    law: StepLaw
    cone: ConeGeometry
    endpoint1: TiltPoint
    endpoint2: TiltPoint

    def contains(self, a, tol: float = 1e-9) -> bool:
        """True iff ``a`` is on the level-set boundary with normal in the sector."""
        point = a if isinstance(a, TiltPoint) else tilt_point(self.law, a)
        if not point.on_boundary:
            return False
        q = normal_direction(self.law, point)
        return self.cone.direction_in_sector(q, tol=tol)

    def strictly_contains(self, a, tol: float = ANGLE_TOL) -> bool:
        """True iff the normal at ``a`` points strictly inside the sector."""
        point = a if isinstance(a, TiltPoint) else tilt_point(self.law, a)
        if not point.on_boundary:
            return False
        q = normal_direction(self.law, point)
        return self.cone.direction_strictly_inside(q, tol=tol)


def boundary_arc(law: StepLaw, cone: ConeGeometry) -> BoundaryArc:
    """Endpoints of the arc: the boundary points with normals ``c1`` and ``c2``."""
    return BoundaryArc(
        law=law,
        cone=cone,
        endpoint1=point_with_normal(law, cone.c1),
        endpoint2=point_with_normal(law, cone.c2),
    )


def boundary_polyline(law: StepLaw, n: int) -> np.ndarray:
    """Sample ``n`` points of the level-set boundary.

    Returns an ``(n, 4)`` array with columns ``a1, a2, q1, q2`` where ``q``
    is the outward normal at the sampled point.  Samples are taken at
    equally spaced polar angles around the interior minimiser, so the
    polyline closes up to the angular step.
    """
    if n < 3:
        raise ValueError("need at least 3 samples")
    center = interior_minimum(law)
    rows = np.empty((n, 4))
    for k in range(n):
        psi = 2.0 * math.pi * k / n
        u = np.array([math.cos(psi), math.sin(psi)])
        t = 1.0
        while _mgf_safe(law, center + t * u) <= 1.0:
            t *= 2.0
        t = _first_crossing_above(law, center, u, t / 2.0, t)
        a = center + t * u
        q = normal_direction(law, a)
        rows[k] = (a[0], a[1], q[0], q[1])
    return rows
