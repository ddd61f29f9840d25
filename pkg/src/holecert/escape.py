"""Escape behavior of concrete open systems.

The dominant eigenpair of the sub-stochastic open Ulam matrix gives the
discrete escape factor e_H (escape rate -ln e_H) and the conditionally
invariant density estimate.  A second tool runs the shrinking-hole
experiment: for nested aligned holes around a point y, the ratios
(1 - e_H) / lambda(H) approach f*(y) when y is non-periodic and
f*(y) (1 - 1/|(T^p)'(y)|) when y has period p, f* the invariant density.
Ulam densities only converge in L1, so any pointwise f* read off the
closed matrix is advisory; for full-branch piecewise-linear maps f* = 1
is exact and used directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from .maps import LinearBranch, PiecewiseMap, as_rational
from .spectral import dominant_left_eigenpair
from .ulam import Hole, UlamMatrix, UlamPartition, build_closed, build_open

__all__ = [
    "EscapeEstimate",
    "PointClassification",
    "AsymptoticRatioExperiment",
    "PowerIterationError",
    "ClassificationAmbiguityWarning",
    "estimate_escape",
    "classify_point",
    "asymptotic_ratio",
]

RESIDUAL_LIMIT = 1e-10
RATIO_TOL = 1e-12
MAX_ITERATIONS = 10**6
PERIOD_SEARCH_LIMIT = 32
ORBIT_RETURN_TOL = 1e-9


class PowerIterationError(RuntimeError):
    """Dominant-eigenpair iteration failed to meet the residual target."""


class ClassificationAmbiguityWarning(UserWarning):
    """Orbit approached its start within tolerance without an exact return."""


@dataclass(frozen=True)
class EscapeEstimate:
    """Dominant eigendata of one open system."""

    hole: Hole
    n_bins: int
    e_H: float
    escape_rate: float                 # -ln e_H (inf on total escape)
    accim_density: np.ndarray          # piecewise-constant values, integral 1
    solver_residual: float
    iterations: int
    total_escape: bool = False


def estimate_escape(tmap: PiecewiseMap, partition: UlamPartition, hole: Hole, *,
                    closed: UlamMatrix | None = None,
                    open_matrix: UlamMatrix | None = None,
                    tol: float = RATIO_TOL, maxit: int = MAX_ITERATIONS) -> EscapeEstimate:
    """Escape factor and accim density of the open system for one hole.

    Power iteration on the sub-stochastic matrix (the dominant eigenpair of
    a nonnegative matrix is exactly what the iteration delivers, and the
    accim density comes for free); successive eigenvalue ratios must agree
    within ``tol`` and the final residual within 1e-10, else
    :class:`PowerIterationError`.  A hole that swallows everything
    reachable yields e_H = 0 with ``total_escape`` set.

    ``closed`` / ``open_matrix`` allow reuse of previously built matrices
    (checked against the map fingerprint).
    """
    if open_matrix is None:
        open_matrix = build_open(tmap, partition, hole, closed=closed)
    elif (open_matrix.mode != "open" or open_matrix.hole != hole
          or open_matrix.partition != partition):
        raise ValueError("supplied open matrix does not match the request")
    lam, x, residual, iters = dominant_left_eigenpair(
        open_matrix.matrix, tol=tol, maxit=maxit)
    if lam == 0.0:
        return EscapeEstimate(hole=hole, n_bins=partition.n_bins, e_H=0.0,
                              escape_rate=math.inf,
                              accim_density=np.zeros(partition.n_bins),
                              solver_residual=0.0, iterations=iters,
                              total_escape=True)
    if residual > RESIDUAL_LIMIT:
        raise PowerIterationError(
            f"power iteration stalled: residual {residual:.3e} > {RESIDUAL_LIMIT} "
            f"after {iters} iterations (ratio spread {residual / max(lam, 1e-300):.3e})"
        )
    if not 0.0 < lam <= 1.0 + 1e-12:
        raise PowerIterationError(f"escape factor {lam} outside (0, 1]")
    x = np.where(x < 0.0, 0.0, x)
    x = x / x.sum()
    return EscapeEstimate(hole=hole, n_bins=partition.n_bins,
                          e_H=min(lam, 1.0), escape_rate=-math.log(min(lam, 1.0)),
                          accim_density=x * partition.n_bins,
                          solver_residual=residual, iterations=iters)


@dataclass(frozen=True)
class PointClassification:
    """Orbit type of the hole's center point."""

    kind: str                     # "periodic" | "non-periodic"
    period: int | None
    derivative: float | None      # (T^p)'(y) along the exact/float orbit
    ambiguous: bool
    exact: bool                   # classified with exact rational arithmetic


def classify_point(tmap: PiecewiseMap, y, *, max_period: int = PERIOD_SEARCH_LIMIT,
                   tol: float = ORBIT_RETURN_TOL) -> PointClassification:
    """Classify y as periodic (with period and cycle derivative) or not.

    Rational y on an exact map is decided exactly up to ``max_period``;
    otherwise the orbit runs in floats and an approach within ``tol`` of
    the start without an exact return raises
    :class:`ClassificationAmbiguityWarning` (and is classified periodic
    at the closest-return period).
    """
    exact = tmap.is_exact and isinstance(y, Rational)
    point = Fraction(y) if exact else float(y)
    orbit = [point]
    for _ in range(max_period):
        orbit.append(tmap.evaluate(orbit[-1]))
    if exact:
        for p in range(1, max_period + 1):
            if orbit[p] == point:
                deriv = 1.0
                for k in range(p):
                    deriv *= float(tmap.derivative(orbit[k]))
                return PointClassification("periodic", p, deriv, False, True)
        return PointClassification("non-periodic", None, None, False, True)
    dists = [abs(orbit[p] - point) for p in range(1, max_period + 1)]
    p_best = int(np.argmin(dists)) + 1
    if dists[p_best - 1] < tol:
        warnings.warn(
            f"orbit of y = {point} returns within {dists[p_best - 1]:.3e} of its "
            f"start at step {p_best} without an exact return; classification "
            "is ambiguous", ClassificationAmbiguityWarning, stacklevel=2,
        )
        deriv = 1.0
        for k in range(p_best):
            deriv *= float(tmap.derivative(orbit[k]))
        return PointClassification("periodic", p_best, deriv, True, False)
    return PointClassification("non-periodic", None, None, False, False)


@dataclass(frozen=True)
class AsymptoticRatioExperiment:
    """Shrinking-hole ratios around one point, with the expected limit."""

    point: float
    widths: tuple[Fraction, ...]
    holes: tuple[Hole, ...]
    n_bins: tuple[int, ...]
    e_values: tuple[float, ...]
    ratios: tuple[float, ...]            # (1 - e_H) / lambda(H)
    extrapolated_limit: float
    low_confidence: bool
    classification: PointClassification
    f_star_value: float | None
    f_star_source: str | None            # "uniform-exact" | "supplied" | "ulam-advisory"
    predicted_limit: float | None


def _uniform_density_is_exact(tmap: PiecewiseMap) -> bool:
    """True when Lebesgue measure is invariant: all-linear, all branches onto."""
    for b in tmap.branches:
        if not isinstance(b, LinearBranch):
            return False
        ylo, yhi = b.image
        if not (ylo == 0 and yhi == 1):
            return False
    return True


def _nested_aligned_hole(y: Fraction, n: int, k: int,
                         previous: Hole | None) -> Hole:
    """k-bin hole on the 1/n partition containing y, nested in ``previous``."""
    lo_idx, hi_idx = 0, n - k
    if previous is not None:
        lo_idx = max(lo_idx, math.ceil(previous.a * n))
        hi_idx = min(hi_idx, math.floor(previous.b * n) - k)
    centered = math.floor(y * n) - (k - 1) // 2
    idx = min(max(centered, lo_idx), hi_idx)
    if idx < lo_idx or idx > hi_idx:
        raise ValueError(
            f"cannot nest a {k}-bin hole containing {y} on the 1/{n} partition"
        )
    hole = Hole(Fraction(idx, n), Fraction(idx + k, n))
    if not (hole.a <= y <= hole.b):
        raise ValueError(f"hole {hole} does not contain y = {y}")
    return hole


def asymptotic_ratio(tmap: PiecewiseMap, y, widths, bins_per_hole: int, *,
                     f_star_value: float | None = None,
                     tol: float = RATIO_TOL, cache=None) -> AsymptoticRatioExperiment:
    """Run the shrinking-hole experiment at a point.

    Parameters
    ----------
    y : rational or float in [0, 1)
        Point the holes shrink towards (kept inside, or on the boundary of,
        every hole).
    widths : strictly decreasing hole measures; each width w must satisfy
        bins_per_hole / w integral so the hole spans exactly
        ``bins_per_hole`` bins of its own partition.
    bins_per_hole : number of partition bins each hole spans.
    f_star_value : pointwise invariant-density value at y, when known.
        Left unset, it is 1 exactly for full-branch piecewise-linear maps;
        otherwise it is read off the finest closed Ulam density, which has
        L1 but no pointwise control, so the resulting predicted limit is
        advisory only.
    cache : optional :class:`holecert.cache.PipelineCache` supplying the
        closed matrices (they are shared between experiments at the same
        widths).

    The extrapolated limit is the intercept of a least-squares line of
    ratio against hole measure (a single width is returned as-is and
    flagged low confidence).
    """
    y_input = as_rational(y) if isinstance(y, (Rational, str)) else float(y)
    y_frac = y_input if isinstance(y_input, Rational) else as_rational(y_input)
    if not 0 <= y_frac < 1:
        raise ValueError(f"y must lie in [0, 1), got {y}")
    widths = [as_rational(w) for w in widths]
    if not widths:
        raise ValueError("need at least one width")
    if any(b <= a for a, b in zip(widths[1:], widths)):
        raise ValueError(f"widths must be strictly decreasing, got {widths}")
    if bins_per_hole < 1:
        raise ValueError("bins_per_hole must be positive")

    holes: list[Hole] = []
    bins: list[int] = []
    evals: list[float] = []
    last_closed = None
    previous: Hole | None = None
    for w in widths:
        n_frac = bins_per_hole / w
        if n_frac.denominator != 1:
            raise ValueError(
                f"width {w} incompatible with bins_per_hole={bins_per_hole}: "
                f"bin count {n_frac} is not an integer"
            )
        n = int(n_frac)
        part = UlamPartition(n)
        hole = _nested_aligned_hole(y_frac, n, bins_per_hole, previous)
        closed = build_closed(tmap, part) if cache is None else cache.closed_matrix(tmap, n)
        est = estimate_escape(tmap, part, hole, closed=closed, tol=tol)
        holes.append(hole)
        bins.append(n)
        evals.append(est.e_H)
        previous = hole
        last_closed = closed

    measures = np.array([float(w) for w in widths])
    ratios = (1.0 - np.array(evals)) / measures
    low_confidence = len(widths) == 1
    if low_confidence:
        limit = float(ratios[0])
    else:
        coeffs = np.polyfit(measures, ratios, 1)
        limit = float(coeffs[1])

    classification = classify_point(tmap, y_input)

    source: str | None
    if f_star_value is not None:
        source = "supplied"
    elif _uniform_density_is_exact(tmap):
        f_star_value, source = 1.0, "uniform-exact"
    else:
        lam, mass, _res, _it = dominant_left_eigenpair(last_closed.matrix)
        density = np.where(mass < 0, 0.0, mass)
        density = density / density.sum() * last_closed.n_bins
        f_star_value = float(density[int(y_frac * last_closed.n_bins)])
        source = "ulam-advisory"
    predicted = None
    if f_star_value is not None:
        if classification.kind == "periodic":
            predicted = f_star_value * (1.0 - 1.0 / abs(classification.derivative))
        else:
            predicted = f_star_value

    return AsymptoticRatioExperiment(
        point=float(y_frac), widths=tuple(widths), holes=tuple(holes),
        n_bins=tuple(bins), e_values=tuple(evals),
        ratios=tuple(float(t) for t in ratios),
        extrapolated_limit=limit, low_confidence=low_confidence,
        classification=classification, f_star_value=f_star_value,
        f_star_source=source, predicted_limit=predicted,
    )
