"""Piecewise expanding interval maps on [0, 1) with exact branch inverses.

A map is a finite ordered list of strictly monotone branches whose
half-open domains partition [0, 1).  Branch endpoints, and the parameters
of the closed-form branch kinds, are exact rationals; preimages of
rational intervals under linear and Moebius branches are therefore exact
rationals, which is what makes exact Ulam matrices possible downstream.

Each map carries the constants (alpha0, B0) of the variation inequality

    V(P f) <= alpha0 * V(f) + B0 * ||f||_1

satisfied by its transfer operator P.  These are trusted inputs: deriving
sharp constants for a general piecewise C^2 map is out of scope.  For
piecewise-linear maps whose branches are all onto [0, 1) the helper
``linear_onto_constants`` supplies alpha0 = 1/beta (beta the minimum
slope magnitude) and B0 = 0.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from numbers import Rational
from typing import Callable, Sequence

__all__ = [
    "Branch",
    "LinearBranch",
    "MoebiusBranch",
    "TabulatedBranch",
    "PiecewiseMap",
    "MapConfigError",
    "MapDomainError",
    "ExpansionWarning",
    "as_rational",
    "bundled_map_path",
    "full_branch_linear",
    "linear_onto_constants",
    "load_map",
    "save_map",
    "map_from_dict",
    "map_to_dict",
]

#: endpoint / inverse agreement tolerance used by construction-time checks
ENDPOINT_TOL = 1e-12
ROUNDTRIP_SAMPLES = 32


class MapConfigError(ValueError):
    """Malformed map configuration (bad partition, parameters, or constants)."""


class MapDomainError(ValueError):
    """A point fell outside the union of branch domains."""


class ExpansionWarning(UserWarning):
    """The sampled derivative magnitude did not exceed 1 everywhere."""


def as_rational(value) -> Fraction:
    """Parse an exact rational from ``p/q`` strings, decimals, or numbers.

    Strings go through :class:`~fractions.Fraction` directly, so ``"1/9"``,
    ``"0.25"`` and ``"3"`` are all exact.  Floats are converted via their
    decimal representation (``0.1`` becomes 1/10, not the binary float).
    """
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise MapConfigError(f"cannot parse rational from {value!r}") from exc
    raise MapConfigError(f"cannot parse rational from {value!r}")


def _is_rational(x) -> bool:
    return isinstance(x, Rational)


class Branch:
    """One strictly monotone branch of a piecewise map.

    Subclasses provide ``__call__`` (forward map), ``inverse``,
    ``derivative``, and serialization.  ``lo``/``hi`` bound the half-open
    domain [lo, hi).  ``image`` is the closure of the image interval.
    """

    kind = "abstract"
    exact = False

    lo: Fraction
    hi: Fraction

    def __call__(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def inverse(self, y):  # pragma: no cover - abstract
        raise NotImplementedError

    def derivative(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def increasing(self) -> bool:
        return self(self.hi) > self(self.lo)

    @property
    def image(self) -> tuple:
        """Closure of the image of the domain, as an ordered pair."""
        a, b = self(self.lo), self(self.hi)
        return (a, b) if a <= b else (b, a)

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "domain": [str(self.lo), str(self.hi)]}
        d.update({k: str(v) for k, v in self.params().items()})
        return d

    def contains(self, x) -> bool:
        return self.lo <= x < self.hi

    def _validate(self):
        if not (0 <= self.lo < self.hi <= 1):
            raise MapConfigError(
                f"branch domain [{self.lo}, {self.hi}) is not a subinterval of [0, 1)"
            )
        # strict monotonicity at the endpoints
        if self(self.lo) == self(self.hi):
            raise MapConfigError("branch is not strictly monotone on its domain")
        # closed-form inverse must invert the forward map on the interior
        for k in range(ROUNDTRIP_SAMPLES):
            x = float(self.lo) + (float(self.hi) - float(self.lo)) * (k + 0.5) / ROUNDTRIP_SAMPLES
            if abs(self.inverse(self(x)) - x) > ENDPOINT_TOL:
                raise MapConfigError(
                    f"inverse(forward(x)) differs from x by more than {ENDPOINT_TOL} at x={x}"
                )


@dataclass(frozen=True)
class LinearBranch(Branch):
    """Affine branch x -> slope*x + intercept."""

    lo: Fraction
    hi: Fraction
    slope: Fraction
    intercept: Fraction

    kind = "linear"
    exact = True

    def __post_init__(self):
        if self.slope == 0:
            raise MapConfigError("linear branch must have nonzero slope")
        self._validate()

    def __call__(self, x):
        return self.slope * x + self.intercept

    def inverse(self, y):
        return (y - self.intercept) / self.slope

    def derivative(self, x):
        return self.slope

    @property
    def increasing(self) -> bool:
        return self.slope > 0

    def params(self):
        return {"slope": self.slope, "intercept": self.intercept}


@dataclass(frozen=True)
class MoebiusBranch(Branch):
    """Fractional-linear branch x -> (p*x + q)/(r*x + s)."""

    lo: Fraction
    hi: Fraction
    p: Fraction
    q: Fraction
    r: Fraction
    s: Fraction

    kind = "moebius"
    exact = True

    def __post_init__(self):
        det = self.p * self.s - self.q * self.r
        if det == 0:
            raise MapConfigError("moebius branch is degenerate (ps - qr = 0)")
        # the pole must lie outside the closed domain
        for x in (self.lo, self.hi):
            if self.r * x + self.s == 0:
                raise MapConfigError("moebius branch has a pole at a domain endpoint")
        if self.r != 0:
            pole = -self.s / self.r
            if self.lo < pole < self.hi:
                raise MapConfigError("moebius branch has a pole inside its domain")
        self._validate()

    def __call__(self, x):
        return (self.p * x + self.q) / (self.r * x + self.s)

    def inverse(self, y):
        return (self.s * y - self.q) / (self.p - self.r * y)

    def derivative(self, x):
        den = self.r * x + self.s
        return (self.p * self.s - self.q * self.r) / (den * den)

    @property
    def increasing(self) -> bool:
        return self.p * self.s - self.q * self.r > 0

    def params(self):
        return {"p": self.p, "q": self.q, "r": self.r, "s": self.s}


class TabulatedBranch(Branch):
    """Branch given by a monotone callable, inverted by bisection if needed.

    ``forward`` must be strictly monotone on [lo, hi].  When no closed-form
    ``inverse`` is supplied, a bracketed bisection (certified to land within
    ``tol`` of the preimage) is used.  Such branches are not exact: Ulam
    rows built from them are checked and renormalized in floating point.
    """

    kind = "tabulated-inverse"
    exact = False

    def __init__(self, lo, hi, forward: Callable[[float], float],
                 inverse: Callable[[float], float] | None = None,
                 derivative: Callable[[float], float] | None = None,
                 tol: float = 1e-14):
        self.lo = as_rational(lo)
        self.hi = as_rational(hi)
        self._forward = forward
        self._inverse = inverse
        self._derivative = derivative
        self.tol = tol
        self._validate()

    def __call__(self, x):
        return self._forward(float(x))

    def inverse(self, y):
        if self._inverse is not None:
            return self._inverse(float(y))
        return self._bisect(float(y))

    def derivative(self, x):
        if self._derivative is not None:
            return self._derivative(float(x))
        h = 1e-7
        x = float(x)
        a, b = max(x - h, float(self.lo)), min(x + h, float(self.hi))
        return (self._forward(b) - self._forward(a)) / (b - a)

    def _bisect(self, y: float) -> float:
        a, b = float(self.lo), float(self.hi)
        fa = self._forward(a)
        inc = self.increasing
        lo, hi = a, b
        for _ in range(200):
            if hi - lo <= self.tol:
                break
            mid = 0.5 * (lo + hi)
            if (self._forward(mid) < y) == inc:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    @property
    def increasing(self) -> bool:
        return self._forward(float(self.hi) - 1e-12) > self._forward(float(self.lo))

    def params(self):
        raise MapConfigError("tabulated-inverse branches cannot be serialized to a config")


def _branch_from_dict(d: dict) -> Branch:
    try:
        kind = d["kind"]
        lo, hi = (as_rational(v) for v in d["domain"])
    except KeyError as exc:
        raise MapConfigError(f"branch entry missing field {exc}") from exc
    if kind == "linear":
        return LinearBranch(lo, hi, as_rational(d["slope"]), as_rational(d["intercept"]))
    if kind == "moebius":
        return MoebiusBranch(lo, hi, as_rational(d["p"]), as_rational(d["q"]),
                             as_rational(d["r"]), as_rational(d["s"]))
    raise MapConfigError(f"unknown branch kind {kind!r} in config")


class PiecewiseMap:
    """A piecewise expanding map of [0, 1) with its variation constants.

    Parameters
    ----------
    branches : sequence of Branch
        Monotone branches whose domains partition [0, 1) exactly.
    alpha0, B0 : rational
        Constants of the variation inequality V(Pf) <= alpha0 V(f) + B0 ||f||_1.
        Taken on trust from the caller/config.
    label : str
        Identifier used in fingerprints and reports.

    The constructor verifies the partition, branch monotonicity, the
    closed-form inverses, and samples the derivative; a sampled minimum
    |T'| <= 1 raises :class:`ExpansionWarning` (certification requires
    expansion separately via alpha0 < 1/3, so non-expanding maps remain
    usable for plumbing such as identity-map tests).
    """

    def __init__(self, branches: Sequence[Branch], alpha0, B0, label: str = "map"):
        branches = tuple(branches)
        if not branches:
            raise MapConfigError("map needs at least one branch")
        if branches[0].lo != 0 or branches[-1].hi != 1:
            raise MapConfigError("branch domains must cover [0, 1) exactly")
        for left, right in zip(branches, branches[1:]):
            if left.hi != right.lo:
                raise MapConfigError(
                    f"branch domains leave a gap or overlap at {left.hi} vs {right.lo}"
                )
        for b in branches:
            ylo, yhi = b.image
            if float(ylo) < -ENDPOINT_TOL or float(yhi) > 1 + ENDPOINT_TOL:
                raise MapConfigError(
                    f"branch image [{ylo}, {yhi}] leaves [0, 1]: not a self-map"
                )
        self.branches = branches
        self.alpha0 = as_rational(alpha0)
        self.B0 = as_rational(B0)
        if not (0 < self.alpha0 < 1):
            raise MapConfigError(f"alpha0 must lie in (0, 1), got {self.alpha0}")
        if self.B0 < 0:
            raise MapConfigError(f"B0 must be nonnegative, got {self.B0}")
        self.label = str(label)
        self._breaks = [b.lo for b in branches]  # exact Fractions, sorted
        slope_min = self.min_derivative(samples=ROUNDTRIP_SAMPLES)
        if slope_min <= 1.0:
            warnings.warn(
                f"map {self.label!r}: sampled min |T'| = {slope_min:.6g} <= 1 "
                "(not expanding)", ExpansionWarning, stacklevel=2,
            )

    # -- basic queries ----------------------------------------------------

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def is_exact(self) -> bool:
        """True when every branch supports exact rational preimages."""
        return all(b.exact for b in self.branches)

    def branch_index_of(self, x) -> int:
        """Index of the branch whose domain contains x (exact comparison)."""
        if isinstance(x, float):
            x = Fraction(x)  # exact binary value; boundary decisions stay exact
        if not (0 <= x < 1):
            raise MapDomainError(f"x = {x} outside [0, 1)")
        i = bisect_right(self._breaks, x) - 1
        if i < 0 or not self.branches[i].contains(x):
            raise MapDomainError(f"no branch domain contains x = {x}")
        return i

    def evaluate(self, x):
        """Apply the map: T(x) via the unique branch containing x.

        Rational input with exact branches gives a rational result.
        """
        b = self.branches[self.branch_index_of(x)]
        return b(x if _is_rational(x) else float(x))

    __call__ = evaluate

    def derivative(self, x):
        b = self.branches[self.branch_index_of(x)]
        return b.derivative(x if _is_rational(x) else float(x))

    def orbit(self, x, length: int) -> list:
        """x, T(x), ..., T^(length-1)(x); exact for rational x on exact maps."""
        pts = [x]
        for _ in range(length - 1):
            pts.append(self.evaluate(pts[-1]))
        return pts

    def min_derivative(self, samples: int = 1000) -> float:
        """Minimum sampled |T'| over all branches (expansion check)."""
        out = float("inf")
        for b in self.branches:
            lo, hi = float(b.lo), float(b.hi)
            for k in range(samples):
                x = lo + (hi - lo) * (k + 0.5) / samples
                out = min(out, abs(float(b.derivative(x))))
        return out

    # -- preimages ---------------------------------------------------------

    def branch_preimage(self, branch_index: int, interval):
        """Preimage of an interval under one branch, as an ordered pair.

        Parameters
        ----------
        branch_index : int
        interval : pair (lo, hi) with lo <= hi, a subinterval of [0, 1],
            or None/empty for the empty set.

        Returns
        -------
        (xlo, xhi) with xlo <= xhi, or None when the interval misses the
        branch range.  Monotonicity makes the preimage a single interval.
        Rational input on exact branches gives exact rational output.
        """
        if interval is None:
            return None
        jlo, jhi = interval
        if jhi < jlo:
            raise ValueError(f"interval endpoints out of order: {interval}")
        if jhi == jlo:
            return None
        b = self.branches[branch_index]
        ylo, yhi = b.image
        lo = max(jlo, ylo)
        hi = min(jhi, yhi)
        if hi <= lo:
            return None
        p, q = b.inverse(lo), b.inverse(hi)
        if not b.increasing:
            p, q = q, p
        # clip the tiny numerical spill outside the domain for inexact kinds
        p = max(p, b.lo)
        q = min(q, b.hi)
        if q < p:
            return None
        return (p, q)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "alpha0": str(self.alpha0),
            "B0": str(self.B0),
            "branches": [b.to_dict() for b in self.branches],
        }

    @property
    def fingerprint(self) -> str:
        """Stable hash of the canonical config (16 hex chars)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def __repr__(self):
        return (f"PiecewiseMap({self.label!r}, {self.n_branches} branches, "
                f"alpha0={self.alpha0}, B0={self.B0})")


# -- config I/O --------------------------------------------------------------

def map_from_dict(cfg: dict) -> PiecewiseMap:
    if "branches" not in cfg:
        raise MapConfigError("config missing 'branches'")
    branches = [_branch_from_dict(b) for b in cfg["branches"]]
    label = cfg.get("label", "map")
    if "alpha0" in cfg:
        alpha0 = as_rational(cfg["alpha0"])
        B0 = as_rational(cfg.get("B0", 0))
    else:
        try:
            alpha0, B0 = linear_onto_constants(branches)
        except MapConfigError as exc:
            raise MapConfigError(
                "config omits alpha0/B0 and the default only applies to "
                "piecewise-linear maps with every branch onto [0, 1)"
            ) from exc
    return PiecewiseMap(branches, alpha0, B0, label)


def map_to_dict(m: PiecewiseMap) -> dict:
    return m.to_dict()


def load_map(path) -> PiecewiseMap:
    """Load a map from a JSON config file (see README for the schema)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MapConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return map_from_dict(cfg)


def save_map(m: PiecewiseMap, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(m.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def bundled_map_path() -> str:
    """Path of the bundled 10-branch example map config."""
    return str(resources.files("holecert.data").joinpath("tenfold_map.json"))


# -- helpers -----------------------------------------------------------------

def linear_onto_constants(branches: Sequence[Branch]) -> tuple[Fraction, Fraction]:
    """Default (alpha0, B0) = (1/beta, 0) for piecewise-linear onto maps.

    Applies only when every branch is linear and maps its domain onto the
    whole interval [0, 1]; beta is the minimum |slope|.  Anything else
    raises, because no generic sharp constant is available.
    """
    slopes = []
    for b in branches:
        if not isinstance(b, LinearBranch):
            raise MapConfigError("default constants need all-linear branches")
        ylo, yhi = b.image
        if not (ylo == 0 and yhi == 1):
            raise MapConfigError("default constants need every branch onto [0, 1]")
        slopes.append(abs(b.slope))
    beta = min(slopes)
    if beta <= 1:
        raise MapConfigError("map is not expanding (some |slope| <= 1)")
    return (Fraction(1, 1) / beta, Fraction(0))


def full_branch_linear(k: int, label: str | None = None) -> PiecewiseMap:
    """The full shift x -> k*x mod 1 with k onto linear branches."""
    if k < 2:
        raise MapConfigError("need at least 2 branches for an expanding full shift")
    branches = [
        LinearBranch(Fraction(i, k), Fraction(i + 1, k), Fraction(k), Fraction(-i))
        for i in range(k)
    ]
    alpha0, B0 = linear_onto_constants(branches)
    return PiecewiseMap(branches, alpha0, B0, label or f"{k}x-mod-1")
