"""Spectral-stability constant chains of Keller-Liverani type.

Two operators satisfying a common Lasota-Yorke inequality

    ||P^n f||_BV <= A alpha^n ||f||_BV + B ||f||_1

stay spectrally close when their mixed-norm distance |||P1 - P2||| (BV
unit ball into L1) is small; the admissible distance is an explicit
function of the inequality constants and a resolvent bound H for P1.
This module evaluates every constant of that chain:

    n1   = ceil( ln(2A) / ln(r/alpha) )
    C    = r^-n1,            D = A (A + B + 2)
    n2   = ceil( ln(8 B D C H) / ln(r/alpha) )
    gamma = ln(r/alpha) / ln(1/alpha)
    eps1 = r^(n1+n2) / ( 8 B (H B + (1-r)^-1) )
    eps0 = min( eps1,
                [ r^n1 / ( 4 B (H (D+B) + 2 A (A+B) + (1-r)^-1) ) ]^gamma )

plus the closeness coefficients a, b of the resolvent-difference bound
and the transferred BV-resolvent bound

    4 (A+B) / (1-r) * r^-n1  +  1 / (2 eps1),

which is what lets a coarse-mesh computation cover every finer mesh.

Constant sets come in two modes.  ``hole-uniform`` covers the closed
operator, its Ulam discretizations, and every open (hole) operator at
once; it needs alpha0 < 1/3 and uses

    alpha = 3 alpha0,   B = (1 - alpha0 + B0) / (1 - alpha).

``closed-only`` covers just the closed operator and its discretizations,
with the sharper alpha0 itself and B_hat = 1 + B0/(1 - alpha0); it is
the right mode for transferring resolvent bounds between meshes before
re-entering the hole-uniform chain (the coarse-to-fine bootstrap).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .maps import as_rational

__all__ = [
    "LYConstants",
    "KLConstants",
    "KLDomainError",
    "LYModeError",
    "ly_constants",
    "kl_constants",
    "bootstrap_resolvent_bound",
]

HOLE_UNIFORM = "hole-uniform"
CLOSED_ONLY = "closed-only"

#: the leading Lasota-Yorke coefficient; unit by construction of the
#: inequalities this chain is built on, carried symbolically for audit
A_COEFF = 1.0

CROSSCHECK_TOL = 1e-14


class KLDomainError(ValueError):
    """Parameters outside the admissible region (e.g. r <= alpha)."""


class LYModeError(ValueError):
    """Requested constants are undefined for these inputs (alpha0 >= 1/3)."""


@dataclass(frozen=True)
class LYConstants:
    """Derived Lasota-Yorke constant set in one of the two modes.

    ``alpha``, ``B`` and ``D`` are the *effective* constants the chain
    runs with; ``B_hat`` and ``Gamma`` are mode-independent.
    """

    alpha0: float
    B0: float
    mode: str
    A: float
    alpha: float
    B: float
    B_hat: float
    D: float
    Gamma: float

    @property
    def hole_uniform(self) -> bool:
        return self.mode == HOLE_UNIFORM


def ly_constants(alpha0, B0, mode: str = HOLE_UNIFORM) -> LYConstants:
    """Constant set for the common Lasota-Yorke inequality.

    Parameters
    ----------
    alpha0, B0 : rational or float
        Variation-inequality constants of the map (trusted inputs).
    mode : "hole-uniform" (default) or "closed-only"

    Raises
    ------
    LYModeError
        In hole-uniform mode when alpha0 >= 1/3 (the hole-uniform
        inequality is only available below 1/3).
    """
    a0 = as_rational(alpha0)
    b0 = as_rational(B0)
    if not (0 < a0 < 1):
        raise KLDomainError(f"alpha0 must lie in (0, 1), got {a0}")
    if b0 < 0:
        raise KLDomainError(f"B0 must be nonnegative, got {b0}")
    if mode not in (HOLE_UNIFORM, CLOSED_ONLY):
        raise ValueError(f"unknown mode {mode!r}")

    B_hat = 1 + b0 / (1 - a0)
    Gamma = max(1 + a0, b0)

    if mode == HOLE_UNIFORM:
        if a0 >= Fraction(1, 3):
            raise LYModeError(
                f"hole-uniform constants need alpha0 < 1/3, got alpha0 = {a0}; "
                "use closed-only mode for closed-system work"
            )
        alpha = 3 * a0
        B = (1 - a0 + b0) / (1 - alpha)
        # same constant via the inequality's own form; the two must agree
        B_alt = 1 + (2 * a0 + b0) / (1 - alpha)
        if abs(float(B) - float(B_alt)) > CROSSCHECK_TOL:
            raise AssertionError(
                f"B cross-check failed: {float(B)} vs {float(B_alt)}"
            )
    else:
        alpha = a0
        B = B_hat
    D = A_COEFF * (A_COEFF + float(B) + 2)
    return LYConstants(
        alpha0=float(a0), B0=float(b0), mode=mode, A=A_COEFF,
        alpha=float(alpha), B=float(B), B_hat=float(B_hat), D=float(D),
        Gamma=float(Gamma),
    )


@dataclass(frozen=True)
class KLConstants:
    """Full constant chain for one (r, delta, H) input."""

    ly: LYConstants
    r: float
    delta: float
    H: float
    n1: int
    C: float
    n2: int
    gamma: float
    epsilon1: float
    epsilon0: float
    a: float
    b: float
    resolvent_transfer_bound: float

    @property
    def mesh_threshold(self) -> float:
        """(2 Gamma)^-1 epsilon0: the mesh comparison value."""
        return self.epsilon0 / (2 * self.ly.Gamma)


def kl_constants(ly: LYConstants, r, delta, H) -> KLConstants:
    """Evaluate the constant chain at radius r, separation delta, bound H.

    ``H`` is a resolvent bound for the reference operator: feed the
    computable surrogate from :func:`holecert.spectral.h_star` (then
    epsilon0 realizes the computable lower-bound variant) or a
    transferred BV bound from a coarser mesh.
    """
    r = float(r)
    delta = float(delta)
    H = float(H)
    A, alpha, B, D = ly.A, ly.alpha, ly.B, ly.D
    if not alpha < r < 1:
        raise KLDomainError(f"need alpha < r < 1, got alpha={alpha}, r={r}")
    if delta <= 0:
        raise KLDomainError(f"need delta > 0, got {delta}")
    if H <= 0:
        raise KLDomainError(f"need H > 0, got {H}")

    log_ratio = math.log(r / alpha)
    n1 = math.ceil(math.log(2 * A) / log_ratio)
    C = r ** (-n1)
    n2 = math.ceil(math.log(8 * B * D * C * H) / log_ratio)
    gamma = log_ratio / math.log(1 / alpha)
    one_minus_r_inv = 1.0 / (1.0 - r)

    epsilon1 = r ** (n1 + n2) / (8 * B * (H * B + one_minus_r_inv))
    base = r ** n1 / (4 * B * (H * (D + B) + 2 * A * (A + B) + one_minus_r_inv))
    epsilon0 = min(epsilon1, base ** gamma)

    a = (8 * (2 * A * (A + B) + one_minus_r_inv) * (A + B) ** 2 * r ** (-n1) + 1) / (1 - r)
    b = 2 * ((4 * (A + B) ** 2 * (D + B) + B) * one_minus_r_inv * r ** (-n1) + B)

    transfer = 4 * (A + B) / (1 - r) * r ** (-n1) + 1 / (2 * epsilon1)

    out = KLConstants(ly=ly, r=r, delta=delta, H=H, n1=n1, C=C, n2=n2,
                      gamma=gamma, epsilon1=epsilon1, epsilon0=epsilon0,
                      a=a, b=b, resolvent_transfer_bound=transfer)
    _validate_chain(out)
    return out


def _validate_chain(k: KLConstants) -> None:
    ly = k.ly
    if not (0 < k.gamma < 1):
        raise AssertionError(f"gamma = {k.gamma} outside (0, 1)")
    if k.epsilon0 > k.epsilon1 * (1 + 1e-15):
        raise AssertionError(f"epsilon0 = {k.epsilon0} exceeds epsilon1 = {k.epsilon1}")
    # defining property of n1: A alpha^n1 <= r^n1 / 2
    if ly.A * ly.alpha ** k.n1 > k.r ** k.n1 / 2 + 1e-14:
        raise AssertionError(f"n1 = {k.n1} violates A alpha^n1 <= r^n1/2")
    for name in ("epsilon1", "epsilon0", "a", "b", "resolvent_transfer_bound", "C"):
        v = getattr(k, name)
        if not (math.isfinite(v) and v > 0):
            raise AssertionError(f"{name} = {v} is not finite and positive")


def bootstrap_resolvent_bound(ly_closed: LYConstants, r, delta, H_coarse,
                              mesh_coarse=None) -> float:
    """BV-resolvent bound valid on every mesh at least as fine as the coarse one.

    Runs the closed-only chain on the coarse-mesh surrogate ``H_coarse``
    and returns ``4(A+B)/(1-r) r^-n1 + 1/(2 eps1)``.  Validity requires
    the closed-only comparison to hold at the coarse mesh,

        2 Gamma mesh_coarse < epsilon0(closed-only, H_coarse);

    pass ``mesh_coarse`` to have that checked here (a failure raises
    KLDomainError with both sides), or leave it None when the caller has
    already verified it.
    """
    if ly_closed.mode != CLOSED_ONLY:
        raise LYModeError("bootstrap transfer runs on closed-only constants")
    chain = kl_constants(ly_closed, r, delta, H_coarse)
    if mesh_coarse is not None:
        mesh = float(as_rational(mesh_coarse))
        if not mesh < chain.mesh_threshold:
            raise KLDomainError(
                "closed-only comparison failed at the coarse mesh: "
                f"mesh {mesh} >= (2 Gamma)^-1 epsilon0 = {chain.mesh_threshold}"
            )
    return chain.resolvent_transfer_bound
