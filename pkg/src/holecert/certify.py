"""Certification driver: mesh refinement, eigenvalue separation, and the
hole-size certificate.

Given a map with hole-uniform Lasota-Yorke constants (alpha0 < 1/3) and an
escape tolerance ell, the driver fixes r = 1 - ell, picks delta = 1/k < ell,
and refines a uniform Ulam partition until

    mesh  <=  (2 Gamma)^-1 epsilon0(P_mesh, r, delta)          (comparison step)

with epsilon0 evaluated through the computable resolvent surrogate of
:func:`holecert.spectral.h_star`.  It then checks that every computed
eigenvalue of modulus above r outside the delta-ball around 1 keeps its
closed delta-ball disjoint from the one around 1 (separation step); on
failure k doubles and the loop re-enters at the last mesh that passed the
comparison.  A successful run certifies: every aligned hole H with
lambda(H) <= Gamma * epsilon_com yields an open system with an accim,
1 - e_H < delta_com, and escape rate below -ln(1 - ell).

Refinement jumps straight to the smallest power-of-ten bin count whose
mesh clears the current comparison value rather than halving blindly, and
when the comparison fails but its closed-only (sharper-constants) variant
passes, the fine mesh is covered by a resolvent bound transferred from
the coarse mesh, skipping eigen-analysis at the fine mesh entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .cache import PipelineCache
from .kl import (
    CLOSED_ONLY,
    HOLE_UNIFORM,
    KLConstants,
    KLDomainError,
    LYConstants,
    kl_constants,
    ly_constants,
)
from .maps import PiecewiseMap, as_rational
from .spectral import SpectralData, h_star

__all__ = [
    "CertificationConfig",
    "CertificationReport",
    "CertificateBounds",
    "IterationRecord",
    "RefinePlan",
    "SeparationResult",
    "certificate_bounds",
    "next_power_of_ten_bins",
    "refine_with_bootstrap",
    "run_certification",
    "separation_check",
]


@dataclass(frozen=True)
class CertificationConfig:
    """Knobs of the certification loop.

    ``ell`` is the escape tolerance (the certificate guarantees escape
    rate below -ln(1-ell)); ``delta_init`` must be of the form 1/k and
    below ell (default: k = ceil(1/ell) + 1).  ``bin_candidates``, when
    given, replaces the power-of-ten refinement ladder.
    """

    ell: Fraction
    delta_init: Fraction | None = None
    bins_init: int = 1000
    bin_candidates: tuple[int, ...] | None = None
    max_inner: int = 12
    max_outer: int = 8
    orientation: str = "column"
    n_powers: int = 6
    use_bootstrap: bool = True

    def __post_init__(self):
        object.__setattr__(self, "ell", as_rational(self.ell))
        if not 0 < self.ell < 1:
            raise ValueError(f"ell must lie in (0, 1), got {self.ell}")
        if self.delta_init is not None:
            d = as_rational(self.delta_init)
            if d.numerator != 1:
                raise ValueError(f"delta_init must be of the form 1/k, got {d}")
            if not d < self.ell:
                raise ValueError(f"delta_init {d} must be below ell {self.ell}")
            object.__setattr__(self, "delta_init", d)
        if self.bins_init < 1:
            raise ValueError("bins_init must be positive")

    def initial_delta(self) -> Fraction:
        if self.delta_init is not None:
            return self.delta_init
        k = -((-self.ell.denominator) // self.ell.numerator) + 1  # ceil(1/ell) + 1
        return Fraction(1, k)


@dataclass
class IterationRecord:
    """One pass of the comparison/separation machinery (the audit trail)."""

    index: int
    n_bins: int
    mesh: Fraction
    delta: Fraction
    used_bootstrap: bool
    h_star: float | None
    transferred_H: float | None
    neumann: float | None
    neumann_rowsum: float | None
    n1: int
    n2: int
    epsilon0: float
    threshold: float            # (2 Gamma)^-1 epsilon0
    step7_pass: bool
    closed_only_threshold: float | None = None
    eigenvalues: tuple | None = None
    step10_pass: bool | None = None
    separation_witness: complex | None = None

    def to_dict(self) -> dict:
        d = {
            "index": self.index,
            "n_bins": self.n_bins,
            "mesh": str(self.mesh),
            "delta": str(self.delta),
            "used_bootstrap": self.used_bootstrap,
            "h_star": self.h_star,
            "transferred_H": self.transferred_H,
            "neumann": self.neumann,
            "neumann_rowsum": self.neumann_rowsum,
            "n1": self.n1,
            "n2": self.n2,
            "epsilon0": self.epsilon0,
            "threshold": self.threshold,
            "step7_pass": self.step7_pass,
            "closed_only_threshold": self.closed_only_threshold,
            "step10_pass": self.step10_pass,
        }
        if self.eigenvalues is not None:
            d["eigenvalues"] = [[z.real, z.imag] for z in self.eigenvalues]
        if self.separation_witness is not None:
            d["separation_witness"] = [self.separation_witness.real,
                                       self.separation_witness.imag]
        return d


@dataclass
class CertificationReport:
    """Certificate plus the full iteration log."""

    status: str                      # "certified" | "failed"
    reason: str | None
    map_label: str
    map_fingerprint: str
    ell: Fraction
    r: Fraction
    Gamma: Fraction
    escape_coefficient: float        # bounds (1 - e_H) / lambda(H)
    escape_guarantee: float          # -ln(1 - ell)
    delta_com: Fraction | None
    epsilon_com: Fraction | None
    hole_bound: Fraction | None      # Gamma * epsilon_com
    iterations: list[IterationRecord] = field(default_factory=list)
    ly: LYConstants | None = None
    final_constants: KLConstants | None = None

    @property
    def certified(self) -> bool:
        return self.status == "certified"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "map_label": self.map_label,
            "map_fingerprint": self.map_fingerprint,
            "ell": str(self.ell),
            "r": str(self.r),
            "Gamma": str(self.Gamma),
            "escape_coefficient": self.escape_coefficient,
            "escape_guarantee": self.escape_guarantee,
            "delta_com": None if self.delta_com is None else str(self.delta_com),
            "epsilon_com": None if self.epsilon_com is None else str(self.epsilon_com),
            "hole_bound": None if self.hole_bound is None else str(self.hole_bound),
            "iterations": [it.to_dict() for it in self.iterations],
        }


@dataclass(frozen=True)
class SeparationResult:
    passed: bool
    witness: complex | None
    cluster: tuple[complex, ...]   # eigenvalues within delta of 1


def separation_check(eigenvalues, r, delta) -> SeparationResult:
    """Check the peripheral eigenvalues apart from the cluster at 1.

    Passes when every listed eigenvalue of modulus above ``r`` other than
    the unit eigenvalue itself keeps its closed delta-ball disjoint from
    the one around 1, i.e. |z - 1| > 2 delta.  The first violator is
    returned as witness; ``cluster`` reports everything within delta of 1.
    """
    r = float(r)
    delta = float(delta)
    unit_tol = 1e-8
    cluster = tuple(z for z in eigenvalues if abs(z - 1.0) <= delta)
    for z in eigenvalues:
        if abs(z) <= r or abs(z - 1.0) <= unit_tol:
            continue
        if abs(z - 1.0) <= 2 * delta:
            return SeparationResult(False, complex(z), cluster)
    return SeparationResult(True, None, cluster)


def next_power_of_ten_bins(bound: float, *, candidates=None, cap: int = 10**8) -> int:
    """Smallest bin count from the ladder whose mesh is at most ``bound``."""
    if bound <= 0 or not math.isfinite(bound):
        raise ValueError(f"mesh bound must be positive and finite, got {bound}")
    if candidates is not None:
        for n in sorted(candidates):
            if 1.0 / n <= bound:
                return int(n)
        raise ValueError(f"no bin candidate has mesh <= {bound}")
    n = 1
    while 1.0 / n > bound:
        n *= 10
        if n > cap:
            raise ValueError(f"required bin count exceeds cap {cap}")
    return n


@dataclass(frozen=True)
class RefinePlan:
    """Next inner-loop move after a failed comparison."""

    used_bootstrap: bool
    n_bins: int
    mesh: Fraction
    transferred_H: float | None
    closed_only_threshold: float | None
    fine_constants: KLConstants | None


def refine_with_bootstrap(ly_hole: LYConstants, ly_closed: LYConstants,
                          r, target_delta, mesh_coarse, h_star_coarse: float,
                          *, bin_candidates=None) -> RefinePlan:
    """Plan the next mesh, transferring the coarse resolvent bound if valid.

    When the closed-only comparison holds at the coarse mesh
    (2 Gamma mesh < epsilon0 with the sharper alpha0/B_hat constants),
    the BV resolvent bound transfers to every finer mesh; the plan then
    jumps straight to the smallest ladder mesh below the re-derived
    comparison value and carries the transferred bound so the fine-mesh
    pass needs no eigen-analysis.  Otherwise the plan falls back to mesh
    halving with a fresh analysis.
    """
    mesh_coarse = as_rational(mesh_coarse)
    coarse_bins = int(1 / mesh_coarse) if (1 / mesh_coarse).denominator == 1 else None
    chain_closed = kl_constants(ly_closed, r, target_delta, h_star_coarse)
    closed_threshold = chain_closed.mesh_threshold
    if not float(mesh_coarse) < closed_threshold:
        n_new = 2 * coarse_bins if coarse_bins else int(math.ceil(2 / float(mesh_coarse)))
        return RefinePlan(False, n_new, Fraction(1, n_new), None,
                          closed_threshold, None)
    transferred = chain_closed.resolvent_transfer_bound
    chain_fine = kl_constants(ly_hole, r, target_delta, transferred)
    if float(mesh_coarse) <= chain_fine.mesh_threshold and coarse_bins:
        # the coarse mesh already clears the transferred comparison
        return RefinePlan(True, coarse_bins, mesh_coarse, transferred,
                          closed_threshold, chain_fine)
    n_new = next_power_of_ten_bins(chain_fine.mesh_threshold, candidates=bin_candidates)
    return RefinePlan(True, n_new, Fraction(1, n_new), transferred,
                      closed_threshold, chain_fine)


def run_certification(tmap: PiecewiseMap, config: CertificationConfig,
                      cache: PipelineCache | None = None) -> CertificationReport:
    """Run the full certification loop on a map.

    Returns a report whose status is "certified" on success (with
    delta_com, epsilon_com, and the hole bound Gamma * epsilon_com) or
    "failed" with the blocking comparison recorded.  Spectral-structure
    errors from the analysis propagate as exceptions; cap exhaustion does
    not raise.  On a separation failure the loop re-enters at the last
    mesh that passed the comparison (at its coarse ancestor when that
    mesh was covered by a transferred bound).
    """
    ly = ly_constants(tmap.alpha0, tmap.B0, HOLE_UNIFORM)
    ly_closed = ly_constants(tmap.alpha0, tmap.B0, CLOSED_ONLY)
    ell = config.ell
    alpha = Fraction(3) * tmap.alpha0
    if not ell < 1 - alpha:
        raise KLDomainError(
            f"need ell < 1 - alpha = {1 - alpha}, got ell = {ell}"
        )
    r_frac = 1 - ell
    r = float(r_frac)
    gamma_frac = max(1 + tmap.alpha0, tmap.B0)
    escape_coefficient = 1 + float((2 * tmap.alpha0 + tmap.B0) / (1 - ell - alpha))

    cache = cache if cache is not None else PipelineCache(None)
    report = CertificationReport(
        status="failed", reason=None, map_label=tmap.label,
        map_fingerprint=tmap.fingerprint, ell=ell, r=r_frac, Gamma=gamma_frac,
        escape_coefficient=escape_coefficient,
        escape_guarantee=-math.log(1 - float(ell)),
        delta_com=None, epsilon_com=None, hole_bound=None, ly=ly,
    )

    delta = config.initial_delta()
    n_bins = config.bins_init
    plan: RefinePlan | None = None      # active transferred-bound plan
    coarse_bins: int | None = None      # ancestor mesh of the active plan
    sep_data: SpectralData | None = None
    index = 0

    for _outer in range(config.max_outer):
        passed: IterationRecord | None = None
        for _inner in range(config.max_inner):
            index += 1
            mesh = Fraction(1, n_bins)
            if plan is not None and plan.used_bootstrap and plan.n_bins == n_bins:
                chain = plan.fine_constants
                rec = IterationRecord(
                    index=index, n_bins=n_bins, mesh=mesh, delta=delta,
                    used_bootstrap=True, h_star=None,
                    transferred_H=plan.transferred_H, neumann=None,
                    neumann_rowsum=None, n1=chain.n1, n2=chain.n2,
                    epsilon0=chain.epsilon0, threshold=chain.mesh_threshold,
                    step7_pass=float(mesh) <= chain.mesh_threshold,
                    closed_only_threshold=plan.closed_only_threshold,
                )
            else:
                data = cache.spectral(tmap, n_bins, r,
                                      n_powers=config.n_powers)
                bound = h_star(data, r, float(delta), float(tmap.alpha0),
                               float(tmap.B0), orientation=config.orientation)
                bound_row = h_star(data, r, float(delta), float(tmap.alpha0),
                                   float(tmap.B0), orientation="row")
                chain = kl_constants(ly, r, delta, bound.h_star)
                sep_data = data
                coarse_bins = n_bins
                plan = None
                rec = IterationRecord(
                    index=index, n_bins=n_bins, mesh=mesh, delta=delta,
                    used_bootstrap=False, h_star=bound.h_star,
                    transferred_H=None, neumann=bound.neumann_bound,
                    neumann_rowsum=bound_row.neumann_bound,
                    n1=chain.n1, n2=chain.n2, epsilon0=chain.epsilon0,
                    threshold=chain.mesh_threshold,
                    step7_pass=float(mesh) <= chain.mesh_threshold,
                )
            report.iterations.append(rec)
            if rec.step7_pass:
                passed = rec
                report.final_constants = chain
                break
            # comparison failed: plan the refinement
            if (config.use_bootstrap and not rec.used_bootstrap
                    and rec.h_star is not None):
                plan = refine_with_bootstrap(
                    ly, ly_closed, r, delta, mesh, rec.h_star,
                    bin_candidates=config.bin_candidates,
                )
                rec.closed_only_threshold = plan.closed_only_threshold
                if plan.used_bootstrap:
                    n_bins = plan.n_bins
                    continue
            # plain refinement: jump straight to the mesh the current
            # comparison value predicts (never coarser than halving)
            plan = None
            try:
                n_next = next_power_of_ten_bins(
                    rec.threshold, candidates=config.bin_candidates)
            except ValueError:
                n_next = 2 * n_bins
            n_bins = n_next if n_next > n_bins else 2 * n_bins
        if passed is None:
            last = report.iterations[-1]
            report.reason = (
                f"comparison never satisfied within {config.max_inner} inner "
                f"iterations; last mesh {last.mesh} vs threshold {last.threshold}"
            )
            return report
        if sep_data is None:
            report.reason = "no spectral data available for the separation check"
            return report
        sep = separation_check(sep_data.eigenvalues_above_r, r, float(delta))
        passed.eigenvalues = sep_data.eigenvalues_above_r
        passed.step10_pass = sep.passed
        passed.separation_witness = sep.witness
        if sep.passed:
            report.status = "certified"
            report.delta_com = delta
            report.epsilon_com = passed.mesh
            report.hole_bound = gamma_frac * passed.mesh
            return report
        # separation failed: halve delta, resume at the last comparison-passing
        # mesh (its analyzed ancestor when it was covered by a transfer)
        delta = Fraction(delta.numerator, delta.denominator * 2)
        n_bins = coarse_bins if coarse_bins is not None else passed.n_bins
        plan = None
    report.reason = (
        f"separation check kept failing down to delta = {delta} "
        f"({config.max_outer} outer iterations)"
    )
    return report


@dataclass(frozen=True)
class CertificateBounds:
    """What a certificate says about one concrete hole measure."""

    accim_exists: bool
    one_minus_eH_upper: float | None
    escape_upper: float | None


def certificate_bounds(report: CertificationReport, hole_measure) -> CertificateBounds:
    """Evaluate a certificate at a concrete hole measure.

    ``accim_exists`` is the guarantee lambda(H) <= Gamma * epsilon_com;
    when it holds, 1 - e_H is bounded by min(delta_com,
    escape_coefficient * lambda(H)) and the escape rate by
    -ln(1 - that).  A hole measure above the bound is a valid "no
    guarantee" answer, not an error.
    """
    if not report.certified:
        raise ValueError("certificate_bounds needs a certified report")
    hole_measure = as_rational(hole_measure)
    if hole_measure < 0:
        raise ValueError("hole measure must be nonnegative")
    if hole_measure > report.hole_bound:
        return CertificateBounds(False, None, None)
    one_minus = min(float(report.delta_com),
                    report.escape_coefficient * float(hole_measure))
    return CertificateBounds(True, one_minus, -math.log1p(-one_minus))
