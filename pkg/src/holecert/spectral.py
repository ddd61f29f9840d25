"""Spectral data of Ulam matrices: peripheral eigenvalues, the invariant
density, norms of powers of the mass-free part, and resolvent bounds.

Conventions
-----------
Densities are coefficient (row) vectors acted on by right multiplication,
``x -> x @ P``; the induced L1 operator norm of a matrix in this
convention is its maximum absolute **row** sum.  The transposed action
``y -> P @ y`` is induced-bounded by the maximum absolute **column** sum
(the classical matrix 1-norm).  Both families of power norms of

    Q = P (1 - Pi1),        Pi1 x = (sum x) * u,   u the invariant mass vector

are computed in a single blockwise pass and stored:

* ``q_power_norms``         row family; entry 0 is the computed ||1 - Pi1||.
* ``q_power_norms_colsum``  column family (matrix 1-norm); entry 0 is 1.

The certification pipeline consumes the column family by default
(``orientation="column"``), which is the convention under which the
reference outputs for the bundled example map were produced; the row
family is the induced norm for the density action and is reported
alongside for audit.  ``neumann_bound`` and ``h_star`` accept either.

The resolvent-sup surrogate combines a Neumann-series tail bound for
R(z) = (z - Q)^-1 with the rank-one projection term:

    ||(z - P)^-1||_1  <=  ||Pi1||_1 / delta + ||R(z)||_1          (|z| >= r, |z-1| > delta)
    h_star = (B0/(r - alpha0) + 1) * that  +  1/(r - alpha0)  +  2/r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ulam import UlamMatrix

__all__ = [
    "SpectralData",
    "SpectralRecord",
    "ResolventBound",
    "SpectralStructureError",
    "NoUnitEigenvalueError",
    "EigensolverResidualError",
    "NeumannDivergenceError",
    "compute_record",
    "record_to_data",
    "eigen_analysis",
    "neumann_bound",
    "h_star",
    "operator_l1_norm",
    "dominant_left_eigenpair",
]

UNIT_EIGENVALUE_TOL = 1e-8
RESIDUAL_TOL = 1e-8
SUBMULT_SLACK = 1e-10
DENSE_CUTOFF = 6000
MAX_TRUNCATION = 64


class SpectralStructureError(RuntimeError):
    """Eigenvalue layout does not support the rank-one resolvent split."""


class NoUnitEigenvalueError(SpectralStructureError):
    """No eigenvalue within tolerance of 1 (matrix not stochastic?)."""


class EigensolverResidualError(RuntimeError):
    """A reported eigenpair failed its residual check."""


class NeumannDivergenceError(ArithmeticError):
    """Neumann tail ratio stayed >= 1 up to the truncation cap."""


def operator_l1_norm(matrix) -> float:
    """Induced L1 norm in the row-vector convention: max absolute row sum."""
    if sp.issparse(matrix):
        return float(np.abs(matrix).sum(axis=1).max())
    return float(np.abs(np.asarray(matrix)).sum(axis=1).max())


def _colsum_norm(matrix) -> float:
    if sp.issparse(matrix):
        return float(np.abs(matrix).sum(axis=0).max())
    return float(np.abs(np.asarray(matrix)).sum(axis=0).max())


def dominant_left_eigenpair(P: sp.csr_matrix, tol: float = 1e-14,
                            maxit: int = 10**6, start: np.ndarray | None = None):
    """Power iteration for the dominant left eigenpair of a nonnegative matrix.

    Iterates ``x -> x @ P`` with L1 normalization from a positive start and
    returns ``(value, vector, residual, iterations)``; the eigenvalue
    estimate is the mass ratio per step and convergence is declared when
    successive ratios agree within ``tol``.  The value 0.0 with a zero
    vector signals total mass loss (all-escape open matrices).
    """
    n = P.shape[0]
    x = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=float) / np.abs(start).sum()
    lam_prev = np.inf
    lam = 0.0
    for it in range(1, maxit + 1):
        y = x @ P
        lam = float(np.abs(y).sum())
        if lam <= 1e-300:
            return 0.0, np.zeros(n), 0.0, it
        y /= lam
        # the mass ratio is identically 1 for stochastic matrices, so the
        # iterate itself must settle as well before declaring convergence
        if abs(lam - lam_prev) <= tol and float(np.abs(y - x).sum()) <= tol:
            x = y
            break
        lam_prev = lam
        x = y
    residual = float(np.abs(x @ P - lam * x).sum())
    return lam, x, residual, it


@dataclass(frozen=True)
class SpectralRecord:
    """r-independent spectral data of one closed Ulam matrix.

    Cached between runs: the eigenvalue list (complete for dense solves),
    the invariant mass vector, and both power-norm families of Q.
    """

    n_bins: int
    map_fingerprint: str
    eigenvalues: tuple[complex, ...]      # all of them (dense) or the top cluster
    spectrum_complete: bool
    mass_vector: np.ndarray               # invariant probability masses, >= 0, sums to 1
    projection_norm: float                # ||Pi1||_1 = sum |mass|
    q_power_norms: tuple[float, ...]      # row family, [0] = ||1 - Pi1||
    q_power_norms_colsum: tuple[float, ...]  # column family, [0] = 1
    unit_residual: float
    power_iterations: int

    @property
    def truncation_N(self) -> int:
        return len(self.q_power_norms) - 2

    @property
    def invariant_density(self) -> np.ndarray:
        """Piecewise-constant density values (integral 1)."""
        return self.mass_vector * self.n_bins

    def subdominant_modulus(self, unit_index: int | None = None) -> float:
        mods = np.abs(np.asarray(self.eigenvalues))
        if len(mods) <= 1:
            return 0.0
        k = int(np.argmin(np.abs(np.asarray(self.eigenvalues) - 1.0))) if unit_index is None else unit_index
        return float(np.max(np.delete(mods, k)))


@dataclass(frozen=True)
class SpectralData:
    """Spectral data of a closed Ulam matrix at a peripheral threshold r."""

    n_bins: int
    r: float
    eigenvalues_above_r: tuple[complex, ...]
    invariant_density: np.ndarray
    projection_norm: float
    q_power_norms: tuple[float, ...]
    q_power_norms_colsum: tuple[float, ...]
    truncation_N: int
    residuals: tuple[float, ...]
    subdominant_modulus: float
    spectrum_complete: bool

    @property
    def mass_vector(self) -> np.ndarray:
        return self.invariant_density / self.n_bins

    def norms(self, orientation: str) -> tuple[float, ...]:
        if orientation == "column":
            return self.q_power_norms_colsum
        if orientation == "row":
            return self.q_power_norms
        raise ValueError(f"orientation must be 'row' or 'column', got {orientation!r}")


@dataclass(frozen=True)
class ResolventBound:
    """Computable bound chain for sup ||(z - P)^-1|| off the spectrum."""

    r: float
    delta: float
    neumann_bound: float          # uniform bound on ||R(z)||_1 over |z| >= r
    resolvent_l1_bound: float     # ||Pi1||/delta + neumann_bound
    h_star: float
    orientation: str

    def __post_init__(self):
        for name in ("neumann_bound", "resolvent_l1_bound", "h_star"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")


# -- core computation ----------------------------------------------------------

def _check_submultiplicative(norms, label: str) -> None:
    m = len(norms)
    for i in range(1, m):
        for j in range(1, m - i):
            if norms[i + j] > norms[i] * norms[j] + SUBMULT_SLACK:
                raise AssertionError(
                    f"{label} power norms violate submultiplicativity at ({i},{j}): "
                    f"{norms[i + j]} > {norms[i]} * {norms[j]}"
                )


def _q_power_norms(P: sp.csr_matrix, u: np.ndarray, n_powers: int,
                   block_size: int = 1024) -> tuple[list[float], list[float]]:
    """Row- and column-family norms of Q^k, k = 0..n_powers, one pass.

    Q = (1 - Pi1) P with Pi1 the rank-one projection onto the invariant
    mass vector u.  Rank-one structure keeps every product at one sparse
    multiply plus an outer-product correction; rows are processed in
    blocks so only block_size x n dense rows are ever materialized.
    """
    n = P.shape[0]
    uP = u @ P
    row_norms = [float(np.max(np.abs(1.0 - u) + (np.abs(u).sum() - np.abs(u))))]
    col_norms = [1.0]
    row_maxima = np.zeros(n_powers + 1)
    col_partial = [np.zeros(n) for _ in range(n_powers + 1)]
    for start in range(0, n, block_size):
        m = min(block_size, n - start)
        block = np.zeros((m, n))
        block[np.arange(m), np.arange(start, start + m)] = 1.0
        for k in range(1, n_powers + 1):
            block = block @ P - np.outer(block.sum(axis=1), uP)
            absb = np.abs(block)
            row_maxima[k] = max(row_maxima[k], float(absb.sum(axis=1).max()))
            col_partial[k] += absb.sum(axis=0)
    for k in range(1, n_powers + 1):
        row_norms.append(float(row_maxima[k]))
        col_norms.append(float(col_partial[k].max()))
    return row_norms, col_norms


def _left_residual(P: sp.csr_matrix, lam: complex) -> float:
    """Residual of the left eigenpair for lam via sparse inverse iteration."""
    n = P.shape[0]
    A = (P.T - lam * sp.identity(n, format="csr", dtype=complex)).tocsc()
    rng = np.random.default_rng(12345)
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    z /= np.abs(z).sum()
    try:
        lu = spla.splu(A + 1e-12 * sp.identity(n, format="csc", dtype=complex))
    except RuntimeError:
        lu = spla.splu(A + 1e-9 * sp.identity(n, format="csc", dtype=complex))
    for _ in range(5):
        z = lu.solve(z)
        z /= np.abs(z).sum()
    return float(np.abs(A @ z).sum() / np.abs(z).sum())


def _dense_eigenvalues(P: sp.csr_matrix) -> np.ndarray:
    return np.linalg.eigvals(P.toarray())


def _iterative_eigenvalues(P: sp.csr_matrix, r: float) -> tuple[np.ndarray, bool]:
    """Largest-modulus eigenvalues via ARPACK, growing k until below r.

    Returns (eigenvalues, complete) where complete=False flags that only
    the computed cluster is known; by construction every uncomputed
    eigenvalue has modulus at most the smallest computed one.
    """
    n = P.shape[0]
    PT = P.T.tocsr()
    v0 = np.full(n, 1.0 / n)   # deterministic start: identical reruns
    k = 16
    while True:
        k = min(k, n - 2)
        try:
            w = spla.eigs(PT, k=k, which="LM", return_eigenvectors=False,
                          maxiter=max(5000, 40 * k), tol=1e-10, v0=v0)
        except spla.ArpackNoConvergence as exc:
            w = exc.eigenvalues
            if w is None or len(w) == 0:
                raise SpectralStructureError(
                    f"ARPACK failed to converge any eigenvalue at n={n}"
                ) from exc
        if np.min(np.abs(w)) <= r or k >= min(256, n - 2):
            return np.asarray(w), False
        k *= 2


def compute_record(matrix: UlamMatrix, *, n_powers: int = 6,
                   dense_cutoff: int = DENSE_CUTOFF, block_size: int = 1024,
                   power_tol: float = 1e-15, r_floor: float = 0.5) -> SpectralRecord:
    """All r-independent spectral data of a closed Ulam matrix.

    ``r_floor`` is the smallest peripheral threshold the iterative
    eigensolver path must support; the dense path returns the complete
    spectrum regardless.
    """
    if matrix.mode != "closed":
        raise ValueError("spectral analysis requires a closed-mode matrix")
    P = matrix.matrix
    n = matrix.n_bins

    lam, u, residual, iterations = dominant_left_eigenpair(P, tol=power_tol)
    if abs(lam - 1.0) > UNIT_EIGENVALUE_TOL:
        raise NoUnitEigenvalueError(
            f"dominant eigenvalue {lam} is not within {UNIT_EIGENVALUE_TOL} of 1"
        )
    if residual > RESIDUAL_TOL:
        raise EigensolverResidualError(
            f"invariant-density residual {residual:.3e} exceeds {RESIDUAL_TOL}"
        )
    below = u < 0.0
    if below.any():
        if u.min() < -1e-12:
            raise EigensolverResidualError(
                f"invariant density has entries below -1e-12 (min {u.min():.3e})"
            )
        u = np.where(below, 0.0, u)
    u = u / u.sum()
    projection_norm = float(np.abs(u).sum())

    if n <= dense_cutoff:
        eigenvalues = _dense_eigenvalues(P)
        complete = True
    else:
        eigenvalues, complete = _iterative_eigenvalues(P, r_floor)

    row_norms, col_norms = _q_power_norms(P, u, n_powers, block_size=block_size)
    _check_submultiplicative(row_norms, "row")
    _check_submultiplicative(col_norms, "column")

    return SpectralRecord(
        n_bins=n,
        map_fingerprint=matrix.map_fingerprint,
        eigenvalues=tuple(complex(w) for w in eigenvalues),
        spectrum_complete=complete,
        mass_vector=u,
        projection_norm=projection_norm,
        q_power_norms=tuple(row_norms),
        q_power_norms_colsum=tuple(col_norms),
        unit_residual=residual,
        power_iterations=iterations,
    )


def record_to_data(record: SpectralRecord, r: float, *,
                   matrix: UlamMatrix | None = None) -> SpectralData:
    """Slice a record at a peripheral threshold r, with residual checks."""
    if not 0.0 < r < 1.0:
        raise ValueError(f"need 0 < r < 1, got r={r}")
    w = np.asarray(record.eigenvalues)
    above = w[np.abs(w) > r]
    if not np.any(np.abs(above - 1.0) <= UNIT_EIGENVALUE_TOL):
        raise NoUnitEigenvalueError(
            f"no eigenvalue within {UNIT_EIGENVALUE_TOL} of 1 above r={r}"
        )
    # order by modulus, largest first, for stable reporting
    above = tuple(complex(z) for z in above[np.argsort(-np.abs(above))])
    residuals = []
    for z in above:
        if abs(z - 1.0) <= UNIT_EIGENVALUE_TOL:
            residuals.append(record.unit_residual)
        elif matrix is not None:
            residuals.append(_left_residual(matrix.matrix, z))
        else:
            residuals.append(float("nan"))
    for z, res in zip(above, residuals):
        if math.isfinite(res) and res > RESIDUAL_TOL:
            raise EigensolverResidualError(
                f"eigenpair at {z} has residual {res:.3e} > {RESIDUAL_TOL}"
            )
    return SpectralData(
        n_bins=record.n_bins,
        r=r,
        eigenvalues_above_r=above,
        invariant_density=record.invariant_density,
        projection_norm=record.projection_norm,
        q_power_norms=record.q_power_norms,
        q_power_norms_colsum=record.q_power_norms_colsum,
        truncation_N=record.truncation_N,
        residuals=tuple(residuals),
        subdominant_modulus=record.subdominant_modulus(),
        spectrum_complete=record.spectrum_complete,
    )


def eigen_analysis(matrix: UlamMatrix, r: float, *, n_powers: int = 6,
                   dense_cutoff: int = DENSE_CUTOFF, block_size: int = 1024) -> SpectralData:
    """Eigenvalues above r, invariant density, and Q-power norms.

    Dense eigensolve for n_bins <= ``dense_cutoff``; ARPACK with a growing
    Krylov block above.  Raises :class:`NoUnitEigenvalueError` when no
    eigenvalue sits within 1e-8 of 1 and
    :class:`EigensolverResidualError` when a reported pair has residual
    above 1e-8.
    """
    record = compute_record(matrix, n_powers=n_powers, dense_cutoff=dense_cutoff,
                            block_size=block_size, r_floor=min(r, 0.5))
    return record_to_data(record, r, matrix=matrix)


# -- bounds --------------------------------------------------------------------

def neumann_bound(data: SpectralData, r: float, *, orientation: str = "column",
                  matrix: UlamMatrix | None = None, max_N: int = MAX_TRUNCATION) -> float:
    """Uniform bound on ||R(z)||_1 over |z| >= r via the truncated series.

    With q = ||Q^(N+1)|| / r^(N+1) < 1 the value is

        (1/r) * (sum_{k=0}^{N} ||Q^k|| / r^k) / (1 - q).

    When the stored truncation gives q >= 1, N grows (recomputing powers
    when ``matrix`` is supplied) up to ``max_N`` before raising
    :class:`NeumannDivergenceError`.
    """
    norms = list(data.norms(orientation))
    N = data.truncation_N

    def tail_ratio(norms, N):
        return norms[N + 1] / r ** (N + 1)

    while tail_ratio(norms, N) >= 1.0:
        if N + 2 < len(norms):
            N += 1
            continue
        if len(norms) - 1 >= max_N or matrix is None:
            raise NeumannDivergenceError(
                f"Neumann tail ratio q >= 1 at N={N} "
                "(r too close to the essential spectrum, or no spectral gap)"
            )
        extended = _q_power_norms(matrix.matrix, data.mass_vector,
                                  min(2 * (len(norms) - 1), max_N))
        norms = list(extended[1] if orientation == "column" else extended[0])
        norms[0] = data.norms(orientation)[0]
    q = tail_ratio(norms, N)
    partial = math.fsum(norms[k] / r**k for k in range(N + 1))
    return (partial / r) / (1.0 - q)


def h_star(data: SpectralData, r: float, delta: float, alpha0: float, B0: float,
           *, orientation: str = "column") -> ResolventBound:
    """Computable resolvent-sup surrogate for the certification chain.

    Requires the spectral layout that justifies the rank-one split: the
    unit eigenvalue is the only one of modulus above r, it is simple, and
    every other eigenvalue has modulus at most r - delta.  Violations
    raise :class:`SpectralStructureError`.
    """
    alpha0 = float(alpha0)
    B0 = float(B0)
    r = float(r)
    delta = float(delta)
    if not 0 < r < 1:
        raise ValueError(f"need 0 < r < 1, got {r}")
    if delta <= 0:
        raise ValueError(f"need delta > 0, got {delta}")
    if r <= alpha0:
        raise ValueError(f"need r > alpha0, got r={r}, alpha0={alpha0}")
    if data.r > r + 1e-15:
        raise ValueError(
            f"spectral data was computed at threshold {data.r} > r = {r}; "
            "recompute at or below r"
        )
    above = [z for z in data.eigenvalues_above_r if abs(z) > r]
    unit = [z for z in above if abs(z - 1.0) <= UNIT_EIGENVALUE_TOL]
    if len(unit) != 1 or len(above) != 1:
        raise SpectralStructureError(
            f"need exactly one simple eigenvalue (the unit one) above r={r}; "
            f"found {above}"
        )
    if data.subdominant_modulus > r - delta:
        raise SpectralStructureError(
            f"subdominant eigenvalue modulus {data.subdominant_modulus:.6g} "
            f"exceeds r - delta = {r - delta:.6g}"
        )
    neumann = neumann_bound(data, r, orientation=orientation)
    resolvent_l1 = data.projection_norm / delta + neumann
    value = (B0 / (r - alpha0) + 1.0) * resolvent_l1 + 1.0 / (r - alpha0) + 2.0 / r
    return ResolventBound(r=r, delta=delta, neumann_bound=neumann,
                          resolvent_l1_bound=resolvent_l1, h_star=value,
                          orientation=orientation)
