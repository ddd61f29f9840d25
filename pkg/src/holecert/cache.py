"""Disk/memory cache for Ulam matrices and spectral records.

Matrices are keyed by (map fingerprint, bin count, mode, hole); spectral
records by (map fingerprint, bin count) only, since everything they hold
(eigenvalues, invariant density, power norms of the mass-free part) is
independent of the peripheral threshold r and the separation delta.  The
matrix power computations are by far the most expensive step, so a warm
cache lets a second run at the same mesh do no matrix work at all.

All writes are atomic (temp file + rename).  The cache directory comes
from the HOLECERT_CACHE_DIR environment variable when not given
explicitly; a cache constructed with ``directory=None`` is memory-only.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .maps import PiecewiseMap
from .spectral import SpectralData, SpectralRecord, compute_record, record_to_data
from .ulam import Hole, UlamMatrix, UlamPartition, build_closed, build_open, load_matrix, save_matrix

__all__ = ["PipelineCache", "default_cache_dir", "CACHE_ENV_VAR"]

CACHE_ENV_VAR = "HOLECERT_CACHE_DIR"


def default_cache_dir() -> Path | None:
    """Directory named by HOLECERT_CACHE_DIR, or None (memory-only)."""
    value = os.environ.get(CACHE_ENV_VAR)
    return Path(value) if value else None


def _atomic_write(path: Path, writer) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


class PipelineCache:
    """Caches closed/open matrices and spectral records for the pipeline.

    Parameters
    ----------
    directory : path-like or None
        On-disk location; None keeps everything in memory for the
        process lifetime.
    n_powers, dense_cutoff, block_size
        Defaults handed to the spectral computation.
    """

    def __init__(self, directory=None, *, n_powers: int = 6,
                 dense_cutoff: int = 6000, block_size: int = 1024):
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
        self.n_powers = n_powers
        self.dense_cutoff = dense_cutoff
        self.block_size = block_size
        self._matrices: dict[tuple, UlamMatrix] = {}
        self._records: dict[tuple, SpectralRecord] = {}
        self.stats = {
            "matrix_hits": 0, "matrix_builds": 0,
            "spectral_hits": 0, "spectral_builds": 0,
        }

    # -- paths ------------------------------------------------------------

    def _matrix_path(self, fingerprint: str, n_bins: int, mode: str,
                     hole: Hole | None) -> Path | None:
        if self.directory is None:
            return None
        tag = f"{mode}"
        if hole is not None:
            tag += f"_{hole.a}_{hole.b}".replace("/", "-")
        return self.directory / f"{fingerprint}_{n_bins}_{tag}.matrix.txt"

    def _record_path(self, fingerprint: str, n_bins: int) -> Path | None:
        if self.directory is None:
            return None
        return self.directory / f"{fingerprint}_{n_bins}.spectral.npz"

    # -- matrices -----------------------------------------------------------

    def closed_matrix(self, tmap: PiecewiseMap, n_bins: int) -> UlamMatrix:
        key = (tmap.fingerprint, n_bins, "closed")
        if key in self._matrices:
            self.stats["matrix_hits"] += 1
            return self._matrices[key]
        path = self._matrix_path(tmap.fingerprint, n_bins, "closed", None)
        if path is not None and path.exists():
            m = load_matrix(path, expected_fingerprint=tmap.fingerprint)
            self.stats["matrix_hits"] += 1
        else:
            m = build_closed(tmap, UlamPartition(n_bins))
            self.stats["matrix_builds"] += 1
            if path is not None:
                _atomic_write(path, lambda tmp: save_matrix(m, tmp))
        self._matrices[key] = m
        return m

    def open_matrix(self, tmap: PiecewiseMap, n_bins: int, hole: Hole) -> UlamMatrix:
        key = (tmap.fingerprint, n_bins, "open", str(hole))
        if key in self._matrices:
            self.stats["matrix_hits"] += 1
            return self._matrices[key]
        path = self._matrix_path(tmap.fingerprint, n_bins, "open", hole)
        if path is not None and path.exists():
            m = load_matrix(path, expected_fingerprint=tmap.fingerprint)
            self.stats["matrix_hits"] += 1
        else:
            m = build_open(tmap, UlamPartition(n_bins), hole,
                           closed=self.closed_matrix(tmap, n_bins))
            self.stats["matrix_builds"] += 1
            if path is not None:
                _atomic_write(path, lambda tmp: save_matrix(m, tmp))
        self._matrices[key] = m
        return m

    # -- spectral records -----------------------------------------------------

    def spectral_record(self, tmap: PiecewiseMap, n_bins: int, *,
                        n_powers: int | None = None) -> SpectralRecord:
        n_powers = n_powers if n_powers is not None else self.n_powers
        key = (tmap.fingerprint, n_bins)
        record = self._records.get(key)
        if record is not None and record.truncation_N + 1 >= n_powers:
            self.stats["spectral_hits"] += 1
            return record
        path = self._record_path(tmap.fingerprint, n_bins)
        if path is not None and path.exists():
            record = _load_record(path)
            if record.truncation_N + 1 >= n_powers:
                self._records[key] = record
                self.stats["spectral_hits"] += 1
                return record
        record = compute_record(
            self.closed_matrix(tmap, n_bins), n_powers=n_powers,
            dense_cutoff=self.dense_cutoff, block_size=self.block_size,
        )
        self.stats["spectral_builds"] += 1
        self._records[key] = record
        if path is not None:
            _atomic_write(path, lambda tmp: _save_record(record, tmp))
        return record

    def spectral(self, tmap: PiecewiseMap, n_bins: int, r: float, *,
                 n_powers: int | None = None) -> SpectralData:
        record = self.spectral_record(tmap, n_bins, n_powers=n_powers)
        return record_to_data(record, r, matrix=self.closed_matrix(tmap, n_bins))

    # -- maintenance ------------------------------------------------------------

    def entries(self) -> list[dict]:
        """One dict per cached file (empty for memory-only caches)."""
        if self.directory is None or not self.directory.exists():
            return []
        out = []
        for path in sorted(self.directory.iterdir()):
            if path.suffix == ".tmp" or not path.is_file():
                continue
            out.append({
                "file": path.name,
                "bytes": path.stat().st_size,
                "kind": "spectral" if path.name.endswith(".spectral.npz") else "matrix",
            })
        return out

    def purge(self) -> int:
        """Remove every cached file and in-memory entry; returns file count."""
        self._matrices.clear()
        self._records.clear()
        count = 0
        if self.directory is not None and self.directory.exists():
            for path in self.directory.iterdir():
                if path.is_file() and (path.name.endswith(".matrix.txt")
                                       or path.name.endswith(".spectral.npz")):
                    path.unlink()
                    count += 1
        return count


def _save_record(record: SpectralRecord, path) -> None:
    meta = {
        "n_bins": record.n_bins,
        "map_fingerprint": record.map_fingerprint,
        "spectrum_complete": record.spectrum_complete,
        "projection_norm": record.projection_norm,
        "unit_residual": record.unit_residual,
        "power_iterations": record.power_iterations,
    }
    np.savez(
        path,
        eigenvalues=np.asarray(record.eigenvalues, dtype=complex),
        mass_vector=record.mass_vector,
        q_power_norms=np.asarray(record.q_power_norms),
        q_power_norms_colsum=np.asarray(record.q_power_norms_colsum),
        meta=json.dumps(meta),
    )
    # numpy appends .npz when missing; normalize for the atomic rename
    saved = path if str(path).endswith(".npz") else str(path) + ".npz"
    if saved != str(path):
        os.replace(saved, path)


def _load_record(path) -> SpectralRecord:
    with np.load(path, allow_pickle=False) as blob:
        meta = json.loads(str(blob["meta"]))
        return SpectralRecord(
            n_bins=int(meta["n_bins"]),
            map_fingerprint=meta["map_fingerprint"],
            eigenvalues=tuple(complex(z) for z in blob["eigenvalues"]),
            spectrum_complete=bool(meta["spectrum_complete"]),
            mass_vector=np.asarray(blob["mass_vector"]),
            projection_norm=float(meta["projection_norm"]),
            q_power_norms=tuple(float(v) for v in blob["q_power_norms"]),
            q_power_norms_colsum=tuple(float(v) for v in blob["q_power_norms_colsum"]),
            unit_residual=float(meta["unit_residual"]),
            power_iterations=int(meta["power_iterations"]),
        )
