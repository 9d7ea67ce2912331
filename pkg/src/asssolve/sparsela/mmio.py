"""Matrix Market coordinate I/O for CsrMatrix, and CSV export of spectra."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import scipy.io

from .csr import CsrMatrix, symmetry_audit


def write_matrix_market(path, a: CsrMatrix, comment: str = "") -> None:
    """Write ``a`` in coordinate format; symmetric matrices store the lower triangle only."""
    symmetry = "symmetric" if symmetry_audit(a) else "general"
    scipy.io.mmwrite(str(path), a.to_scipy(), comment=comment, field="real", symmetry=symmetry)


def read_matrix_market(path) -> CsrMatrix:
    s = scipy.io.mmread(str(path))
    if hasattr(s, "tocsr"):
        return CsrMatrix.from_scipy(s.tocsr())
    return CsrMatrix.from_dense(np.asarray(s))


def write_spectrum_csv(path, eigenvalues) -> None:
    ev = np.asarray(eigenvalues, dtype=complex)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im"])
        for z in ev:
            w.writerow([repr(float(z.real)), repr(float(z.imag))])


def read_spectrum_csv(path) -> np.ndarray:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
