"""Exact two-qubit polarization-state math: states, projectors, mixing, entanglement.

Conventions used throughout the package:

* Two-qubit basis order is ``|HH>, |HV>, |VH>, |VV>`` with the first slot
  holding the X photon and the second slot the XX photon.
* Circular basis handedness is ``R = (|H> - i|V>)/sqrt(2)`` and
  ``L = (|H> + i|V>)/sqrt(2)``.  Any consistent convention gives identical
  concurrence and fidelity values.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvariantError

# contract tolerances for a valid density matrix (double-precision slack,
# not physics)
HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-9
EIGENVALUE_TOL = -1e-10

BASIS_LABELS = ("H", "V", "D", "A", "R", "L")

_SQ2 = 1.0 / math.sqrt(2.0)

#: single-photon kets in the H/V basis
KETS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_SQ2, _SQ2], dtype=complex),
    "A": np.array([_SQ2, -_SQ2], dtype=complex),
    "R": np.array([_SQ2, -1j * _SQ2], dtype=complex),
    "L": np.array([_SQ2, 1j * _SQ2], dtype=complex),
}

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1j], [1j, 0.0]], dtype=complex),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

# sigma_y (x) sigma_y, the spin-flip matrix entering the concurrence
_SYSY = np.kron(PAULI["Y"], PAULI["Y"])


def ket(label: str) -> np.ndarray:
    """Unit-norm single-photon ket for one of the labels H, V, D, A, R, L."""
    try:
        return KETS[label].copy()
    except KeyError:
        raise ValueError(f"unknown polarization label {label!r}") from None


def projector(label: str) -> np.ndarray:
    """Rank-1 projector |s><s| for a single-photon basis label."""
    v = ket(label)
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class DensityMatrixReport:
    """Diagnostics from validating a candidate 4x4 density matrix."""

    hermiticity_residual: float
    trace_deviation: float
    min_eigenvalue: float

    @property
    def hermitian_ok(self) -> bool:
        return self.hermiticity_residual <= HERMITICITY_TOL

    @property
    def trace_ok(self) -> bool:
        return self.trace_deviation <= TRACE_TOL

    @property
    def positive_ok(self) -> bool:
        return self.min_eigenvalue >= EIGENVALUE_TOL

    @property
    def passed(self) -> bool:
        return self.hermitian_ok and self.trace_ok and self.positive_ok


def validate_density_matrix(rho: np.ndarray) -> DensityMatrixReport:
    """Report Hermiticity residual, trace deviation and minimum eigenvalue.

    Diagnostic only; never raises on a bad matrix.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {rho.shape}")
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    trace_dev = float(abs(rho.trace() - 1.0))
    # eigenvalues of the Hermitian part; for a nearly-Hermitian input this
    # is the meaningful spectrum
    evals = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)
    return DensityMatrixReport(herm, trace_dev, float(evals.min()))


def require_valid(rho: np.ndarray) -> np.ndarray:
    """Return ``rho`` as a complex array, raising InvariantError if invalid."""
    rho = np.asarray(rho, dtype=complex)
    report = validate_density_matrix(rho)
    if not report.passed:
        raise InvariantError(
            "not a valid density matrix: "
            f"hermiticity residual {report.hermiticity_residual:.3g}, "
            f"trace deviation {report.trace_deviation:.3g}, "
            f"min eigenvalue {report.min_eigenvalue:.3g}"
        )
    return rho


def bell_phi_plus() -> np.ndarray:
    """Density matrix of (|HH> + |VV>)/sqrt(2)."""
    psi = np.zeros(4, dtype=complex)
    psi[0] = psi[3] = _SQ2
    return np.outer(psi, psi.conj())


def dephased_bell(coherence: float) -> np.ndarray:
    """Bell state |phi+> with its HH/VV coherence reduced to ``coherence``.

    The diagonal stays diag(1/2, 0, 0, 1/2); the |HH><VV| element becomes
    coherence/2.  The concurrence of the result equals ``coherence``.
    """
    c = float(coherence)
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"coherence must be in [0, 1], got {c}")
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = rho[3, 3] = 0.5
    rho[0, 3] = rho[3, 0] = c / 2.0
    return rho


def werner_mix(rho0: np.ndarray, k: float) -> np.ndarray:
    """Mix ``rho0`` with isotropic noise: (1-k)/4 * I + k * rho0."""
    rho0 = require_valid(rho0)
    k = float(k)
    if not 0.0 <= k <= 1.0:
        raise ValueError(f"mixing fraction k must be in [0, 1], got {k}")
    return (1.0 - k) / 4.0 * np.eye(4, dtype=complex) + k * rho0


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit density matrix.

    Computed from the square roots of the eigenvalues of
    ``rho (sy x sy) rho* (sy x sy)`` sorted in decreasing order.
    """
    rho = require_valid(rho)
    m = rho @ _SYSY @ rho.conj() @ _SYSY
    evals = np.linalg.eigvals(m).real
    lam = np.sqrt(np.clip(evals, 0.0, None))
    lam[::-1].sort()
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def fidelity_to_phi_plus(rho: np.ndarray) -> float:
    """Overlap <phi+| rho |phi+> with the target Bell state."""
    rho = require_valid(rho)
    # <phi+|rho|phi+> = (rho00 + rho03 + rho30 + rho33)/2
    val = (rho[0, 0] + rho[0, 3] + rho[3, 0] + rho[3, 3]).real / 2.0
    return float(val)


def _format_float(x: float) -> str:
    # 17 significant digits guarantee a bit-exact text round trip
    return format(float(x), ".17g")


def density_matrix_to_json(rho: np.ndarray) -> str:
    """Serialize a 4x4 matrix as JSON with a bit-exact decimal encoding."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {rho.shape}")
    rows_re = [
        "[" + ", ".join(_format_float(v) for v in row) + "]" for row in rho.real
    ]
    rows_im = [
        "[" + ", ".join(_format_float(v) for v in row) + "]" for row in rho.imag
    ]
    return (
        '{"basis": "HH,HV,VH,VV", '
        '"re": [' + ", ".join(rows_re) + "], "
        '"im": [' + ", ".join(rows_im) + "]}"
    )


def density_matrix_from_json(text: str) -> np.ndarray:
    """Inverse of :func:`density_matrix_to_json`."""
    obj = json.loads(text)
    if obj.get("basis") != "HH,HV,VH,VV":
        raise ValueError(f"unsupported basis declaration {obj.get('basis')!r}")
    re = np.array(obj["re"], dtype=float)
    im = np.array(obj["im"], dtype=float)
    if re.shape != (4, 4) or im.shape != (4, 4):
        raise ValueError("matrix payload must be 4x4")
    return re + 1j * im
