"""Minkowski geometry, causal classification, and Dirac spin-sum weights.

The spacetime metric has signature (-,+,+,+).  Vectors carry contravariant
components (v0,v1,v2,v3), covectors covariant components (k0,k1,k2,k3); the
dual pairing ``pair(k, v) = k_mu v^mu`` never inserts the metric.  Covectors
are oriented through their metrically raised vector, so a null covector with
k0 > 0 is past-directed here.

The internal spinor algebra uses the standard particle-physics mostly-minus
gamma matrices (Dirac basis) so that the textbook spin sums apply verbatim;
the conversion between the two conventions is confined to ``dirac_weight``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FourVector",
    "FourCovector",
    "CausalKind",
    "Orientation",
    "CausalClass",
    "GAMMA",
    "lorentz_square",
    "classify_causal",
    "pair",
    "raise_covector",
    "shell_energy",
    "dirac_weight",
    "dirac_weight_batch",
]

# Minkowski metric, used both to raise covector indices and in lorentz_square.
_METRIC_DIAG = np.array([-1.0, 1.0, 1.0, 1.0])


@dataclass(frozen=True)
class FourVector:
    """Contravariant vector; houses flow directions and tangent vectors."""

    components: tuple[float, float, float, float]

    def __post_init__(self):
        arr = np.asarray(self.components, dtype=float)
        if arr.shape != (4,) or not np.all(np.isfinite(arr)):
            raise ValueError("FourVector needs 4 finite components")
        object.__setattr__(self, "components", tuple(float(c) for c in arr))

    def as_array(self) -> np.ndarray:
        return np.array(self.components)

    @property
    def time(self) -> float:
        return self.components[0]

    @property
    def spatial(self) -> np.ndarray:
        return np.array(self.components[1:])


@dataclass(frozen=True)
class FourCovector:
    """Covariant momentum/probe direction."""

    components: tuple[float, float, float, float]

    def __post_init__(self):
        arr = np.asarray(self.components, dtype=float)
        if arr.shape != (4,) or not np.all(np.isfinite(arr)):
            raise ValueError("FourCovector needs 4 finite components")
        object.__setattr__(self, "components", tuple(float(c) for c in arr))

    def as_array(self) -> np.ndarray:
        return np.array(self.components)

    @property
    def time(self) -> float:
        return self.components[0]

    @property
    def spatial(self) -> np.ndarray:
        return np.array(self.components[1:])


class CausalKind(enum.Enum):
    TIMELIKE = "timelike"
    SPACELIKE = "spacelike"
    NULL = "null"


class Orientation(enum.Enum):
    FUTURE = "future"
    PAST = "past"
    NONE = "none"


@dataclass(frozen=True)
class CausalClass:
    kind: CausalKind
    orientation: Orientation
    tol: float


def _as4(v) -> np.ndarray:
    if isinstance(v, (FourVector, FourCovector)):
        return v.as_array()
    arr = np.asarray(v, dtype=float)
    if arr.shape != (4,):
        raise ValueError("expected 4 components")
    return arr


def lorentz_square(v) -> float:
    """g(v, v) = -(v0)^2 + (v1)^2 + (v2)^2 + (v3)^2."""
    arr = _as4(v)
    return float(np.dot(_METRIC_DIAG * arr, arr))


def pair(k, v) -> float:
    """Dual pairing k_mu v^mu, no metric insertion."""
    return float(np.dot(_as4(k), _as4(v)))


def raise_covector(k) -> FourVector:
    """Metric-raised vector of a covector: (-k0, k1, k2, k3)."""
    arr = _as4(k)
    return FourVector(tuple(_METRIC_DIAG * arr))


def classify_causal(v, tol: float = 1e-9) -> CausalClass:
    """Causal class of a vector, tolerance applied to the Euclidean-normalized
    Lorentz square so the classification is scale-free.

    The zero vector classifies as NULL/NONE.  Orientation follows the sign of
    the time component and is only attached to timelike/null vectors.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    arr = _as4(v)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        return CausalClass(CausalKind.NULL, Orientation.NONE, tol)
    q = lorentz_square(arr / norm)
    if q < -tol:
        kind = CausalKind.TIMELIKE
    elif q > tol:
        kind = CausalKind.SPACELIKE
    else:
        kind = CausalKind.NULL
    if kind is CausalKind.SPACELIKE or arr[0] == 0.0:
        orient = Orientation.NONE
    else:
        orient = Orientation.FUTURE if arr[0] > 0 else Orientation.PAST
    return CausalClass(kind, orient, tol)


def shell_energy(spatial, m: float):
    """On-shell energy omega = sqrt(|k|^2 + m^2); broadcasts over leading axes."""
    if m < 0:
        raise ValueError("mass must be >= 0")
    arr = np.asarray(spatial, dtype=float)
    return np.sqrt(np.sum(arr * arr, axis=-1) + m * m)


# ---------------------------------------------------------------------------
# Internal gamma matrices: Dirac basis, mostly-minus metric diag(1,-1,-1,-1).
# ---------------------------------------------------------------------------

_PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

_ID2 = np.eye(2, dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)

GAMMA = np.zeros((4, 4, 4), dtype=complex)
GAMMA[0] = np.block([[_ID2, _Z2], [_Z2, -_ID2]])
for _i in range(3):
    GAMMA[_i + 1] = np.block([[_Z2, _PAULI[_i]], [-_PAULI[_i], _Z2]])


def dirac_weight(spatial, sheet: int, m: float) -> np.ndarray:
    """Per-sheet 4x4 spin-sum weight W(kvec, s) of the anticommutator density.

    Hermitian, positive semidefinite, trace 4*omega; eigenvalues are exactly
    {2*omega, 2*omega, 0, 0}.  ``spatial`` holds the covariant spatial
    components of the shell covector, ``sheet`` the sign of its stored time
    component k0 = sheet*omega.  Internally this is the mostly-minus spin sum
    (pslash +- m) gamma^0 at physical momentum pvec = -sheet*kvec.
    """
    return dirac_weight_batch(np.asarray(spatial, dtype=float)[None, :], sheet, m)[0]


def dirac_weight_batch(kvecs: np.ndarray, sheet: int, m: float) -> np.ndarray:
    """Vectorized ``dirac_weight``: kvecs (n,3) -> (n,4,4)."""
    if m <= 0:
        raise ValueError("mass must be > 0 for Dirac weights")
    if sheet not in (1, -1):
        raise ValueError("sheet must be +1 or -1")
    kvecs = np.asarray(kvecs, dtype=float)
    n = kvecs.shape[0]
    omega = shell_energy(kvecs, m)
    sig_k = np.einsum("iab,ni->nab", _PAULI, kvecs)
    w = np.zeros((n, 4, 4), dtype=complex)
    w[:, :2, :2] = (omega + sheet * m)[:, None, None] * _ID2
    w[:, 2:, 2:] = (omega - sheet * m)[:, None, None] * _ID2
    w[:, :2, 2:] = -sheet * sig_k
    w[:, 2:, :2] = -sheet * sig_k
    return w


def dirac_weight_entry(kvecs: np.ndarray, sheet: int, m: float, i: int, j: int) -> np.ndarray:
    """Single (i, j) entry of ``dirac_weight_batch`` in closed form."""
    kvecs = np.asarray(kvecs, dtype=float)
    n = kvecs.shape[0]
    bi, bj = i // 2, j // 2
    if bi == bj:
        if i != j:
            return np.zeros(n, dtype=complex)
        omega = shell_energy(kvecs, m)
        return (omega + (sheet * m if bi == 0 else -sheet * m)).astype(complex)
    # off-diagonal block: -sheet * (sigma . k)[i%2, j%2]
    a, b = i % 2, j % 2
    if a == b:
        val = kvecs[:, 2] * (1.0 if a == 0 else -1.0) + 0.0j
    elif a == 0:
        val = kvecs[:, 0] - 1j * kvecs[:, 1]
    else:
        val = kvecs[:, 0] + 1j * kvecs[:, 1]
    return -sheet * val
