"""Momentum-space construction of vacuum and thermal two-point functions.

A two-point branch is a shell density (anticommutator / commutator weight on
the mass shell, measure d3k / ((2pi)^3 2 omega)) multiplied pointwise by a
statistical factor of u = pair(k, chi).  Shell covectors are parametrized by
their covariant spatial components and a sheet sign s, with k0 = s*omega.

Scalar Bose densities carry the commutator's per-sheet sign; Fermi and vacuum
densities are positive semidefinite pointwise.  A scalar field with Fermi
factors is allowed as a synthetic, clearly non-physical control.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .minkowski import (
    CausalKind,
    Orientation,
    classify_causal,
    dirac_weight_batch,
    dirac_weight_entry,
    shell_energy,
)
from . import quadrature as quad

__all__ = [
    "FieldKind",
    "Statistics",
    "Branch",
    "FieldSpec",
    "FlowSpec",
    "ShellDensity",
    "ThermalTwoPoint",
    "DivergenceReport",
    "EnvelopeSpec",
    "ValidationError",
    "OrientationError",
    "IRDivergentError",
    "fermi_factor",
    "bose_factor",
    "bose_minus_factor",
    "build_two_point",
    "car_sum_residual",
    "detailed_balance_residual",
    "positivity_gram",
    "flow_invariance_residual",
    "bose_truncated_mass",
    "fit_log_divergence",
    "bose_negativity_witness",
    "pointwise_psd_report",
]


class ValidationError(ValueError):
    """Invalid field/flow/statistics combination."""


class OrientationError(ValidationError):
    """Bose statistics along a past-directed timelike flow (negative beta)."""


class IRDivergentError(Exception):
    """The requested Bose two-point function does not exist.

    Carries a stub :class:`DivergenceReport` and, for spacelike flows, a
    negativity witness (shell point, candidate density value).  For lightlike
    flows the candidate density has no negative values, so the witness is
    ``None`` and only the non-integrability rejection applies.
    """

    def __init__(self, message, report, witness):
        super().__init__(message)
        self.report = report
        self.witness = witness


class FieldKind(enum.Enum):
    SCALAR = "scalar"
    DIRAC = "dirac"


class Statistics(enum.Enum):
    FERMI = "fermi"
    BOSE = "bose"
    VACUUM = "vacuum"


class Branch(enum.Enum):
    PLUS = 1
    MINUS = -1


@dataclass(frozen=True)
class FieldSpec:
    kind: FieldKind
    mass: float

    def __post_init__(self):
        if not (math.isfinite(self.mass) and self.mass > 0):
            raise ValidationError("mass must be finite and > 0")


@dataclass(frozen=True)
class FlowSpec:
    """Flow direction chi (Euclidean norm 1) and inverse temperature beta.

    beta = math.inf is the vacuum limit.
    """

    chi: tuple[float, float, float, float]
    beta: float

    def __post_init__(self):
        arr = np.asarray(self.chi, dtype=float)
        if arr.shape != (4,) or not np.all(np.isfinite(arr)):
            raise ValidationError("chi needs 4 finite components")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise ValidationError("chi must be nonzero")
        if abs(norm - 1.0) > 1e-9:
            raise ValidationError("chi must have Euclidean norm 1")
        object.__setattr__(self, "chi", tuple(float(c) for c in arr / norm))
        if not (self.beta > 0):
            raise ValidationError("beta must be > 0 (math.inf for vacuum)")

    def chi_array(self) -> np.ndarray:
        return np.array(self.chi)

    @property
    def causal(self):
        return classify_causal(self.chi)


# ---------------------------------------------------------------------------
# Statistical factors, overflow-safe for |beta*u| up to 1e4 and beyond.
# ---------------------------------------------------------------------------


def fermi_factor(u, beta: float, branch: int):
    """Fermi factor 1/(e^{-bu}+1) (branch +1) or 1/(e^{+bu}+1) (branch -1).

    beta = math.inf yields the sharp step (0.5 at u = 0).
    """
    if not beta > 0:
        raise ValidationError("beta must be > 0")
    u = np.asarray(u, dtype=float)
    if branch == -1:
        u = -u
    elif branch != 1:
        raise ValueError("branch must be +1 or -1")
    if math.isinf(beta):
        return np.where(u > 0, 1.0, np.where(u < 0, 0.0, 0.5))
    x = beta * u
    # exp only ever sees non-positive arguments
    ex = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))


def bose_factor(u, beta: float):
    """Bose factor 1/(1 - e^{-bu}); pole at u = 0.

    Branches on sign(u) into the two algebraically equivalent expm1 forms,
    so the result keeps full relative precision for any |beta u| (down to
    the -e^{-b|u|} tail on the negative side) and the 1/(beta u) + 1/2
    behaviour near zero is accurate.
    """
    if not (beta > 0 and math.isfinite(beta)):
        raise ValidationError("beta must be finite and > 0")
    u = np.asarray(u, dtype=float)
    if np.any(u == 0.0):
        raise ZeroDivisionError("bose_factor has a pole at u = 0")
    with np.errstate(over="ignore"):
        return np.where(
            u > 0,
            -1.0 / np.expm1(-beta * np.abs(u)),
            -1.0 / np.expm1(beta * np.abs(u)),
        )


def bose_minus_factor(u, beta: float):
    """Minus-branch Bose factor b(u) - 1 = e^{-bu} b(u), computed stably."""
    if not (beta > 0 and math.isfinite(beta)):
        raise ValidationError("beta must be finite and > 0")
    u = np.asarray(u, dtype=float)
    if np.any(u == 0.0):
        raise ZeroDivisionError("bose factors have a pole at u = 0")
    # u > 0: 1/(e^{bu} - 1); u < 0: -b(|u|)
    with np.errstate(over="ignore"):
        pos = 1.0 / np.expm1(beta * np.clip(u, 0.0, None) + np.where(u > 0, 0.0, 1.0))
    neg = 1.0 / np.expm1(-beta * np.abs(u))
    return np.where(u > 0, pos, neg)


class ShellDensity:
    """Mass-shell density: field spec plus the per-sheet weight rule.

    kind_tag is one of "dirac_car", "scalar_car", "scalar_ccr"; the ccr
    variant carries the commutator's per-sheet sign.
    """

    def __init__(self, field: FieldSpec, kind_tag: str):
        if kind_tag not in ("dirac_car", "scalar_car", "scalar_ccr"):
            raise ValueError(kind_tag)
        self.field = field
        self.kind_tag = kind_tag

    @property
    def is_matrix(self) -> bool:
        return self.kind_tag == "dirac_car"

    def weight_scalar(self, kvecs: np.ndarray, sheet: int) -> np.ndarray:
        """Scalar weight (+-1) at the given spatial nodes."""
        n = np.asarray(kvecs).shape[0]
        sign = float(sheet) if self.kind_tag == "scalar_ccr" else 1.0
        return np.full(n, sign)

    def weight_matrix(self, kvecs: np.ndarray, sheet: int) -> np.ndarray:
        if not self.is_matrix:
            raise ValueError("scalar density has no matrix weight")
        return dirac_weight_batch(kvecs, sheet, self.field.mass)

    def weight_entry(self, kvecs: np.ndarray, sheet: int, i: int, j: int) -> np.ndarray:
        """One spinor entry of the weight; scalar densities ignore (i, j)."""
        if self.is_matrix:
            return dirac_weight_entry(kvecs, sheet, self.field.mass, i, j)
        return self.weight_scalar(kvecs, sheet).astype(complex)

    def trace_norm(self, kvecs: np.ndarray, sheet: int) -> np.ndarray:
        """Trace norm of the weight; 4*omega for Dirac (eigenvalues 2w,2w,0,0)."""
        kvecs = np.asarray(kvecs, dtype=float)
        if self.is_matrix:
            return 4.0 * shell_energy(kvecs, self.field.mass)
        return np.ones(kvecs.shape[0])


@dataclass(frozen=True)
class ThermalTwoPoint:
    """One branch (w2^+ or w2^-) of a two-point function in momentum space.

    Immutable after build; safe to share across concurrent scan workers.
    """

    density: ShellDensity
    flow: FlowSpec
    statistics: Statistics
    branch: Branch
    synthetic: bool = False

    @property
    def field(self) -> FieldSpec:
        return self.density.field

    def flow_pairing(self, kvecs: np.ndarray, sheet: int) -> np.ndarray:
        """u = pair(k, chi) on the shell: s*omega*chi^0 + kvec . chi_spatial."""
        kvecs = np.asarray(kvecs, dtype=float)
        chi = self.flow.chi_array()
        omega = shell_energy(kvecs, self.field.mass)
        return sheet * omega * chi[0] + kvecs @ chi[1:]

    def factor(self, u: np.ndarray, sheet: int) -> np.ndarray:
        if self.statistics is Statistics.VACUUM:
            val = 1.0 if sheet == self.branch.value else 0.0
            return np.full(np.asarray(u).shape, val)
        if self.statistics is Statistics.FERMI:
            return fermi_factor(u, self.flow.beta, self.branch.value)
        if self.branch is Branch.PLUS:
            return bose_factor(u, self.flow.beta)
        return bose_minus_factor(u, self.flow.beta)

    def density_scalar(self, kvecs: np.ndarray, sheet: int) -> np.ndarray:
        u = self.flow_pairing(kvecs, sheet)
        return self.factor(u, sheet) * self.density.weight_scalar(kvecs, sheet)

    def density_matrix(self, kvecs: np.ndarray, sheet: int) -> np.ndarray:
        u = self.flow_pairing(kvecs, sheet)
        w = self.density.weight_matrix(kvecs, sheet)
        return self.factor(u, sheet)[:, None, None] * w

    def trace_norm_density(self, kvecs: np.ndarray, sheet: int) -> np.ndarray:
        """|factor| * trace_norm(weight); the scan integrand's density part."""
        u = self.flow_pairing(kvecs, sheet)
        return np.abs(self.factor(u, sheet)) * self.density.trace_norm(kvecs, sheet)


@dataclass
class DivergenceReport:
    """Truncated-mass diagnostics of an infrared-divergent Bose candidate."""

    eps_grid: np.ndarray
    truncated: np.ndarray
    fit_offset: float | None = None
    fit_slope: float | None = None
    fit_r2: float | None = None
    witness_point: tuple | None = None  # (kvec tuple, sheet)
    witness_value: float | None = None

    def to_dict(self) -> dict:
        return {
            "eps_grid": [float(e) for e in np.asarray(self.eps_grid)],
            "truncated": [float(v) for v in np.asarray(self.truncated)],
            "fit_offset": self.fit_offset,
            "fit_slope": self.fit_slope,
            "fit_r2": self.fit_r2,
            "witness_point": (
                None
                if self.witness_point is None
                else {
                    "kvec": [float(c) for c in self.witness_point[0]],
                    "sheet": int(self.witness_point[1]),
                }
            ),
            "witness_value": self.witness_value,
        }


@dataclass(frozen=True)
class EnvelopeSpec:
    """Gaussian envelope exp(-sigma^2 |kvec - center|^2 / 2) on the shell."""

    sigma: float = 1.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __call__(self, kvecs: np.ndarray) -> np.ndarray:
        d = np.asarray(kvecs, dtype=float) - np.asarray(self.center)
        return np.exp(-0.5 * self.sigma**2 * np.sum(d * d, axis=-1))


def build_two_point(field: FieldSpec, flow: FlowSpec, statistics: Statistics):
    """Build the (Plus, Minus) branch pair, rejecting divergent Bose requests.

    Fermi branches exist for any causal class of the flow.  Bose branches
    exist only for future-directed timelike flows: for spacelike or lightlike
    flows pair(k, chi) reaches 0 on (or asymptotically along) the shell and
    the Bose factor is not integrable there, so an :class:`IRDivergentError`
    is raised instead.
    """
    if statistics is Statistics.BOSE:
        if field.kind is not FieldKind.SCALAR:
            raise ValidationError("Bose statistics require a scalar field")
        causal = flow.causal
        if causal.kind is not CausalKind.TIMELIKE:
            witness = None
            if causal.kind is CausalKind.SPACELIKE:
                witness = bose_negativity_witness(flow, flow.beta)
            report = DivergenceReport(
                eps_grid=np.array([]),
                truncated=np.array([]),
                witness_point=None if witness is None else witness[0],
                witness_value=None if witness is None else witness[1],
            )
            raise IRDivergentError(
                f"Bose factor along a {causal.kind.value} flow is not "
                "integrable on the mass shell",
                report,
                witness,
            )
        if causal.orientation is not Orientation.FUTURE:
            raise OrientationError(
                "Bose flow must be future-directed (past-directed timelike "
                "flow is the negative-temperature orientation)"
            )
        if math.isinf(flow.beta):
            raise ValidationError("Bose statistics need finite beta")
        tag = "scalar_ccr"
    elif field.kind is FieldKind.DIRAC:
        tag = "dirac_car"
    else:
        tag = "scalar_car"

    density = ShellDensity(field, tag)
    synthetic = field.kind is FieldKind.SCALAR and statistics is Statistics.FERMI
    plus = ThermalTwoPoint(density, flow, statistics, Branch.PLUS, synthetic)
    minus = ThermalTwoPoint(density, flow, statistics, Branch.MINUS, synthetic)
    return plus, minus


def _sample_shell(rng: np.random.Generator, n: int, spread: float = 2.0):
    kvecs = rng.normal(scale=spread, size=(n, 3))
    sheets = np.where(rng.random(n) < 0.5, 1, -1)
    return kvecs, sheets


def car_sum_residual(plus: ThermalTwoPoint, minus: ThermalTwoPoint, kvecs, sheets):
    """max over sampled shell points of |density+ + density- - S_hat|.

    Matrix max-norm for Dirac.  Exact up to roundoff since f+ + f- = 1.
    """
    if plus.density is not minus.density:
        raise ValidationError("branches must come from the same build")
    kvecs = np.asarray(kvecs, dtype=float)
    worst = 0.0
    for sheet in (1, -1):
        sel = np.asarray(sheets) == sheet
        if not np.any(sel):
            continue
        kv = kvecs[sel]
        if plus.density.is_matrix:
            total = plus.density_matrix(kv, sheet) + minus.density_matrix(kv, sheet)
            ref = plus.density.weight_matrix(kv, sheet)
            worst = max(worst, float(np.max(np.abs(total - ref))))
        else:
            total = plus.density_scalar(kv, sheet) + minus.density_scalar(kv, sheet)
            ref = plus.density.weight_scalar(kv, sheet)
            worst = max(worst, float(np.max(np.abs(total - ref))))
    return worst


def _log_fermi_plus(x: np.ndarray) -> np.ndarray:
    """log of 1/(1+e^{-x}), stable for any x."""
    return np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))


def detailed_balance_residual(beta: float, u_grid, statistics: Statistics = Statistics.FERMI):
    """max over the grid of |f-(u) - e^{-bu} f+(u)| in overflow-safe form.

    For Bose the identity is b(u) - 1 = e^{-bu} b(u); the right-hand sides
    are evaluated through independent stable code paths (log-space for Fermi,
    the algebraic form 1/(e^{bu}-1) for Bose).
    """
    if not (beta > 0 and math.isfinite(beta)):
        raise ValidationError("beta must be finite and > 0")
    u = np.asarray(u_grid, dtype=float)
    x = beta * u
    if statistics is Statistics.FERMI:
        lhs = fermi_factor(u, beta, -1)
        rhs = np.exp(-x + _log_fermi_plus(x))
        return float(np.max(np.abs(lhs - rhs)))
    if statistics is Statistics.BOSE:
        u = u[u != 0.0]
        x = beta * u
        lhs = bose_minus_factor(u, beta)
        rhs = np.empty_like(u)
        pos = x > 0
        rhs[pos] = np.exp(-x[pos]) * bose_factor(u[pos], beta)
        rhs[~pos] = 1.0 / np.expm1(x[~pos])
        return float(np.max(np.abs(lhs - rhs)))
    raise ValidationError("statistics must be FERMI or BOSE")


def pointwise_psd_report(tp: ThermalTwoPoint, kvecs, sheets):
    """Minimum eigenvalue / trace ratio of the effective density over samples.

    Only meaningful for PSD-by-construction branches (Fermi, vacuum).
    """
    kvecs = np.asarray(kvecs, dtype=float)
    worst = math.inf
    for sheet in (1, -1):
        sel = np.asarray(sheets) == sheet
        if not np.any(sel):
            continue
        kv = kvecs[sel]
        if tp.density.is_matrix:
            mats = tp.density_matrix(kv, sheet)
            eigs = np.linalg.eigvalsh(mats)
            traces = np.einsum("nii->n", mats).real
            ratios = eigs[:, 0] / np.maximum(traces, 1e-300)
            worst = min(worst, float(np.min(ratios)))
        else:
            vals = tp.density_scalar(kv, sheet)
            ratios = np.where(vals == 0.0, 0.0, np.sign(vals))
            worst = min(worst, float(np.min(ratios)))
    return worst


def positivity_gram(tp: ThermalTwoPoint, family, spec=None):
    """Gram matrix G_ij = w2(Gamma F_i, F_j) and its eigenvalue range.

    For a valid state G is positive semidefinite up to quadrature error.
    """
    if not family:
        raise ValidationError("family must be nonempty")
    if len(family) > 64:
        raise ValidationError("family too large (max 64)")
    spec = spec or quad.QuadratureSpec()
    gram, err, nodes = quad.gram_matrix(tp, family, spec)
    eigs = np.linalg.eigvalsh(gram)
    return quad.GramReport(
        matrix=gram,
        eigenvalues=eigs,
        min_eig=float(eigs[0]),
        max_eig=float(eigs[-1]),
        max_entry_error=float(err),
        nodes=nodes,
    )


def flow_invariance_residual(tp: ThermalTwoPoint, f, fp, t_values, spec=None):
    """max over t of |w2(Psi_t F, Psi_t F') - w2(F, F')|, relative.

    Psi_t translates both wavepacket centers by t*chi; invariance is exact in
    momentum space, so the residual measures the quadrature pipeline.
    """
    spec = spec or quad.QuadratureSpec()
    base = quad.smear_two_point(tp, f, fp, spec)
    chi = tp.flow.chi_array()
    worst = 0.0
    for t in t_values:
        ft = quad.translated(f, -t * chi)
        fpt = quad.translated(fp, -t * chi)
        moved = quad.smear_two_point(tp, ft, fpt, spec)
        worst = max(worst, abs(moved.value - base.value))
    scale = max(abs(base.value), 1e-300)
    return worst / scale


# ---------------------------------------------------------------------------
# Bose infrared-divergence diagnostics (spacelike flows).
# ---------------------------------------------------------------------------


def bose_negativity_witness(flow: FlowSpec, beta: float, field: FieldSpec | None = None):
    """A shell point on the positive-frequency sheet with pair(k, chi) < 0,
    together with the (negative) candidate density value there.
    """
    if flow.causal.kind is not CausalKind.SPACELIKE:
        raise ValidationError("negativity witness requires a spacelike flow")
    if not (beta > 0 and math.isfinite(beta)):
        raise ValidationError("beta must be finite and > 0")
    m = field.mass if field is not None else 1.0
    chi = flow.chi_array()
    sp = chi[1:]
    nsp = float(np.linalg.norm(sp))
    direction = sp / nsp
    # walk out along -chi_spatial until the pairing is safely negative
    for t in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0):
        kvec = -t * direction
        u = float(shell_energy(kvec, m) * chi[0] + kvec @ sp)
        if u <= -0.5 or (chi[0] == 0.0 and u < 0.0):
            value = float(bose_factor(u, beta))
            return ((tuple(float(c) for c in kvec), 1), value)
    raise RuntimeError("no witness found; flow is not spacelike enough")


def bose_truncated_mass(
    flow: FlowSpec,
    beta: float,
    envelope: EnvelopeSpec,
    eps: float,
    field: FieldSpec | None = None,
    n_transverse: int = 48,
    n_axis_panels: int = 24,
):
    """Truncated mass I(eps) of the |Bose factor| against a Gaussian envelope.

    I(eps) = sum over sheets of the shell integral of
    |bose_factor(pair(k, chi))| * envelope over {|pair(k, chi)| > eps}.
    Only spatial spacelike flows (chi^0 = 0) are supported; there the pairing
    is the coordinate along chi and the integral splits cleanly.
    """
    if eps <= 0:
        raise ValidationError("eps must be > 0")
    chi = flow.chi_array()
    if flow.causal.kind is not CausalKind.SPACELIKE or chi[0] != 0.0:
        raise ValidationError("truncated mass supports spatial spacelike flows")
    m = field.mass if field is not None else 1.0

    e1, e2 = _transverse_frame(chi[1:])
    axis = chi[1:]

    # transverse Gauss-Legendre grid, cut where the envelope is < 1e-16
    half = 9.0 / envelope.sigma + float(np.linalg.norm(envelope.center)) + 1.0
    tx, tw = quad.gauss_legendre_panel(-half, half, n_transverse)
    t1, t2 = np.meshgrid(tx, tx, indexing="ij")
    w12 = np.outer(tw, tw).ravel()
    perp = t1.ravel()[:, None] * e1 + t2.ravel()[:, None] * e2

    u_hi = half

    def integrand(u_nodes: np.ndarray) -> np.ndarray:
        # both sheets: |b(u)| + |b(-u)| = (2 b(u) - 1) for u > 0, times 2 sheets
        out = np.empty_like(u_nodes)
        for i, u in enumerate(u_nodes):
            kv = u * axis + perp
            om = shell_energy(kv, m)
            env = envelope(kv)
            babs = abs(bose_factor(np.array([u]), beta)[0])
            babs_neg = abs(bose_factor(np.array([-u]), beta)[0])
            dens = (babs + babs_neg) * env / ((2 * math.pi) ** 3 * 2 * om)
            out[i] = 2.0 * float(np.sum(w12 * dens))  # 2 sheets
        return out

    # cut panels geometrically toward eps so the 1/u spike is resolved
    edges = np.geomspace(eps, u_hi, n_axis_panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = quad.gauss_legendre_panel(a, b, 16)
        total += float(np.sum(w * integrand(x)))
    return total


def _transverse_frame(axis: np.ndarray):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    seed = np.zeros(3)
    seed[int(np.argmin(np.abs(axis)))] = 1.0
    e1 = seed - axis * (seed @ axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def laurent_slope_oracle(
    flow: FlowSpec, beta: float, envelope: EnvelopeSpec, field: FieldSpec | None = None, n: int = 96
):
    """Analytic prediction for the log-divergence slope of I(eps).

    Near u = 0 the |Bose factor| behaves like 1/(beta |u|) on each side of
    the pairing-zero surface, so I(eps) ~ a + b ln(1/eps) with
    b = (2/beta) * (shell surface integral of the envelope on {pair = 0},
    both sheets).
    """
    chi = flow.chi_array()
    if flow.causal.kind is not CausalKind.SPACELIKE or chi[0] != 0.0:
        raise ValidationError("oracle supports spatial spacelike flows")
    m = field.mass if field is not None else 1.0
    e1, e2 = _transverse_frame(chi[1:])
    half = 9.0 / envelope.sigma + float(np.linalg.norm(envelope.center)) + 1.0
    tx, tw = quad.gauss_legendre_panel(-half, half, n)
    t1, t2 = np.meshgrid(tx, tx, indexing="ij")
    w12 = np.outer(tw, tw).ravel()
    kv = t1.ravel()[:, None] * e1 + t2.ravel()[:, None] * e2
    om = shell_energy(kv, m)
    surf = float(np.sum(w12 * envelope(kv) / ((2 * math.pi) ** 3 * 2 * om)))
    return (2.0 / beta) * 2.0 * surf  # both sheets


def fermi_truncated_mass(
    flow: FlowSpec,
    beta: float,
    envelope: EnvelopeSpec,
    eps: float,
    field: FieldSpec | None = None,
    n_transverse: int = 48,
    n_axis_panels: int = 24,
):
    """Fermi control for the divergence diagnosis: |fermi_factor| in place of
    the Bose factor.  Converges as eps -> 0 because the factor is bounded.
    """
    if eps <= 0:
        raise ValidationError("eps must be > 0")
    chi = flow.chi_array()
    if flow.causal.kind is not CausalKind.SPACELIKE or chi[0] != 0.0:
        raise ValidationError("truncated mass supports spatial spacelike flows")
    m = field.mass if field is not None else 1.0
    e1, e2 = _transverse_frame(chi[1:])
    axis = chi[1:]
    half = 9.0 / envelope.sigma + float(np.linalg.norm(envelope.center)) + 1.0
    tx, tw = quad.gauss_legendre_panel(-half, half, n_transverse)
    t1, t2 = np.meshgrid(tx, tx, indexing="ij")
    w12 = np.outer(tw, tw).ravel()
    perp = t1.ravel()[:, None] * e1 + t2.ravel()[:, None] * e2

    def integrand(u_nodes):
        out = np.empty_like(u_nodes)
        for i, u in enumerate(u_nodes):
            kv = u * axis + perp
            om = shell_energy(kv, m)
            env = envelope(kv)
            f = fermi_factor(np.array([u, -u]), beta, +1)
            dens = (abs(f[0]) + abs(f[1])) * env / ((2 * math.pi) ** 3 * 2 * om)
            out[i] = 2.0 * float(np.sum(w12 * dens))
        return out

    edges = np.geomspace(eps, half, n_axis_panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = quad.gauss_legendre_panel(a, b, 16)
        total += float(np.sum(w * integrand(x)))
    return total


def fit_log_divergence(eps_grid, values):
    """Least-squares fit I(eps) ~ a + b ln(1/eps); returns (a, b, R^2)."""
    eps = np.asarray(eps_grid, dtype=float)
    vals = np.asarray(values, dtype=float)
    if eps.size < 5 or eps.size != vals.size:
        raise ValidationError("need >= 5 matching grid points")
    if np.any(eps <= 0) or eps.max() / eps.min() < 100.0:
        raise ValidationError("grid must be positive and span >= 2 decades")
    x = np.log(1.0 / eps)
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    resid = vals - design @ coef
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((vals - vals.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(coef[0]), float(coef[1]), r2
