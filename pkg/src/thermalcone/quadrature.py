"""Shell quadrature: smearing, time series along the flow, KMS crossing.

All smeared quantities are absolutely convergent integrals over the two mass
shells of Gaussian wavepacket images times bounded statistical factors times
smooth weights.  The default scheme integrates in spherical momentum
coordinates: Gauss-Legendre in cos(theta), a uniform periodic rule in phi,
and adaptive radial panels (embedded GL16/GL8 error estimate) cut off where
the Gaussian envelope is below 1e-16 of its peak.  A tensor Gauss-Hermite
scheme and a seeded Monte Carlo oracle are available as cross-checks.

Conventions, fixed once and stamped into every report:
  kernel      w2(z) = sum_sheets int rho(k) e^{+i pair(k, z)} dmu
  image       F_hat(k) = int F(x) e^{-i pair(k, x)} d^4x
  transform   g_hat(nu) = dt * sum_n g(t_n) e^{-i nu t_n}
so a flow translation by t multiplies the image by e^{+i t pair(k, chi)} and
the crossing identity reads g_hat_minus(nu) = e^{-beta nu} g_hat_plus(nu).

Panel evaluation is batched; the final reduction runs in a fixed panel order
with compensated summation, so results are bit-stable across runs at equal
settings regardless of worker scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .minkowski import shell_energy

if TYPE_CHECKING:  # pragma: no cover - typing only, avoids an import cycle
    from .fields import ThermalTwoPoint

__all__ = [
    "GaussianWavepacket",
    "QuadratureSpec",
    "SmearResult",
    "GramReport",
    "CrossingReport",
    "QuadratureAccuracyError",
    "InsufficientSignalError",
    "momentum_image",
    "translated",
    "smear_two_point",
    "mc_smear_two_point",
    "gram_matrix",
    "time_series",
    "kms_crossing_check",
    "gauss_legendre_panel",
]

FOURIER_SIGN = +1  # sign of pair(k, z) in the kernel phase
FREQUENCY_TRANSFORM = "dt * sum_n g(t_n) exp(-i nu t_n)"

_TWO_PI_CUBED = (2.0 * math.pi) ** 3


class QuadratureAccuracyError(RuntimeError):
    """Requested accuracy not reached within the panel budget."""

    def __init__(self, achieved: float, target: float):
        super().__init__(f"quadrature reached {achieved:.3e}, target {target:.3e}")
        self.achieved = achieved
        self.target = target


class InsufficientSignalError(RuntimeError):
    """All crossing-check frequencies are below the noise floor."""


@dataclass(frozen=True)
class GaussianWavepacket:
    """Test function with exact momentum image
    amplitude * exp(-sigma^2 |k - carrier|^2 / 2) * exp(-i pair(k, center)),
    the norm in the envelope being Euclidean over all four components.

    ``spinor_slot`` selects the Dirac component (0..3); None for scalars.
    """

    center: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    sigma: float = 1.0
    carrier: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    amplitude: complex = 1.0 + 0.0j
    spinor_slot: int | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.spinor_slot is not None and self.spinor_slot not in range(4):
            raise ValueError("spinor_slot must be in 0..3")


def translated(packet: GaussianWavepacket, dx) -> GaussianWavepacket:
    """Packet translated in position space by dx (image gains e^{-i pair(k, dx)})."""
    dx = np.asarray(dx, dtype=float)
    new_center = tuple(np.asarray(packet.center) + dx)
    return GaussianWavepacket(
        center=new_center,
        sigma=packet.sigma,
        carrier=packet.carrier,
        amplitude=packet.amplitude,
        spinor_slot=packet.spinor_slot,
    )


def momentum_image(packet: GaussianWavepacket, kvecs: np.ndarray, sheet: int, mass: float):
    """Scalar part of the momentum image on one shell sheet; (n,) complex."""
    kvecs = np.asarray(kvecs, dtype=float)
    k0 = sheet * shell_energy(kvecs, mass)
    p = np.asarray(packet.carrier)
    x = np.asarray(packet.center)
    d0 = k0 - p[0]
    dv = kvecs - p[1:]
    quad_form = d0 * d0 + np.sum(dv * dv, axis=-1)
    phase = k0 * x[0] + kvecs @ x[1:]
    return packet.amplitude * np.exp(-0.5 * packet.sigma**2 * quad_form - 1j * phase)


@dataclass(frozen=True)
class QuadratureSpec:
    """Scheme and accuracy settings for shell integrals."""

    scheme: str = "spherical"  # "spherical" | "hermite" | "mc"
    target_rel: float = 1e-9
    n_theta: int = 32
    n_phi: int = 64
    radial_cutoff: float = 9.0  # in units of the combined envelope width
    max_panels: int = 96
    n_hermite: int = 40
    mc_samples: int = 10_000_000
    mc_seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.target_rel < 1.0):
            raise ValueError("target_rel must be in (0, 1)")
        if self.radial_cutoff < 6.0:
            raise ValueError("radial_cutoff must be >= 6")
        if self.scheme not in ("spherical", "hermite", "mc"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class SmearResult:
    value: complex
    error: float
    nodes: int


@dataclass
class GramReport:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    min_eig: float
    max_eig: float
    max_entry_error: float
    nodes: int


@dataclass
class CrossingReport:
    residual: float
    n_checked: int
    peak: float
    floor: float
    one_signed: bool
    is_beta_kms: bool
    dt: float
    n_t: int
    freqs: np.ndarray
    ratio_errors: np.ndarray


@lru_cache(maxsize=64)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre_panel(a: float, b: float, n: int):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = _leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@lru_cache(maxsize=8)
def _angular_grid(n_theta: int, n_phi: int):
    ct, wt = _leggauss(n_theta)
    st = np.sqrt(1.0 - ct * ct)
    phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    wphi = 2.0 * math.pi / n_phi
    nx = np.outer(st, np.cos(phi)).ravel()
    ny = np.outer(st, np.sin(phi)).ravel()
    nz = np.outer(ct, np.ones(n_phi)).ravel()
    nhat = np.column_stack([nx, ny, nz])
    w = np.repeat(wt, n_phi) * wphi
    return nhat, w


def _radial_cutoff(packets: Sequence[GaussianWavepacket], cutoff: float) -> float:
    r = 0.0
    for p in packets:
        r = max(r, float(np.linalg.norm(np.asarray(p.carrier)[1:])) + cutoff / p.sigma)
    return r + 1.0


def _initial_breaks(packets: Sequence[GaussianWavepacket], r_cut: float):
    alpha = sum(p.sigma**2 for p in packets)
    width = 1.0 / math.sqrt(alpha) if alpha > 0 else 1.0
    center = 0.0
    w_total = 0.0
    for p in packets:
        center += p.sigma**2 * float(np.linalg.norm(np.asarray(p.carrier)[1:]))
        w_total += p.sigma**2
    center /= max(w_total, 1e-300)
    pts = {0.0, r_cut}
    for j in (-6, -4, -2, -1, 0, 1, 2, 4, 6):
        pts.add(min(max(center + j * width, 0.0), r_cut))
    breaks = sorted(pts)
    return [(a, b) for a, b in zip(breaks[:-1], breaks[1:]) if b - a > 1e-12]


def _adaptive_radial(profile, panels, d, target_rel, max_panels):
    """Adaptive radial integration of a vector-valued profile.

    ``profile(r_nodes) -> (values (m, d) complex, majorant (m,))``.
    Returns (totals (d,), errors (d,), majorant total, nodes used).
    """
    n_hi, n_lo = 16, 8
    cache: dict[tuple[float, float], tuple[np.ndarray, np.ndarray, float]] = {}
    nodes_used = 0

    def eval_panel(a, b):
        nonlocal nodes_used
        key = (a, b)
        if key in cache:
            return cache[key]
        x_hi, w_hi = gauss_legendre_panel(a, b, n_hi)
        x_lo, w_lo = gauss_legendre_panel(a, b, n_lo)
        vals, maj = profile(np.concatenate([x_hi, x_lo]))
        nodes_used += n_hi + n_lo
        hi = w_hi @ vals[:n_hi]
        lo = w_lo @ vals[n_hi:]
        m_hi = float(w_hi @ maj[:n_hi])
        cache[key] = (hi, lo, m_hi)
        return cache[key]

    work = list(panels)
    while True:
        data = [eval_panel(a, b) for a, b in work]
        totals = np.sum([hi for hi, _, _ in data], axis=0)
        errs = np.sum([np.abs(hi - lo) for hi, lo, _ in data], axis=0)
        maj_total = float(np.sum([m for _, _, m in data]))
        scales = np.maximum(np.abs(totals), 1e-6 * maj_total + 1e-300)
        ratios = errs / scales
        worst_entry = int(np.argmax(ratios))
        if ratios[worst_entry] <= target_rel or len(work) >= max_panels:
            break
        per_panel = np.array([abs(hi[worst_entry] - lo[worst_entry]) for hi, lo, _ in data])
        split = int(np.argmax(per_panel))
        a, b = work.pop(split)
        mid = 0.5 * (a + b)
        work.extend([(a, mid), (mid, b)])
        work.sort()

    work.sort()
    # compensated, order-fixed reduction
    totals = np.empty(d, dtype=complex)
    for e in range(d):
        re = math.fsum(cache[(a, b)][0][e].real for a, b in work)
        im = math.fsum(cache[(a, b)][0][e].imag for a, b in work)
        totals[e] = complex(re, im)
    errs = np.zeros(d)
    maj_total = 0.0
    for a, b in work:
        hi, lo, m = cache[(a, b)]
        errs += np.abs(hi - lo)
        maj_total += m
    return totals, errs, maj_total, nodes_used


def _pair_packets(tp: "ThermalTwoPoint", packets: Sequence[GaussianWavepacket]):
    is_matrix = tp.density.is_matrix
    for p in packets:
        if is_matrix and p.spinor_slot is None:
            raise ValueError("Dirac smearing needs spinor slots on all packets")
        if not is_matrix and p.spinor_slot is not None:
            raise ValueError("scalar smearing takes slotless packets")


def _entry_values(tp, kvecs, sheet, images, slots, pairs):
    """Sesquilinear integrand values for the requested (i, j) pairs."""
    mass = tp.field.mass
    omega = shell_energy(kvecs, mass)
    meas = 1.0 / (_TWO_PI_CUBED * 2.0 * omega)
    out = np.empty((kvecs.shape[0], len(pairs)), dtype=complex)
    if tp.density.is_matrix:
        dens = tp.density_matrix(kvecs, sheet)
        for col, (i, j) in enumerate(pairs):
            out[:, col] = np.conj(images[i]) * dens[:, slots[i], slots[j]] * images[j] * meas
    else:
        dens = tp.density_scalar(kvecs, sheet)
        for col, (i, j) in enumerate(pairs):
            out[:, col] = np.conj(images[i]) * dens * images[j] * meas
    maj = tp.trace_norm_density(kvecs, sheet) * meas
    abs_imgs = sum(np.abs(a) ** 2 for a in images)
    return out, maj * abs_imgs


def _spherical_totals(tp, packets, pairs, spec: QuadratureSpec):
    _pair_packets(tp, packets)
    nhat, w_ang = _angular_grid(spec.n_theta, spec.n_phi)
    r_cut = _radial_cutoff(packets, spec.radial_cutoff)
    panels = _initial_breaks(packets, r_cut)
    mass = tp.field.mass
    slots = [p.spinor_slot for p in packets]
    d = len(pairs)

    def profile(r_nodes: np.ndarray):
        m = r_nodes.shape[0]
        kvecs = (r_nodes[:, None, None] * nhat[None, :, :]).reshape(-1, 3)
        vals = np.zeros((kvecs.shape[0], d), dtype=complex)
        maj = np.zeros(kvecs.shape[0])
        for sheet in (1, -1):
            images = [momentum_image(p, kvecs, sheet, mass) for p in packets]
            v, mj = _entry_values(tp, kvecs, sheet, images, slots, pairs)
            vals += v
            maj += mj
        vals = vals.reshape(m, -1, d)
        maj = maj.reshape(m, -1)
        r2 = r_nodes * r_nodes
        out = np.einsum("a,mad->md", w_ang, vals) * r2[:, None]
        out_maj = (maj @ w_ang) * r2
        return out, out_maj

    return _adaptive_radial(profile, panels, d, spec.target_rel, spec.max_panels)


def smear_two_point(tp: "ThermalTwoPoint", f: GaussianWavepacket, fp: GaussianWavepacket, spec: QuadratureSpec | None = None) -> SmearResult:
    """w2(Gamma F, F') = sum_sheets int conj(F_hat) . density . F'_hat dmu.

    The first argument enters conjugated, so for a PSD density this is a
    positive sesquilinear form.  Raises :class:`QuadratureAccuracyError` if
    the estimated error exceeds the requested relative accuracy.
    """
    spec = spec or QuadratureSpec()
    if spec.scheme == "hermite":
        return _hermite_smear(tp, f, fp, spec)
    if spec.scheme == "mc":
        value, err = mc_smear_two_point(tp, f, fp, spec.mc_samples, spec.mc_seed)
        return SmearResult(value, err, spec.mc_samples)
    totals, errs, maj, nodes = _spherical_totals(tp, [f, fp], [(0, 1)], spec)
    scale = max(abs(totals[0]), 1e-6 * maj + 1e-300)
    if errs[0] > spec.target_rel * scale:
        raise QuadratureAccuracyError(errs[0] / scale, spec.target_rel)
    return SmearResult(complex(totals[0]), float(errs[0]), 2 * nodes * spec.n_theta * spec.n_phi)


def gram_matrix(tp: "ThermalTwoPoint", family: Sequence[GaussianWavepacket], spec: QuadratureSpec | None = None):
    """Hermitian Gram matrix G_ij = w2(Gamma F_i, F_j) over a shared grid."""
    spec = spec or QuadratureSpec()
    n = len(family)
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    totals, errs, maj, nodes = _spherical_totals(tp, family, pairs, spec)
    gram = np.zeros((n, n), dtype=complex)
    worst = 0.0
    for (i, j), val, err in zip(pairs, totals, errs):
        gram[i, j] = val
        gram[j, i] = np.conj(val)
        worst = max(worst, float(err))
    gram = 0.5 * (gram + gram.conj().T)
    scale = max(float(np.max(np.abs(gram))), 1e-6 * maj + 1e-300)
    if worst > spec.target_rel * scale:
        raise QuadratureAccuracyError(worst / scale, spec.target_rel)
    return gram, worst, nodes


def _hermite_smear(tp, f, fp, spec: QuadratureSpec) -> SmearResult:
    """Tensor Gauss-Hermite cross-check against the combined spatial envelope."""
    _pair_packets(tp, [f, fp])
    alpha = f.sigma**2 + fp.sigma**2
    center = (
        f.sigma**2 * np.asarray(f.carrier)[1:] + fp.sigma**2 * np.asarray(fp.carrier)[1:]
    ) / alpha
    slots = [f.spinor_slot, fp.spinor_slot]

    def run(n):
        x, w = np.polynomial.hermite.hermgauss(n)
        scale = math.sqrt(2.0 / alpha)
        xx, yy, zz = np.meshgrid(x, x, x, indexing="ij")
        kvecs = center[None, :] + scale * np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
        logw = (
            np.log(np.outer(np.outer(w, w).ravel(), w).ravel())
            + (xx.ravel() ** 2 + yy.ravel() ** 2 + zz.ravel() ** 2)
        )
        weight = np.exp(logw) * scale**3
        total = 0.0 + 0.0j
        for sheet in (1, -1):
            images = [momentum_image(p, kvecs, sheet, tp.field.mass) for p in [f, fp]]
            vals, _ = _entry_values(tp, kvecs, sheet, images, slots, [(0, 1)])
            total += np.sum(weight * vals[:, 0])
        return total

    hi = run(spec.n_hermite)
    lo = run(max(spec.n_hermite - 8, 8))
    err = abs(hi - lo)
    return SmearResult(complex(hi), float(err), 2 * spec.n_hermite**3)


def mc_smear_two_point(tp: "ThermalTwoPoint", f: GaussianWavepacket, fp: GaussianWavepacket, n_samples: int, seed: int):
    """Seeded Monte Carlo oracle for ``smear_two_point``.

    Importance-samples the combined spatial envelope of the two packets and
    averages integrand/proposal; returns (value, combined standard error).
    """
    _pair_packets(tp, [f, fp])
    alpha = f.sigma**2 + fp.sigma**2
    center = (
        f.sigma**2 * np.asarray(f.carrier)[1:] + fp.sigma**2 * np.asarray(fp.carrier)[1:]
    ) / alpha
    sigma_prop = 1.0 / math.sqrt(alpha)
    rng = np.random.Generator(np.random.PCG64(seed))
    slots = [f.spinor_slot, fp.spinor_slot]
    mass = tp.field.mass

    chunk = 1_000_000
    total = np.zeros(2)
    total_sq = np.zeros(2)
    n_done = 0
    log_norm = 1.5 * math.log(2.0 * math.pi * sigma_prop**2)
    while n_done < n_samples:
        m = min(chunk, n_samples - n_done)
        kvecs = center[None, :] + sigma_prop * rng.standard_normal((m, 3))
        d = kvecs - center[None, :]
        log_q = -0.5 * np.sum(d * d, axis=-1) / sigma_prop**2 - log_norm
        est = np.zeros(m, dtype=complex)
        for sheet in (1, -1):
            images = [momentum_image(p, kvecs, sheet, mass) for p in [f, fp]]
            vals, _ = _entry_values(tp, kvecs, sheet, images, slots, [(0, 1)])
            est += vals[:, 0]
        est *= np.exp(-log_q)
        total += np.array([est.real.sum(), est.imag.sum()])
        total_sq += np.array([np.sum(est.real**2), np.sum(est.imag**2)])
        n_done += m
    mean = total / n_samples
    var = total_sq / n_samples - mean**2
    stderr = np.sqrt(np.maximum(var, 0.0) / n_samples)
    return complex(mean[0], mean[1]), float(np.hypot(stderr[0], stderr[1]))


# ---------------------------------------------------------------------------
# Flow time series and the frequency-domain KMS crossing check.
# ---------------------------------------------------------------------------


def _u_panels(lo: float, hi: float, t_abs_max: float, extra: Sequence[float] = ()):
    """Panels over [lo, hi] sized so GL16 resolves e^{i u t} out to t_abs_max."""
    width = 10.0 / max(t_abs_max, 1.0)
    pts = {lo, hi}
    for x in extra:
        if lo < x < hi:
            pts.add(float(x))
    breaks = sorted(pts)
    panels = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, int(math.ceil((b - a) / width)))
        edges = np.linspace(a, b, n + 1)
        panels.extend(zip(edges[:-1], edges[1:]))
    return panels


def _transverse_panels(packets, axis_drop: np.ndarray, frame: tuple[np.ndarray, np.ndarray], cutoff: float):
    """2D tensor GL grid covering the combined spatial envelope transversely."""
    e1, e2 = frame
    alpha = sum(p.sigma**2 for p in packets)
    width = 1.0 / math.sqrt(alpha)
    c = np.zeros(3)
    for p in packets:
        c += p.sigma**2 * np.asarray(p.carrier)[1:]
    c /= alpha
    half = cutoff * math.sqrt(2.0) * width + 1.0

    def axis_nodes(center):
        pts = sorted({center - half, center - 2 * width, center, center + 2 * width, center + half})
        xs, ws = [], []
        for a, b in zip(pts[:-1], pts[1:]):
            x, w = gauss_legendre_panel(a, b, 14)
            xs.append(x)
            ws.append(w)
        return np.concatenate(xs), np.concatenate(ws)

    x1, w1 = axis_nodes(float(c @ e1))
    x2, w2 = axis_nodes(float(c @ e2))
    xx, yy = np.meshgrid(x1, x2, indexing="ij")
    ww = np.outer(w1, w2).ravel()
    return xx.ravel(), yy.ravel(), ww


def _series_entry(tps, f, fp, kvecs, sheet):
    """Integrand values (minus the statistical factor) and the pairings."""
    tp0 = tps[0]
    mass = tp0.field.mass
    omega = shell_energy(kvecs, mass)
    meas = 1.0 / (_TWO_PI_CUBED * 2.0 * omega)
    img_f = momentum_image(f, kvecs, sheet, mass)
    img_fp = momentum_image(fp, kvecs, sheet, mass)
    w_entry = tp0.density.weight_entry(kvecs, sheet, f.spinor_slot, fp.spinor_slot)
    base = np.conj(img_f) * w_entry * img_fp * meas
    u = tp0.flow_pairing(kvecs, sheet)
    return base, u


def _series_u_coefficients(tps, f, fp, t_abs_max, spec: QuadratureSpec):
    """Shared shell sweep in flow-adapted coordinates.

    Integrates in coordinates where the flow pairing u is the 1D quadrature
    variable (dense Gauss-Legendre panels resolving e^{i u t} out to
    t_abs_max) and the level sets {u = const} carry smooth transverse
    integrals.  Returns ([c_branch arrays], u_nodes, u_bound).
    """
    tp0 = tps[0]
    _pair_packets(tp0, [f, fp])
    chi = tp0.flow.chi_array()
    a_sp = float(np.linalg.norm(chi[1:]))
    mass = tp0.field.mass
    r_cut = _radial_cutoff([f, fp], spec.radial_cutoff)
    u_bound = abs(chi[0]) * math.sqrt(r_cut**2 + mass**2) + a_sp * r_cut
    if a_sp < 1e-12:
        coeffs, u_nodes = _series_timelike(tps, f, fp, t_abs_max, spec, r_cut)
    elif abs(chi[0]) <= a_sp + 1e-12:
        coeffs, u_nodes = _series_levelset(tps, f, fp, t_abs_max, spec, r_cut, u_bound)
    else:
        raise ValueError(
            "time series support pure-timelike, spacelike and lightlike flows; "
            "tilted timelike flows have no u-adapted chart here"
        )
    return coeffs, u_nodes, u_bound


def _series_timelike(tps, f, fp, t_abs_max, spec, r_cut):
    """u = s*chi0*omega: u is a radial coordinate, angles are phase-free."""
    tp0 = tps[0]
    mass = tp0.field.mass
    chi0 = tp0.flow.chi_array()[0]
    nhat, w_ang = _angular_grid(max(12, spec.n_theta // 2), max(24, spec.n_phi // 2))
    omega_cut = math.sqrt(r_cut**2 + mass**2)
    edge = [mass * (1.0 + x) for x in (1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1e-1)]
    coeff = [[] for _ in tps]
    u_chunks = []
    for sheet in (1, -1):
        sgn = sheet * (1.0 if chi0 > 0 else -1.0)
        lo, hi = (mass, omega_cut) if sgn > 0 else (-omega_cut, -mass)
        extra = edge if sgn > 0 else [-x for x in edge]
        for pa, pb in _u_panels(lo, hi, t_abs_max, extra):
            u, w_u = gauss_legendre_panel(pa, pb, 16)
            om = np.abs(u)
            r = np.sqrt(np.maximum(om * om - mass * mass, 0.0))
            kvecs = (r[:, None, None] * nhat[None, :, :]).reshape(-1, 3)
            base, _ = _series_entry(tps, f, fp, kvecs, sheet)
            base = base.reshape(r.shape[0], -1)
            prof = (base @ w_ang) * (om * r) * w_u
            u_chunks.append(u)
            for bi, tp in enumerate(tps):
                coeff[bi].append(prof * tp.factor(u, sheet))
    u_all = np.concatenate(u_chunks)
    return [np.concatenate(c) for c in coeff], u_all


def _series_levelset(tps, f, fp, t_abs_max, spec, r_cut, u_bound):
    """Spacelike/lightlike flows: solve the level set u = chi0*s*omega + a*z.

    z runs along the spatial flow axis; the root is unique because
    |chi0| <= |chi_spatial| makes u strictly monotone in z.
    """
    tp0 = tps[0]
    mass = tp0.field.mass
    chi = tp0.flow.chi_array()
    a_sp = float(np.linalg.norm(chi[1:]))
    zhat = chi[1:] / a_sp
    seed = np.zeros(3)
    seed[int(np.argmin(np.abs(zhat)))] = 1.0
    e1 = seed - zhat * (seed @ zhat)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(zhat, e1)
    xs, ys, w_perp = _transverse_panels([f, fp], zhat, (e1, e2), spec.radial_cutoff)
    rho2 = xs * xs + ys * ys
    z_box = r_cut * 1.5
    perp_lab = xs[:, None] * e1[None, :] + ys[:, None] * e2[None, :]

    coeff = [[] for _ in tps]
    u_chunks = []
    lo, hi = -u_bound * 1.02 - 0.25, u_bound * 1.02 + 0.25
    n_perp = rho2.shape[0]
    for pa, pb in _u_panels(lo, hi, t_abs_max):
        u, w_u = gauss_legendre_panel(pa, pb, 16)
        n_u = u.shape[0]
        u_chunks.append(u)
        profs = [np.zeros(n_u, dtype=complex) for _ in tps]
        for sheet in (1, -1):
            z, du_dz, ok = _solve_level(u, sheet, chi[0], a_sp, rho2, mass, z_box)
            flat_ok = ok.ravel()
            if np.any(flat_ok):
                kvecs = (
                    np.broadcast_to(perp_lab[None, :, :], (n_u, n_perp, 3)).reshape(-1, 3)[flat_ok]
                    + z.ravel()[flat_ok, None] * zhat[None, :]
                )
                base, _ = _series_entry(tps, f, fp, kvecs, sheet)
                jac = (w_perp[None, :] / du_dz).ravel()[flat_ok]
                u_of_node = np.broadcast_to(u[:, None], (n_u, n_perp)).ravel()[flat_ok]
                row = np.broadcast_to(np.arange(n_u)[:, None], (n_u, n_perp)).ravel()[flat_ok]
                for bi, tp in enumerate(tps):
                    vals = base * jac * tp.factor(u_of_node, sheet)
                    np.add.at(profs[bi], row, vals)
        for bi in range(len(tps)):
            coeff[bi].append(profs[bi] * w_u)
    u_all = np.concatenate(u_chunks)
    return [np.concatenate(c) for c in coeff], u_all


def _solve_level(u_vals, sheet, chi0, a_sp, rho2, mass, z_box):
    """Root of chi0*s*omega + a*z = u in z, vectorized over
    (u_vals x transverse nodes); unique when |chi0| <= a.  A few bisection
    steps bracket the root, Newton polishes it to machine precision (the
    map is smooth and strictly monotone with derivative >= a - |chi0|)."""
    m2 = (rho2 + mass * mass)[None, :]
    u = np.asarray(u_vals)[:, None]
    sc = sheet * chi0

    def g(z):
        return sc * np.sqrt(z * z + m2) + a_sp * z - u

    shape = (u.shape[0], rho2.shape[0])
    lo = np.full(shape, -z_box)
    hi = np.full(shape, z_box)
    ok = (g(lo) <= 0.0) & (g(hi) >= 0.0)
    for _ in range(18):
        mid = 0.5 * (lo + hi)
        take = g(mid) <= 0.0
        lo = np.where(take, mid, lo)
        hi = np.where(take, hi, mid)
    z = 0.5 * (lo + hi)
    for _ in range(4):
        om = np.sqrt(z * z + m2)
        step = (sc * om + a_sp * z - u) / np.maximum(sc * z / om + a_sp, 1e-300)
        z = np.clip(z - step, lo, hi)
    du_dz = sc * z / np.sqrt(z * z + m2) + a_sp
    return z, np.maximum(du_dz, 1e-300), ok


def _phase_series(coeffs, u_nodes, t_grid):
    """g_b(t_n) = sum_q c_bq e^{i u_q t_n} for each branch, chunked."""
    out = [np.zeros(t_grid.shape[0], dtype=complex) for _ in coeffs]
    for start in range(0, u_nodes.shape[0], 4096):
        sl = slice(start, start + 4096)
        phases = np.exp(1j * np.outer(u_nodes[sl], t_grid))
        for bi, c in enumerate(coeffs):
            out[bi] += c[sl] @ phases
    return out


def time_series(tp: "ThermalTwoPoint", f: GaussianWavepacket, fp: GaussianWavepacket, t_grid, spec: QuadratureSpec | None = None):
    """g(t) = w2(Gamma F, Psi_t F') on a uniform t grid (power of two >= 256).

    Implemented as one shared shell sweep; the flow translation is the extra
    phase e^{+i t pair(k, chi)} applied to all t simultaneously.
    """
    spec = spec or QuadratureSpec()
    t_grid = np.asarray(t_grid, dtype=float)
    n = t_grid.shape[0]
    if n < 256 or (n & (n - 1)) != 0:
        raise ValueError("t grid length must be a power of two >= 256")
    dt_all = np.diff(t_grid)
    if not np.allclose(dt_all, dt_all[0], rtol=1e-12, atol=1e-12):
        raise ValueError("t grid must be uniform")
    coeffs, u, _ = _series_u_coefficients([tp], f, fp, float(np.max(np.abs(t_grid))), spec)
    return _phase_series(coeffs, u, t_grid)[0]


def kms_crossing_check(
    plus: "ThermalTwoPoint",
    minus: "ThermalTwoPoint",
    f: GaussianWavepacket,
    fp: GaussianWavepacket,
    beta: float,
    spec: QuadratureSpec | None = None,
    n_t: int = 1024,
    floor_ratio: float = 1e-6,
    t_span: float | None = None,
) -> CrossingReport:
    """Frequency-domain KMS boundary check.

    Computes the branch time series g+(t), g-(t) in one shared shell sweep,
    discrete-Fourier-transforms both, and verifies
    g_hat_minus(nu) = e^{-beta nu} g_hat_plus(nu) at every frequency where
    max(|g_hat_plus|, |g_hat_minus|) exceeds ``floor_ratio`` times the peak.
    """
    spec = spec or QuadratureSpec()
    if n_t < 256 or (n_t & (n_t - 1)) != 0:
        raise ValueError("n_t must be a power of two >= 256")

    # Nyquist from a safe bound on |pair(k, chi)| over the envelope support
    chi = plus.flow.chi_array()
    r_cut = _radial_cutoff([f, fp], spec.radial_cutoff)
    u_bound = (
        abs(chi[0]) * math.sqrt(r_cut**2 + plus.field.mass**2)
        + float(np.linalg.norm(chi[1:])) * r_cut
    )
    dt = math.pi / (u_bound * 1.0625 + 0.5)
    if t_span is not None:
        dt = min(dt, t_span / n_t)
    t0 = -0.5 * n_t * dt
    t_grid = t0 + dt * np.arange(n_t)

    coeffs, u, _ = _series_u_coefficients([plus, minus], f, fp, float(-t0), spec)
    g_plus, g_minus = _phase_series(coeffs, u, t_grid)

    # Gaussian apodization: kernels of slowly decaying series (shell-edge
    # t^{-3/2} tails) would otherwise leak across the whole spectrum.  A
    # Gaussian window commutes exactly with the detailed-balance weight:
    #   G_minus(nu) = e^{beta^2/(2 tau^2)} e^{-beta nu} G_plus(nu - beta/tau^2)
    # and the shifted transform is the DFT of the e^{i s t}-modulated samples.
    tau = 0.0625 * n_t * dt  # window ends at e^{-32}: no truncation leakage
    window = np.exp(-0.5 * (t_grid / tau) ** 2)
    shift = beta / tau**2
    amp = math.exp(0.5 * beta**2 / tau**2)

    freqs = 2.0 * math.pi * np.fft.fftfreq(n_t, d=dt)
    phase = dt * np.exp(-1j * freqs * t0)
    gh_minus = phase * np.fft.fft(window * g_minus)
    gh_plus = phase * np.fft.fft(window * g_plus)
    gh_plus_tilt = phase * np.fft.fft(window * g_plus * np.exp(1j * shift * t_grid))

    with np.errstate(over="ignore"):
        expected = amp * np.exp(-beta * freqs) * gh_plus_tilt
    mag = np.maximum(np.abs(gh_minus), np.abs(expected))
    peak = float(np.max(mag))
    floor = floor_ratio * peak
    checked = mag > floor
    if not np.any(checked):
        raise InsufficientSignalError("no frequencies above the noise floor")

    ratio_err = np.abs(gh_minus[checked] - expected[checked]) / mag[checked]
    residual = float(np.max(ratio_err))

    plus_band = np.abs(gh_plus) > floor_ratio * float(np.max(np.abs(gh_plus)))
    signs = np.sign(freqs[plus_band])
    one_signed = bool(np.all(signs >= 0) or np.all(signs <= 0))
    return CrossingReport(
        residual=residual,
        n_checked=int(np.sum(checked)),
        peak=peak,
        floor=floor,
        one_signed=one_signed,
        is_beta_kms=residual <= 1e-3,
        dt=dt,
        n_t=n_t,
        freqs=freqs[checked],
        ratio_errors=ratio_err,
    )
