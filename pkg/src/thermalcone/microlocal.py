"""Wave-front probing of two-point kernels by windowed momentum decay.

A direction probe measures h(lambda) = the shell integral of the trace norm
of the density against a Gaussian window centered at lambda * khat in
covector space; h is the magnitude of the localized Fourier transform of the
difference-variable kernel in that direction.  Directions are classified by
competition between decay models fitted to ln h on the tail of the lambda
grid: Gaussian and exponential decay count as regular (rapid decay), a
polynomial-decay win marks the direction singular.

The probe quadrature runs in a local frame per direction: adaptive
Gauss-Legendre panels along the spatial ray (centered on the window maxima
found by a coarse scan) times a tensor transverse rule; the window confines
everything to a tube of radius ~1/sigma_w around the probe point.

The slot convention maps probe directions to second-slot covectors of the
two-point distribution.  It is fixed once, by requiring that the vacuum's
singular cone maps exactly onto the past-directed null covectors (covector
orientation via the metrically raised vector), and is stamped into every
report.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .minkowski import CausalClass, Orientation, classify_causal, raise_covector, shell_energy
from .quadrature import gauss_legendre_panel

__all__ = [
    "Classification",
    "DecayModel",
    "DirectionSample",
    "DecayProfile",
    "FitResult",
    "SlotConvention",
    "DirectionResult",
    "ConeScanReport",
    "Verdict",
    "AdmissibilityResult",
    "ContainmentResult",
    "ConventionError",
    "InconclusiveScanError",
    "direction_grid",
    "probe_direction",
    "classify_decay",
    "scan_cone",
    "fix_slot_convention",
    "admissibility_verdict",
    "cone_containment",
    "suppression_rate_table",
]


class ConventionError(RuntimeError):
    """The vacuum anchor scan does not determine a slot convention."""


class InconclusiveScanError(RuntimeError):
    """Too many inconclusive directions; verdict withheld."""


class DecayModel(enum.Enum):
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"
    POLYNOMIAL = "polynomial"


class Classification(enum.Enum):
    REGULAR = "regular"
    SINGULAR = "singular"
    INCONCLUSIVE = "inconclusive"


class Verdict(enum.Enum):
    ADMISSIBLE = "admissible"
    NOT_ADMISSIBLE = "not_admissible"


@dataclass(frozen=True)
class DirectionSample:
    """Unit (Euclidean) covector direction with its causal bookkeeping."""

    khat: tuple[float, float, float, float]
    is_null: bool
    causal: CausalClass

    def khat_array(self) -> np.ndarray:
        return np.array(self.khat)


@dataclass
class DecayProfile:
    lambdas: np.ndarray
    samples: np.ndarray
    sigma_w: float


@dataclass
class FitResult:
    model: DecayModel | None
    classification: Classification
    rate: float  # exponential rate c, or 0
    order: float  # polynomial order p, or 0
    gauss_rate: float
    residuals: dict
    margin: float
    rule: str  # "competition", "non-decaying", "all-zero"


@dataclass(frozen=True)
class SlotConvention:
    """Sign mapping probe directions to second-slot covectors; anchored."""

    sign: int
    source: str

    def slot_image(self, khat: np.ndarray) -> np.ndarray:
        return self.sign * np.asarray(khat)


@dataclass
class DirectionResult:
    sample: DirectionSample
    pairing: float
    profile: DecayProfile
    fit: FitResult
    error: str | None = None


@dataclass
class ConeScanReport:
    scenario: str
    flow_chi: tuple
    sigma_w: float
    lambdas: np.ndarray
    results: list
    convention: SlotConvention | None = None

    def null_results(self):
        return [r for r in self.results if r.sample.is_null]

    def singular_cone(self):
        return [
            r
            for r in self.results
            if r.sample.is_null and r.fit.classification is Classification.SINGULAR
        ]


@dataclass
class AdmissibilityResult:
    verdict: Verdict
    witnesses: list
    n_checked: int
    n_inconclusive: int


@dataclass
class ContainmentResult:
    contained: bool
    margin: float
    n_singular: int


# ---------------------------------------------------------------------------
# Direction grids
# ---------------------------------------------------------------------------


def _fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors (golden-angle spiral)."""
    i = np.arange(n)
    phi = i * (math.pi * (3.0 - math.sqrt(5.0)))
    z = 1.0 - (2.0 * i + 1.0) / n
    rho = np.sqrt(1.0 - z * z)
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def direction_grid(n_null: int = 144, n_control: int = 48):
    """Null-cone covering plus off-cone controls, all Euclidean-normalized.

    Null directions: n_null/2 spatial directions x both time orientations at
    45 degrees (k0 = +-1/sqrt2).  Controls: timelike-raised (20 deg off the
    time axis) and spacelike-raised (70 deg) tilts, both orientations.
    """
    if n_null % 2 != 0 or n_control % 4 != 0:
        raise ValueError("n_null must be even, n_control divisible by 4")
    dirs: list[DirectionSample] = []
    inv = 1.0 / math.sqrt(2.0)
    for nhat in _fibonacci_sphere(n_null // 2):
        for s0 in (1.0, -1.0):
            k = (s0 * inv, float(inv * nhat[0]), float(inv * nhat[1]), float(inv * nhat[2]))
            dirs.append(DirectionSample(k, True, classify_causal(raise_covector(k))))
    n_each = n_control // 4
    for angle in (math.radians(20.0), math.radians(70.0)):
        c, s = math.cos(angle), math.sin(angle)
        for nhat in _fibonacci_sphere(n_each):
            for s0 in (1.0, -1.0):
                k = (s0 * c, float(s * nhat[0]), float(s * nhat[1]), float(s * nhat[2]))
                dirs.append(DirectionSample(k, False, classify_causal(raise_covector(k))))
    return dirs


# ---------------------------------------------------------------------------
# Direction probes
# ---------------------------------------------------------------------------


def _perp_frame(nhat: np.ndarray):
    seed = np.zeros(3)
    seed[int(np.argmin(np.abs(nhat)))] = 1.0
    e1 = seed - nhat * (seed @ nhat)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(nhat, e1)


def _window_minima(lam, k0hat, a_sp, sheet, mass, sigma_w, r_hi):
    """Radial centers where the window exponent is locally minimal."""
    r = np.linspace(-r_hi, r_hi, 768)
    om = np.sqrt(r * r + mass * mass)
    fexp = (lam * k0hat - sheet * om) ** 2 + (lam * a_sp - r) ** 2
    minima = [int(np.argmin(fexp))]
    interior = np.where(
        (fexp[1:-1] < fexp[:-2]) & (fexp[1:-1] <= fexp[2:])
    )[0] + 1
    cut = fexp[minima[0]] + 100.0 / sigma_w**2
    for i in interior:
        if fexp[i] <= cut:
            minima.append(int(i))
    return sorted({float(r[i]) for i in minima}), float(fexp[minima[0]])


def probe_direction(tp, sigma_w: float, sample: DirectionSample, lambdas) -> DecayProfile:
    """h(lambda): trace-norm density integrated against the Gaussian window
    exp(-sigma_w^2 |lambda khat - k|^2 / 2) over both shell sheets.
    """
    if sigma_w <= 0:
        raise ValueError("sigma_w must be > 0")
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or np.any(np.diff(lambdas) <= 0):
        raise ValueError("lambda grid must be increasing")
    khat = sample.khat_array()
    k0hat = khat[0]
    sp = khat[1:]
    a_sp = float(np.linalg.norm(sp))
    nhat = sp / a_sp if a_sp > 1e-12 else np.array([0.0, 0.0, 1.0])
    e1, e2 = _perp_frame(nhat)
    mass = tp.field.mass

    # transverse tensor rule; the window confines |xi| <~ 1/sigma_w
    l_perp = 9.0 / sigma_w
    tx, tw = gauss_legendre_panel(-l_perp, l_perp, 20)
    xx, yy = np.meshgrid(tx, tx, indexing="ij")
    w_perp = np.outer(tw, tw).ravel()
    perp = xx.ravel()[:, None] * e1 + yy.ravel()[:, None] * e2
    perp2 = xx.ravel() ** 2 + yy.ravel() ** 2

    window_const = (2.0 * math.pi * sigma_w**2) ** 2
    l_rad = 16.0 / sigma_w
    chi = tp.flow.chi_array()
    chi_axis = float(nhat @ chi[1:])
    chi_perp = perp @ chi[1:]
    m2 = mass * mass
    is_matrix = tp.density.is_matrix
    out = np.empty(lambdas.shape[0])
    for il, lam in enumerate(lambdas):
        total = 0.0
        r_hi = 1.4 * lam * max(abs(k0hat), a_sp) + l_rad + 2.0
        for sheet in (1, -1):
            centers, f_min = _window_minima(lam, k0hat, a_sp, sheet, mass, sigma_w, r_hi)
            if 0.5 * sigma_w**2 * f_min > 120.0:
                continue  # window never reaches this sheet
            intervals = _merge_intervals([(c - l_rad, c + l_rad) for c in centers])

            def integrand(r_nodes):
                om = np.sqrt(r_nodes[:, None] ** 2 + perp2[None, :] + m2)
                u = sheet * om * chi[0] + r_nodes[:, None] * chi_axis + chi_perp[None, :]
                fac = np.abs(tp.factor(u, sheet))
                expo = (
                    (lam * k0hat - sheet * om) ** 2
                    + (lam * a_sp - r_nodes)[:, None] ** 2
                    + perp2[None, :]
                )
                # trace norm over the measure: 4w/(2w) = 2 for Dirac, 1/(2w) scalar
                dens = 2.0 * fac if is_matrix else fac / (2.0 * om)
                return (dens * np.exp(-0.5 * sigma_w**2 * expo)) @ w_perp

            for a, b in intervals:
                total += _adaptive_1d(integrand, a, b, rel_tol=3e-7, max_panels=48)
        out[il] = total * window_const / (2.0 * math.pi) ** 3
    return DecayProfile(lambdas=lambdas, samples=out, sigma_w=sigma_w)


def _merge_intervals(intervals):
    intervals = sorted(intervals)
    merged = [list(intervals[0])]
    for a, b in intervals[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [tuple(iv) for iv in merged]


def _adaptive_1d(fn, a, b, rel_tol=1e-7, max_panels=48, n_init=6):
    """Adaptive GL16/GL8 panels for a positive scalar integrand."""
    edges = np.linspace(a, b, n_init + 1)
    panels = {}

    def eval_panel(lo, hi):
        if (lo, hi) not in panels:
            x16, w16 = gauss_legendre_panel(lo, hi, 16)
            x8, w8 = gauss_legendre_panel(lo, hi, 8)
            vals = fn(np.concatenate([x16, x8]))
            panels[(lo, hi)] = (float(w16 @ vals[:16]), float(w8 @ vals[16:]))
        return panels[(lo, hi)]

    work = list(zip(edges[:-1], edges[1:]))
    while True:
        data = [eval_panel(lo, hi) for lo, hi in work]
        total = sum(hi for hi, _ in data)
        err = sum(abs(hi - lo) for hi, lo in data)
        if err <= rel_tol * max(abs(total), 1e-300) or len(work) >= max_panels:
            break
        split = max(range(len(work)), key=lambda i: abs(data[i][0] - data[i][1]))
        lo, hi = work.pop(split)
        mid = 0.5 * (lo + hi)
        work.extend([(lo, mid), (mid, hi)])
        work.sort()
    return math.fsum(eval_panel(lo, hi)[0] for lo, hi in sorted(work))


# ---------------------------------------------------------------------------
# Decay-model competition
# ---------------------------------------------------------------------------

MARGIN_FACTOR = 2.0
MIN_DECAY_FACTOR = 4.0


def classify_decay(profile: DecayProfile) -> FitResult:
    """Fit ln h on the tail half of the grid against the three decay models.

    The winner is the lowest-residual model with a >= 2x margin over the
    runner-up; PolynomialDecay wins outright when the profile does not decay
    by at least MIN_DECAY_FACTOR across the tail (non-rapid decay), since a
    near-constant profile fits every model and is certainly not Schwartz.
    Gaussian/exponential fits with negative rates (growth) are excluded.
    """
    lam = np.asarray(profile.lambdas, dtype=float)
    h = np.asarray(profile.samples, dtype=float)
    if lam.size < 8 or lam[-1] / lam[0] < 10.0:
        raise ValueError("need >= 8 lambda points spanning >= 1 decade")
    tail = lam >= math.sqrt(lam[0] * lam[-1])
    lam_t, h_t = lam[tail], h[tail]
    pos = h_t > 0.0
    if np.sum(pos) < 4:
        return FitResult(
            model=DecayModel.GAUSSIAN,
            classification=Classification.REGULAR,
            rate=math.inf,
            order=0.0,
            gauss_rate=math.inf,
            residuals={},
            margin=math.inf,
            rule="all-zero",
        )
    lam_t, h_t = lam_t[pos], h_t[pos]
    y = np.log(h_t)

    def linfit(x):
        design = np.column_stack([np.ones_like(x), x])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        return coef, float(np.sqrt(np.mean(resid**2)))

    (a_g, b_g), r_gauss = linfit(lam_t**2)
    (a_e, b_e), r_exp = linfit(lam_t)
    (a_p, b_p), r_poly = linfit(np.log(lam_t))
    rate = max(-b_e, 0.0)
    gauss_rate = max(-b_g, 0.0)
    order = -b_p
    residuals = {"gaussian": r_gauss, "exponential": r_exp, "polynomial": r_poly}

    head = float(np.max(h_t[:2]))
    tail_end = float(np.max(h_t[-2:]))
    if head / max(tail_end, 1e-300) < MIN_DECAY_FACTOR:
        return FitResult(
            model=DecayModel.POLYNOMIAL,
            classification=Classification.SINGULAR,
            rate=0.0,
            order=order,
            gauss_rate=0.0,
            residuals=residuals,
            margin=math.inf,
            rule="non-decaying",
        )

    entries = [(r_poly, DecayModel.POLYNOMIAL)]
    if b_e <= 0:
        entries.append((r_exp, DecayModel.EXPONENTIAL))
    if b_g <= 0:
        entries.append((r_gauss, DecayModel.GAUSSIAN))
    entries.sort(key=lambda t: t[0])
    winner_res, winner = entries[0]
    margin = (entries[1][0] / max(winner_res, 1e-300)) if len(entries) > 1 else math.inf
    if margin < MARGIN_FACTOR:
        cls = Classification.INCONCLUSIVE
        model = None
    elif winner is DecayModel.POLYNOMIAL:
        cls = Classification.SINGULAR
        model = winner
    else:
        cls = Classification.REGULAR
        model = winner
    return FitResult(
        model=model,
        classification=cls,
        rate=rate,
        order=order,
        gauss_rate=gauss_rate,
        residuals=residuals,
        margin=margin,
        rule="competition",
    )


# ---------------------------------------------------------------------------
# Cone scans and verdicts
# ---------------------------------------------------------------------------


def scan_cone(
    tp,
    grid=None,
    sigma_w: float = 1.0,
    lambdas=None,
    scenario: str = "",
    convention: SlotConvention | None = None,
    workers: int = 1,
) -> ConeScanReport:
    """Probe and classify every direction; deterministic given settings.

    Per-direction quadrature failures are recorded on the row rather than
    aborting the scan.  Direction probes are independent and may run on a
    thread pool; rows are assembled in grid order regardless of scheduling.
    """
    grid = grid if grid is not None else direction_grid()
    lambdas = np.asarray(lambdas if lambdas is not None else np.geomspace(4.0, 64.0, 12))
    chi = tp.flow.chi_array()

    def run_one(sample: DirectionSample) -> DirectionResult:
        pairing = float(sample.khat_array() @ chi)
        try:
            profile = probe_direction(tp, sigma_w, sample, lambdas)
            fit = classify_decay(profile)
            return DirectionResult(sample, pairing, profile, fit)
        except Exception as exc:  # per-direction failure, not fatal
            empty = DecayProfile(lambdas, np.zeros_like(lambdas), sigma_w)
            fit = FitResult(None, Classification.INCONCLUSIVE, 0.0, 0.0, 0.0, {}, 0.0, "error")
            return DirectionResult(sample, pairing, empty, fit, error=str(exc))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, grid))
    else:
        results = [run_one(s) for s in grid]
    return ConeScanReport(
        scenario=scenario,
        flow_chi=tuple(chi),
        sigma_w=sigma_w,
        lambdas=lambdas,
        results=results,
        convention=convention,
    )


def fix_slot_convention(vacuum_report: ConeScanReport) -> SlotConvention:
    """Pin the probe-to-second-slot sign from a vacuum anchor scan.

    The vacuum singular cone must be a single time orientation; the sign is
    chosen so its slot image is the past-directed null cone (raised-vector
    orientation: past-directed covectors have positive time component).
    """
    singular = vacuum_report.singular_cone()
    if not singular:
        raise ConventionError("vacuum scan has no singular null directions")
    t_signs = {1 if r.sample.khat[0] > 0 else -1 for r in singular}
    if len(t_signs) != 1:
        raise ConventionError("vacuum singular cone is not single-orientation")
    probe_sign = t_signs.pop()
    # slot image s*khat must have positive time component (past-directed)
    sign = 1 if probe_sign > 0 else -1
    # regular side must be clean as well
    for r in vacuum_report.null_results():
        if (1 if r.sample.khat[0] > 0 else -1) != probe_sign:
            if r.fit.classification is Classification.SINGULAR:
                raise ConventionError("vacuum singular cone is not single-orientation")
    return SlotConvention(sign=sign, source=vacuum_report.scenario or "vacuum")


def _slot_is_past_null(result: DirectionResult, convention: SlotConvention) -> bool:
    if not result.sample.is_null:
        return False
    slot = convention.slot_image(result.sample.khat_array())
    orient = classify_causal(raise_covector(slot)).orientation
    return orient is Orientation.PAST


def admissibility_verdict(
    report: ConeScanReport, delta_margin: float = 0.2
) -> AdmissibilityResult:
    """Admissible iff every sampled past-directed (slot-image) null direction
    with |pair(khat, chi)| >= delta_margin is singular.
    """
    if report.convention is None:
        raise ConventionError("scan report carries no slot convention")
    checked = [
        r
        for r in report.results
        if _slot_is_past_null(r, report.convention) and abs(r.pairing) >= delta_margin
    ]
    if not checked:
        raise InconclusiveScanError("no past-null directions beyond the margin")
    n_inc = sum(1 for r in checked if r.fit.classification is Classification.INCONCLUSIVE)
    if n_inc > 0.1 * len(checked):
        raise InconclusiveScanError(
            f"{n_inc}/{len(checked)} past-null directions inconclusive"
        )
    witnesses = [r for r in checked if r.fit.classification is Classification.REGULAR]
    verdict = Verdict.ADMISSIBLE if not witnesses else Verdict.NOT_ADMISSIBLE
    return AdmissibilityResult(verdict, witnesses, len(checked), n_inc)


def cone_containment(report: ConeScanReport, delta: float = 0.05) -> ContainmentResult:
    """True iff every singular direction's slot image k satisfies
    pair(k, chi) >= -delta; margin is the minimum such pairing.
    """
    if report.convention is None:
        raise ConventionError("scan report carries no slot convention")
    chi = np.array(report.flow_chi)
    singular = [
        r for r in report.results if r.fit.classification is Classification.SINGULAR
    ]
    if not singular:
        return ContainmentResult(True, math.inf, 0)
    pairings = [
        float(report.convention.slot_image(r.sample.khat_array()) @ chi) for r in singular
    ]
    margin = min(pairings)
    return ContainmentResult(margin >= -delta, margin, len(singular))


def suppression_rate_table(report: ConeScanReport, beta: float, delta_margin: float = 0.2):
    """Fitted exponential rates vs the Fermi prediction beta * |pair|.

    Lists every regular null direction whose slot pairing is below
    -delta_margin (directions with pairing near zero are excluded).
    """
    if report.convention is None:
        raise ConventionError("scan report carries no slot convention")
    chi = np.array(report.flow_chi)
    rows = []
    for r in report.results:
        if not r.sample.is_null or r.fit.classification is not Classification.REGULAR:
            continue
        slot_pair = float(report.convention.slot_image(r.sample.khat_array()) @ chi)
        if slot_pair >= -delta_margin:
            continue
        rows.append(
            {
                "khat": r.sample.khat,
                "pairing": slot_pair,
                "fitted_rate": r.fit.rate,
                "predicted_rate": beta * abs(slot_pair),
            }
        )
    return rows
