"""Scenario runner: declarative configs, cached execution, report emission.

A scenario config is a JSON document naming a field, statistics, flow and the
scan/quadrature settings, plus a table of expected outcomes.  Running a
scenario builds the two-point branches, runs the identity / positivity / KMS
crossing checks and either a cone scan or the Bose divergence diagnosis, and
returns a self-contained report whose verdicts are re-derivable from the
embedded per-direction data.

Reports serialize canonically (sorted keys, fixed separators), so identical
config + library version yields byte-identical files; wall-clock timings are
kept on the in-memory document only and never serialized.  The cache is
content-addressed by (config, version) and written atomically.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import validate as _validate_schema

from . import __version__
from . import fields as fl
from . import microlocal as ml
from . import quadrature as quad
from .schema import REPORT_SCHEMA, SCHEMA_VERSION

__all__ = [
    "ScenarioConfig",
    "ReportDocument",
    "AnchorMissingError",
    "ExitCode",
    "run_scenario",
    "run_suite",
    "emit_report",
    "load_catalog",
    "catalog_names",
    "default_cache_dir",
    "load_anchor",
    "store_anchor",
]

CACHE_ENV_VAR = "THERMALCONE_CACHE_DIR"
ANCHOR_SCENARIO = "vacuum-scalar"


class AnchorMissingError(RuntimeError):
    """A cone-scan scenario ran before the vacuum convention anchor."""


class ExitCode:
    OK = 0
    VALIDATION = 2
    ACCURACY = 3
    VERDICT = 4
    IO = 5


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "thermalcone"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_KINDS = ("vacuum", "kms", "divergence-diagnosis")


@dataclass
class ScenarioConfig:
    scenario: str
    kind: str
    field_kind: str  # "scalar" | "dirac"
    mass: float
    statistics: str  # "fermi" | "bose" | "vacuum"
    chi: tuple
    beta: float  # math.inf encoded as "inf" in JSON
    scan: dict = dc_field(default_factory=dict)
    quadrature: dict = dc_field(default_factory=dict)
    crossing: dict = dc_field(default_factory=dict)
    packets: dict = dc_field(default_factory=dict)
    divergence: dict = dc_field(default_factory=dict)
    expect: dict = dc_field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        try:
            beta = d["flow"]["beta"]
            beta = math.inf if beta == "inf" else float(beta)
            cfg = cls(
                scenario=d["scenario"],
                kind=d["kind"],
                field_kind=d["field"]["kind"],
                mass=float(d["field"]["mass"]),
                statistics=d["statistics"],
                chi=tuple(float(c) for c in d["flow"]["chi"]),
                beta=beta,
                scan=dict(d.get("scan", {})),
                quadrature=dict(d.get("quadrature", {})),
                crossing=dict(d.get("crossing", {})),
                packets=dict(d.get("packets", {})),
                divergence=dict(d.get("divergence", {})),
                expect=dict(d.get("expect", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise fl.ValidationError(f"malformed scenario config: {exc}") from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "kind": self.kind,
            "field": {"kind": self.field_kind, "mass": self.mass},
            "statistics": self.statistics,
            "flow": {
                "chi": list(self.chi),
                "beta": "inf" if math.isinf(self.beta) else self.beta,
            },
            "scan": self.scan,
            "quadrature": self.quadrature,
            "crossing": self.crossing,
            "packets": self.packets,
            "divergence": self.divergence,
            "expect": self.expect,
        }

    def validate(self):
        if self.kind not in _KINDS:
            raise fl.ValidationError(f"unknown scenario kind {self.kind!r}")
        if self.field_kind not in ("scalar", "dirac"):
            raise fl.ValidationError(f"unknown field kind {self.field_kind!r}")
        if self.statistics not in ("fermi", "bose", "vacuum"):
            raise fl.ValidationError(f"unknown statistics {self.statistics!r}")
        # constructing the specs validates mass / chi / beta
        fspec = self.field_spec()
        flow = self.flow_spec()
        if self.statistics == "bose":
            causal = flow.causal.kind
            if causal is not fl.CausalKind.TIMELIKE and self.kind != "divergence-diagnosis":
                raise fl.ValidationError(
                    "Bose statistics along a non-timelike flow is only accepted "
                    "for the divergence-diagnosis scenario kind"
                )
        if self.kind == "divergence-diagnosis" and self.statistics != "bose":
            raise fl.ValidationError("divergence diagnosis is a Bose scenario")
        if self.kind == "vacuum" and self.statistics != "vacuum":
            raise fl.ValidationError("vacuum scenarios use vacuum statistics")

    def field_spec(self) -> fl.FieldSpec:
        kind = fl.FieldKind.SCALAR if self.field_kind == "scalar" else fl.FieldKind.DIRAC
        return fl.FieldSpec(kind, self.mass)

    def flow_spec(self) -> fl.FlowSpec:
        return fl.FlowSpec(self.chi, self.beta)

    def statistics_enum(self) -> fl.Statistics:
        return fl.Statistics(self.statistics)

    def quadrature_spec(self) -> quad.QuadratureSpec:
        return quad.QuadratureSpec(**self.quadrature) if self.quadrature else quad.QuadratureSpec()

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        payload = self.canonical_json() + "|" + __version__
        return hashlib.sha256(payload.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Report document
# ---------------------------------------------------------------------------


def _jsonsafe(x):
    """Map non-finite floats to None so reports stay strict JSON."""
    if isinstance(x, dict):
        return {k: _jsonsafe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonsafe(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_jsonsafe(v) for v in x.tolist()]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


@dataclass
class ReportDocument:
    """Payload (serialized) plus in-memory timings (never serialized)."""

    payload: dict
    timings: dict = dc_field(default_factory=dict)

    def canonical_bytes(self) -> bytes:
        return (
            json.dumps(self.payload, sort_keys=True, indent=1, ensure_ascii=False) + "\n"
        ).encode("utf-8")

    def validate_schema(self):
        _validate_schema(self.payload, REPORT_SCHEMA)


# ---------------------------------------------------------------------------
# Scenario execution
# ---------------------------------------------------------------------------


def _packet_families(cfg: ScenarioConfig):
    """Deterministic wavepacket families drawn from the config seed."""
    p = cfg.packets
    seed = int(p.get("seed", 20260801))
    n_family = int(p.get("n_family", 8))
    n_families = int(p.get("n_families", 3))
    rng = np.random.Generator(np.random.PCG64(seed))
    dirac = cfg.field_kind == "dirac"

    def one(i):
        return quad.GaussianWavepacket(
            center=tuple(rng.uniform(-0.4, 0.4, 4)),
            sigma=float(rng.uniform(0.9, 1.3)),
            carrier=(
                float(rng.uniform(-0.5, 0.5)),
                *(float(v) for v in rng.normal(0.0, 0.9, 3)),
            ),
            amplitude=complex(rng.normal(), rng.normal()),
            spinor_slot=int(i % 4) if dirac else None,
        )

    families = [[one(i) for i in range(n_family)] for _ in range(n_families)]
    pair = (one(0), one(2))
    return families, pair


def _shell_samples(cfg: ScenarioConfig, n=1000):
    rng = np.random.Generator(np.random.PCG64(int(cfg.packets.get("seed", 20260801)) + 1))
    kvecs = rng.normal(scale=2.0, size=(n, 3))
    sheets = np.where(rng.random(n) < 0.5, 1, -1)
    return kvecs, sheets


def _scan_settings(cfg: ScenarioConfig):
    s = cfg.scan
    lambdas = np.geomspace(
        float(s.get("lambda_min", 4.0)),
        float(s.get("lambda_max", 64.0)),
        int(s.get("n_lambda", 12)),
    )
    grid = ml.direction_grid(int(s.get("n_null", 144)), int(s.get("n_control", 48)))
    return (
        grid,
        float(s.get("sigma_w", 1.0)),
        lambdas,
        float(s.get("delta_margin", 0.2)),
        float(s.get("containment_delta", 0.05)),
        int(s.get("workers", 1)),
    )


def _direction_rows(report: ml.ConeScanReport):
    rows = []
    conv = report.convention
    chi = np.array(report.flow_chi)
    for r in report.results:
        slot_pairing = (
            float(conv.slot_image(r.sample.khat_array()) @ chi) if conv else None
        )
        win = r.fit.model.value if r.fit.model else None
        rows.append(
            {
                "khat": list(r.sample.khat),
                "is_null": r.sample.is_null,
                "causal_kind": r.sample.causal.kind.value if r.sample.causal else "",
                "orientation": r.sample.causal.orientation.value if r.sample.causal else "",
                "pairing": r.pairing,
                "slot_pairing": slot_pairing,
                "classification": r.fit.classification.value,
                "model": win,
                "rate": r.fit.rate,
                "order": r.fit.order,
                "margin": r.fit.margin,
                "fit_residual": r.fit.residuals.get(win) if win else None,
                "rule": r.fit.rule,
                "h": [float(x) for x in r.profile.samples],
                "error": r.error,
            }
        )
    return rows


def run_scenario(
    cfg: ScenarioConfig,
    anchor: ml.SlotConvention | None = None,
    cache_dir: Path | None = None,
    use_cache: bool = True,
) -> ReportDocument:
    """Execute one scenario end to end; returns the report document.

    Vacuum scenarios fix and return their own slot convention; all other
    cone-scan scenarios require one (argument or persisted anchor file).
    """
    cfg.validate()
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    key = cfg.content_hash()
    cache_file = cache_dir / f"{key}.json"
    if use_cache and cache_file.exists():
        payload = json.loads(cache_file.read_text(encoding="utf-8"))
        return ReportDocument(payload, {"cache_hit": True})

    timings: dict = {}
    t_start = time.perf_counter()
    payload: dict = {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "scenario": cfg.scenario,
        "kind": cfg.kind,
        "config": cfg.to_dict(),
        "config_hash": key,
        "conventions": {
            "fourier_sign": quad.FOURIER_SIGN,
            "frequency_transform": quad.FREQUENCY_TRANSFORM,
            "slot_sign": None,
            "slot_source": None,
        },
        "checks": {
            "car_sum_residual": None,
            "detailed_balance_residual": None,
            "pointwise_psd_min_ratio": None,
            "gram": [],
            "crossing": None,
            "flow_invariance_residual": None,
        },
        "cone_scan": None,
        "divergence": None,
        "verdicts": {},
        "expectations": cfg.expect,
        "expectation_failures": [],
        "expectations_met": None,
    }

    if cfg.kind == "divergence-diagnosis":
        _run_divergence(cfg, payload, timings)
    else:
        _run_state_scenario(cfg, payload, timings, anchor, cache_dir)

    failures = evaluate_expectations(payload, cfg.expect)
    payload["expectation_failures"] = failures
    payload["expectations_met"] = (not failures) if cfg.expect else None
    payload = _jsonsafe(payload)
    timings["total"] = time.perf_counter() - t_start

    doc = ReportDocument(payload, timings)
    doc.validate_schema()
    if use_cache:
        _atomic_write(cache_file, doc.canonical_bytes())
    return doc


def _run_state_scenario(cfg, payload, timings, anchor, cache_dir):
    t0 = time.perf_counter()
    plus, minus = fl.build_two_point(cfg.field_spec(), cfg.flow_spec(), cfg.statistics_enum())
    timings["build"] = time.perf_counter() - t0

    qspec = cfg.quadrature_spec()
    families, pair = _packet_families(cfg)
    kvecs, sheets = _shell_samples(cfg)

    t0 = time.perf_counter()
    checks = payload["checks"]
    checks["car_sum_residual"] = fl.car_sum_residual(plus, minus, kvecs, sheets)
    if math.isfinite(cfg.beta):
        u = np.linspace(-1e4 / cfg.beta, 1e4 / cfg.beta, 4001)
        stat = cfg.statistics_enum()
        if stat is fl.Statistics.BOSE:
            checks["detailed_balance_residual"] = fl.detailed_balance_residual(
                cfg.beta, u, fl.Statistics.BOSE
            )
        else:
            checks["detailed_balance_residual"] = fl.detailed_balance_residual(cfg.beta, u)
    if cfg.statistics in ("fermi", "vacuum"):
        checks["pointwise_psd_min_ratio"] = fl.pointwise_psd_report(plus, kvecs, sheets)
    timings["identities"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    for family in families:
        rep = fl.positivity_gram(plus, family, qspec)
        checks["gram"].append(
            {
                "min_eig": rep.min_eig,
                "max_eig": rep.max_eig,
                "max_entry_error": rep.max_entry_error,
            }
        )
    timings["gram"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    beta_check = cfg.beta if math.isfinite(cfg.beta) else float(cfg.crossing.get("beta_check", 1.0))
    cross = quad.kms_crossing_check(
        plus, minus, pair[0], pair[1], beta_check, qspec, int(cfg.crossing.get("n_t", 1024))
    )
    checks["crossing"] = {
        "residual": cross.residual,
        "n_checked": cross.n_checked,
        "one_signed": cross.one_signed,
        "is_beta_kms": cross.is_beta_kms,
        "dt": cross.dt,
        "n_t": cross.n_t,
        "beta": beta_check,
    }
    timings["crossing"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    checks["flow_invariance_residual"] = fl.flow_invariance_residual(
        plus, pair[0], pair[1], [-5.0, -1.0, 1.0, 5.0], qspec
    )
    timings["flow_invariance"] = time.perf_counter() - t0

    grid, sigma_w, lambdas, delta_margin, containment_delta, workers = _scan_settings(cfg)
    t0 = time.perf_counter()
    scan = ml.scan_cone(plus, grid, sigma_w, lambdas, cfg.scenario, workers=workers)
    timings["cone_scan"] = time.perf_counter() - t0

    if cfg.kind == "vacuum":
        convention = ml.fix_slot_convention(scan)
        store_anchor(convention, cache_dir, cfg)
    else:
        convention = anchor if anchor is not None else load_anchor(cache_dir)
        if convention is None:
            raise AnchorMissingError(
                "cone-scan scenarios need the vacuum convention anchor; "
                "run the 'anchor' command or the vacuum-scalar scenario first"
            )
    scan.convention = convention
    payload["conventions"]["slot_sign"] = convention.sign
    payload["conventions"]["slot_source"] = convention.source

    adm = ml.admissibility_verdict(scan, delta_margin)
    cont = ml.cone_containment(scan, containment_delta)
    suppression = (
        ml.suppression_rate_table(scan, cfg.beta, delta_margin)
        if cfg.statistics == "fermi" and math.isfinite(cfg.beta)
        else []
    )
    rows = _direction_rows(scan)
    payload["cone_scan"] = {
        "sigma_w": sigma_w,
        "lambdas": [float(x) for x in lambdas],
        "directions": rows,
        "n_singular_null": len(scan.singular_cone()),
        "admissibility": {
            "verdict": adm.verdict.value,
            "n_checked": adm.n_checked,
            "n_inconclusive": adm.n_inconclusive,
            "witness_khats": [list(w.sample.khat) for w in adm.witnesses],
        },
        "containment": {
            "contained": cont.contained,
            "margin": cont.margin,
            "n_singular": cont.n_singular,
        },
        "suppression_table": [
            {**row, "khat": list(row["khat"])} for row in suppression
        ],
    }
    payload["verdicts"] = {
        "state_exists": True,
        "admissible": adm.verdict is ml.Verdict.ADMISSIBLE,
        "cone_contained": cont.contained,
        "ir_divergent": False,
    }


def _run_divergence(cfg, payload, timings):
    t0 = time.perf_counter()
    flow = cfg.flow_spec()
    field = cfg.field_spec()
    try:
        fl.build_two_point(field, flow, fl.Statistics.BOSE)
        raise fl.ValidationError(
            "divergence diagnosis expects an infrared-divergent configuration"
        )
    except fl.IRDivergentError as exc:
        witness = exc.witness
    timings["build"] = time.perf_counter() - t0

    d = cfg.divergence
    env = fl.EnvelopeSpec(
        sigma=float(d.get("envelope_sigma", 1.0)),
        center=tuple(d.get("envelope_center", (0.0, 0.0, 0.0))),
    )
    eps_grid = np.geomspace(
        float(d.get("eps_min", 1e-4)), float(d.get("eps_max", 1e-1)), int(d.get("n_eps", 8))
    )

    t0 = time.perf_counter()
    bose_mass = np.array(
        [fl.bose_truncated_mass(flow, cfg.beta, env, float(e), field) for e in eps_grid]
    )
    a, b, r2 = fl.fit_log_divergence(eps_grid, bose_mass)
    oracle = fl.laurent_slope_oracle(flow, cfg.beta, env, field)
    fermi_mass = np.array(
        [fl.fermi_truncated_mass(flow, cfg.beta, env, float(e), field) for e in eps_grid]
    )
    af, bf, r2f = fl.fit_log_divergence(eps_grid, fermi_mass)
    timings["truncated_mass"] = time.perf_counter() - t0

    witness_value = witness[1] if witness else None
    closed_form = None
    if witness is not None:
        u_w = float(
            np.array(witness[0][0])
            @ np.array(cfg.chi)[1:]
        )
        closed_form = 1.0 / (1.0 - math.exp(-cfg.beta * u_w))
    payload["divergence"] = {
        "eps_grid": [float(e) for e in eps_grid],
        "bose_truncated_mass": [float(v) for v in bose_mass],
        "fit_offset": a,
        "fit_slope": b,
        "fit_r2": r2,
        "laurent_oracle_slope": oracle,
        "slope_rel_dev": abs(b - oracle) / abs(oracle),
        "fermi_truncated_mass": [float(v) for v in fermi_mass],
        "fermi_fit_slope": bf,
        "fermi_control_ratio": abs(bf) / float(fermi_mass[-1]),
        "witness": None
        if witness is None
        else {
            "kvec": list(witness[0][0]),
            "sheet": witness[0][1],
            "value": witness_value,
            "closed_form": closed_form,
        },
    }
    payload["verdicts"] = {
        "state_exists": False,
        "admissible": None,
        "cone_contained": None,
        "ir_divergent": True,
    }


# ---------------------------------------------------------------------------
# Expectations
# ---------------------------------------------------------------------------


def evaluate_expectations(payload: dict, expect: dict) -> list:
    """Check the report against its embedded expectations; returns failures."""
    fails = []

    def check(name, cond):
        if not cond:
            fails.append(name)

    checks = payload["checks"]
    scan = payload.get("cone_scan")
    verdicts = payload.get("verdicts", {})
    div = payload.get("divergence")

    for name, bound in (
        ("car_max", "car_sum_residual"),
        ("db_max", "detailed_balance_residual"),
    ):
        if name in expect:
            val = checks.get(bound)
            check(f"{bound} <= {expect[name]}", val is not None and val <= expect[name])
    if "psd_min_ratio" in expect:
        val = checks.get("pointwise_psd_min_ratio")
        check("pointwise density PSD", val is not None and val >= expect["psd_min_ratio"])
    if "gram_min_ratio" in expect:
        ok = bool(checks["gram"]) and all(
            g["min_eig"] >= expect["gram_min_ratio"] * abs(g["max_eig"])
            for g in checks["gram"]
        )
        check("gram matrices PSD", ok)
    if "kms_residual_max" in expect:
        cr = checks.get("crossing")
        check(
            f"kms residual <= {expect['kms_residual_max']}",
            cr is not None and cr["residual"] <= expect["kms_residual_max"],
        )
    if expect.get("not_beta_kms"):
        cr = checks.get("crossing")
        check("not beta-KMS", cr is not None and not cr["is_beta_kms"])
    if "admissible" in expect:
        check(
            f"admissible == {expect['admissible']}",
            verdicts.get("admissible") == expect["admissible"],
        )
    if "containment" in expect:
        check(
            f"cone containment == {expect['containment']}",
            verdicts.get("cone_contained") == expect["containment"],
        )
    if expect.get("single_orientation"):
        ok = False
        if scan:
            sing = [
                d
                for d in scan["directions"]
                if d["is_null"] and d["classification"] == "singular"
            ]
            signs = {1 if d["khat"][0] > 0 else -1 for d in sing}
            ok = len(sing) > 0 and len(signs) == 1
        check("single-orientation singular cone", ok)
    if expect.get("past_null_all_singular"):
        ok = False
        if scan and scan.get("admissibility"):
            adm = scan["admissibility"]
            ok = adm["verdict"] == "admissible" and adm["n_inconclusive"] == 0
        check("full past-null cone singular", ok)
    if expect.get("controls_all_regular"):
        ok = False
        if scan:
            ok = all(
                d["classification"] == "regular"
                for d in scan["directions"]
                if not d["is_null"]
            )
        check("off-cone controls regular", ok)
    if "rate_rel_tol" in expect:
        ok = False
        if scan and scan["suppression_table"]:
            tol = expect["rate_rel_tol"]
            ok = all(
                abs(row["fitted_rate"] - row["predicted_rate"])
                <= tol * row["predicted_rate"]
                for row in scan["suppression_table"]
            )
        check("suppression rates match beta*|pair|", ok)
    if expect.get("ir_divergent"):
        check("infrared divergent", verdicts.get("ir_divergent") is True)
    if "fit_r2_min" in expect:
        check(
            f"log fit R2 >= {expect['fit_r2_min']}",
            div is not None and div["fit_r2"] >= expect["fit_r2_min"],
        )
    if "slope_rel_tol" in expect:
        check(
            "divergence slope matches Laurent oracle",
            div is not None and div["slope_rel_dev"] <= expect["slope_rel_tol"],
        )
    if "fermi_control_ratio_max" in expect:
        check(
            "fermi control slope small",
            div is not None
            and div["fermi_control_ratio"] <= expect["fermi_control_ratio_max"],
        )
    if "witness_abs_tol" in expect:
        ok = (
            div is not None
            and div["witness"] is not None
            and abs(div["witness"]["value"] - div["witness"]["closed_form"])
            <= expect["witness_abs_tol"]
        )
        check("negativity witness matches closed form", ok)
    return fails


# ---------------------------------------------------------------------------
# Anchor persistence, emission, cache
# ---------------------------------------------------------------------------


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + f".tmp{os.getpid()}")
    tmp.write_bytes(data)
    tmp.replace(path)


def store_anchor(convention: ml.SlotConvention, cache_dir: Path, cfg: ScenarioConfig):
    payload = {
        "slot_sign": convention.sign,
        "source": convention.source,
        "config_hash": cfg.content_hash(),
        "library_version": __version__,
    }
    _atomic_write(
        Path(cache_dir) / "anchor.json",
        (json.dumps(payload, sort_keys=True, indent=1) + "\n").encode(),
    )


def load_anchor(cache_dir: Path) -> ml.SlotConvention | None:
    path = Path(cache_dir) / "anchor.json"
    if not path.exists():
        return None
    data = json.loads(path.read_text(encoding="utf-8"))
    return ml.SlotConvention(sign=int(data["slot_sign"]), source=str(data["source"]))


def emit_report(doc: ReportDocument, json_path: Path, csv_dir: Path | None = None):
    """Write the canonical JSON report and the plottable CSV tables."""
    json_path = Path(json_path)
    _atomic_write(json_path, doc.canonical_bytes())
    written = [json_path]
    if csv_dir is None:
        csv_dir = json_path.parent
    csv_dir = Path(csv_dir)
    scan = doc.payload.get("cone_scan")
    stem = doc.payload["scenario"]
    if scan:
        rows = ["k0,k1,k2,k3,is_null,causal_kind,orientation,pairing,slot_pairing,classification,model,rate,order,margin,fit_residual,rule"]
        for d in scan["directions"]:
            rows.append(
                ",".join(
                    [
                        *(f"{c!r}" for c in d["khat"]),
                        str(d["is_null"]).lower(),
                        d["causal_kind"],
                        d["orientation"],
                        repr(d["pairing"]),
                        "" if d["slot_pairing"] is None else repr(d["slot_pairing"]),
                        d["classification"],
                        d["model"] or "",
                        "" if d["rate"] is None else repr(d["rate"]),
                        "" if d["order"] is None else repr(d["order"]),
                        "" if d["margin"] is None else repr(d["margin"]),
                        "" if d["fit_residual"] is None else repr(d["fit_residual"]),
                        d["rule"],
                    ]
                )
            )
        path = csv_dir / f"{stem}-directions.csv"
        _atomic_write(path, ("\r\n".join(rows) + "\r\n").encode())
        written.append(path)
    div = doc.payload.get("divergence")
    if div:
        rows = ["epsilon,bose_truncated_mass,fermi_truncated_mass"]
        for e, bv, fv in zip(
            div["eps_grid"], div["bose_truncated_mass"], div["fermi_truncated_mass"]
        ):
            rows.append(f"{e!r},{bv!r},{fv!r}")
        path = csv_dir / f"{stem}-divergence.csv"
        _atomic_write(path, ("\r\n".join(rows) + "\r\n").encode())
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Catalog and suite
# ---------------------------------------------------------------------------


def load_catalog() -> dict:
    """Shipped scenario configs, keyed by scenario name."""
    out = {}
    for entry in resources.files("thermalcone.catalog").iterdir():
        if entry.name.endswith(".json"):
            cfg = ScenarioConfig.from_dict(json.loads(entry.read_text(encoding="utf-8")))
            out[cfg.scenario] = cfg
    return out


def catalog_names() -> list:
    return sorted(load_catalog().keys())


def _run_entry(args):
    cfg_dict, cache_dir, use_cache = args
    cfg = ScenarioConfig.from_dict(cfg_dict)
    try:
        doc = run_scenario(cfg, cache_dir=Path(cache_dir), use_cache=use_cache)
        return cfg.scenario, doc.payload, doc.timings, None
    except Exception as exc:  # collected into the summary
        return cfg.scenario, None, {}, f"{type(exc).__name__}: {exc}"


def run_suite(
    filter_glob: str = "*",
    jobs: int = 1,
    cache_dir: Path | None = None,
    use_cache: bool = True,
    out_dir: Path | None = None,
    log=print,
):
    """Run the (filtered) catalog, anchor first; returns (exit_code, summary).

    The summary has one entry per scenario: status "pass", "fail" (expectation
    failures) or "error".
    """
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    catalog = load_catalog()
    names = [n for n in sorted(catalog) if fnmatch.fnmatch(n, filter_glob)]
    summary = {}
    if not names:
        log("suite: no scenarios matched")
        return ExitCode.OK, summary

    # the anchor scenario must run (or be cached) before any verdict scan
    ordered = sorted(names, key=lambda n: (n != ANCHOR_SCENARIO, n))
    needs_anchor = any(catalog[n].kind != "divergence-diagnosis" for n in ordered)
    if needs_anchor and ANCHOR_SCENARIO not in ordered and load_anchor(cache_dir) is None:
        log("suite: anchor missing; run 'anchor' or include vacuum-scalar")
        return ExitCode.VALIDATION, {"anchor": "missing"}

    results = []
    if ANCHOR_SCENARIO in ordered:
        results.append(
            _run_entry((catalog[ANCHOR_SCENARIO].to_dict(), str(cache_dir), use_cache))
        )
        ordered = [n for n in ordered if n != ANCHOR_SCENARIO]
    if jobs > 1 and len(ordered) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results.extend(
                pool.map(
                    _run_entry,
                    [(catalog[n].to_dict(), str(cache_dir), use_cache) for n in ordered],
                )
            )
    else:
        results.extend(
            _run_entry((catalog[n].to_dict(), str(cache_dir), use_cache)) for n in ordered
        )

    worst = ExitCode.OK
    for name, payload, timings, error in results:
        if error is not None:
            summary[name] = {"status": "error", "detail": error}
            log(f"[ERROR] {name}: {error}")
            code = ExitCode.VALIDATION if "Validation" in error or "Anchor" in error else ExitCode.ACCURACY
            worst = max(worst, code)
            continue
        if out_dir is not None:
            emit_report(ReportDocument(payload), Path(out_dir) / f"{name}.json", Path(out_dir))
        met = payload.get("expectations_met")
        fails = payload.get("expectation_failures", [])
        if met is False:
            summary[name] = {"status": "fail", "failures": fails}
            log(f"[FAIL] {name}: {'; '.join(fails)}")
            worst = max(worst, ExitCode.VERDICT)
        else:
            summary[name] = {"status": "pass", "seconds": round(timings.get("total", 0.0), 2)}
            log(f"[PASS] {name} ({timings.get('total', 0.0):.1f}s)")
    return worst, summary
