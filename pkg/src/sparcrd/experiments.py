"""Seeded Monte Carlo campaigns checking the theory against simulated codebooks.

Every trial draws its randomness from a seed derived from
``(base_seed, grid_index, trial_index)``; outputs depend only on the
configuration, so reruns produce byte-identical CSV files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from . import __version__
from ._validation import DEFAULT_BUDGET, DomainError, check_budget
from .codebook import SparcParams, sample_design_matrix
from .counting import solution_mask
from .encoder import CODED, NORM_OVERFLOW, _encode, distortion_chain, distortion_slack
from .special import chi2_log_upper_tail
from .theory import (
    StylizedParams,
    TheoryPoint,
    critical_ratio,
    gaussian_ld_rate,
    shannon_rates,
    stylized_cond_dist,
    stylized_ratio,
    stylized_regime,
)

KINDS = ("pe_sweep", "second_mom", "stylized", "ld_rate", "rate_curves")
SEED_ALGORITHM = (
    "numpy.random.SeedSequence(entropy=base_seed, spawn_key=(grid_index, trial_index))"
    ".generate_state(1, uint64)"
)
REGIME_VERDICT = {1: "succeeds", 2: "fixable", 3: "condensation"}


class ConfigError(DomainError):
    """Configuration failed validation; ``errors`` lists every offending field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid experiment config: " + "; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: SparcParams | StylizedParams | None
    point: TheoryPoint | None
    trials: int
    base_seed: int
    grid: tuple
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        errors = []
        kind = d.get("kind")
        if kind not in KINDS:
            errors.append(f"kind: must be one of {KINDS}, got {kind!r}")
        trials = d.get("trials", 1)
        if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
            errors.append(f"trials: must be an integer >= 1, got {trials!r}")
        base_seed = d.get("base_seed", 0)
        if isinstance(base_seed, bool) or not isinstance(base_seed, int) or not 0 <= base_seed < 2**64:
            errors.append(f"base_seed: must be a 64-bit unsigned integer, got {base_seed!r}")
        grid = d.get("grid")
        if not isinstance(grid, (list, tuple)) or len(grid) == 0:
            errors.append(f"grid: must be a non-empty list, got {grid!r}")
            grid = ()
        elif not all(isinstance(g, (int, float)) and not isinstance(g, bool) for g in grid):
            errors.append(f"grid: entries must be numbers, got {grid!r}")
        options = d.get("options", {})
        if not isinstance(options, dict):
            errors.append(f"options: must be a table, got {options!r}")
            options = {}
        unknown = set(d) - {"kind", "params", "point", "trials", "base_seed", "grid", "options"}
        for key in sorted(unknown):
            errors.append(f"{key}: unknown field")

        params = point = None
        raw_params = d.get("params") or {}
        raw_point = d.get("point")
        try:
            if kind == "stylized":
                params = StylizedParams(**raw_params)
            elif kind in ("pe_sweep", "second_mom"):
                p = dict(raw_params)
                p.setdefault("M", 1)
                params = SparcParams.from_geometry(p.pop("n"), p.pop("L"), p.pop("M"))
                if p:
                    raise DomainError(f"unexpected keys {sorted(p)}")
        except (TypeError, KeyError, DomainError) as exc:
            errors.append(f"params: {exc}")
        if kind in ("pe_sweep", "second_mom", "ld_rate", "rate_curves"):
            try:
                point = _point_from_dict(raw_point or {})
            except (TypeError, DomainError) as exc:
                errors.append(f"point: {exc}")
        if errors:
            raise ConfigError(errors)
        return cls(kind, params, point, trials, base_seed, tuple(grid), dict(options))

    def to_dict(self):
        params = None
        if isinstance(self.params, SparcParams):
            params = {"n": self.params.n, "L": self.params.L, "M": self.params.M}
        elif isinstance(self.params, StylizedParams):
            params = {"n": self.params.n, "p": self.params.p, "log_N": self.params.log_N}
        point = None
        if self.point is not None:
            point = {k: getattr(self.point, k) for k in ("sigma2", "D", "R", "rho2", "gamma2")}
        return {
            "kind": self.kind,
            "params": params,
            "point": point,
            "trials": self.trials,
            "base_seed": self.base_seed,
            "grid": list(self.grid),
            "options": self.options,
        }

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _point_from_dict(d):
    d = dict(d)
    sigma2 = d.get("sigma2", 1.0)
    d.setdefault("sigma2", sigma2)
    d.setdefault("D", 0.5 * sigma2)
    d.setdefault("R", 0.0)
    d.setdefault("rho2", sigma2)
    d.setdefault("gamma2", 2.0 * sigma2)
    return TheoryPoint(**d)


def load_config(path):
    """Parse a JSON or TOML experiment config (chosen by file extension)."""
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            d = tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"toml: {exc}"]) from exc
    else:
        try:
            d = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"json: {exc}"]) from exc
    if not isinstance(d, dict):
        raise ConfigError(["top level: must be a table/object"])
    return ExperimentConfig.from_dict(d)


# ---------------------------------------------------------------------------
# Seeds and records
# ---------------------------------------------------------------------------


def trial_seed(base_seed, grid_index, trial_index):
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(grid_index, trial_index))
    return int(ss.generate_state(1, np.uint64)[0])


class SeedLedger:
    """Derives per-trial seeds and rejects any repeat within a run."""

    def __init__(self, base_seed):
        self.base_seed = base_seed
        self._seen = set()

    def __call__(self, grid_index, trial_index):
        seed = trial_seed(self.base_seed, grid_index, trial_index)
        if seed in self._seen:
            raise RuntimeError(
                f"derived seed collision at grid={grid_index}, trial={trial_index}"
            )
        self._seen.add(seed)
        return seed

    def __len__(self):
        return len(self._seen)


@dataclass
class TrialRecord:
    seed: int
    grid_value: float
    status: str
    distortion_total: float | None = None
    X: int | None = None
    eps_good_flag: bool | None = None
    runtime_ms: float = 0.0

    CSV_FIELDS = ("seed", "grid_value", "status", "distortion_total", "X", "eps_good_flag")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    summary: dict
    trial_records: list = field(default_factory=list)
    runtime_ms: float = 0.0


def wilson_interval(successes, trials):
    ci = binomtest(int(successes), int(trials)).proportion_ci(0.95, method="wilson")
    return float(ci.low), float(ci.high)


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------


def _geometry_for_rate(n, L, R):
    M = max(1, round(math.exp(n * R / L)))
    params = SparcParams(n=n, L=L, M=M, b=math.nan, R_nominal=R)
    if R == 0:
        if M != 1:
            raise DomainError("rate 0 must give a single codeword")
    elif abs(params.R_actual - R) > 0.5 * R:
        raise DomainError(
            f"grid rate {R} realised as {params.R_actual:.4g} with L={L}, M={M}: "
            f"drift above 50%"
        )
    return params


def run_pe_sweep(config, *, budget=DEFAULT_BUDGET):
    """Empirical excess-distortion probability for each rate in ``config.grid``.

    For each grid rate the section count ``L`` and block length ``n`` come
    from ``config.params``; ``M`` is ``round(exp(nR/L))``. Overflowing
    blocks count as errors. Two criteria are reported: the strict one
    (total distortion above ``D``) and the one allowing the
    quantization slack of the encoder.
    """
    pt = config.point
    n, L = config.params.n, config.params.L
    slack = distortion_slack(n, pt.D, pt.gamma2)
    seeds = SeedLedger(config.base_seed)
    geometries = [_geometry_for_rate(n, L, float(R)) for R in config.grid]
    for g in geometries:
        check_budget(g.n_codewords, budget)
    rows, points, records = [], [], []
    chain_failures = 0
    for gi, (R, params) in enumerate(zip(config.grid, geometries)):
        err_slack = err_strict = overflow = trivial = 0
        for ti in range(config.trials):
            t0 = time.perf_counter()
            seed = seeds(gi, ti)
            rng = np.random.default_rng(seed)
            S = math.sqrt(pt.sigma2) * rng.standard_normal(n)
            A = sample_design_matrix(params, seed)
            outcome, s_tilde, s_hat = _encode(S, A, params, pt.D, pt.gamma2, budget=budget)
            if outcome.status == NORM_OVERFLOW:
                overflow += 1
                err_slack += 1
                err_strict += 1
            else:
                trivial += outcome.status != CODED
                err_slack += outcome.distortion_total > pt.D + slack
                err_strict += outcome.distortion_total > pt.D
                if outcome.status == CODED and outcome.distortion_tilde <= pt.D:
                    chain_failures += not distortion_chain(S, s_tilde, s_hat, pt.D, pt.gamma2)["ok"]
            records.append(TrialRecord(
                seed, float(R), outcome.status, outcome.distortion_total,
                runtime_ms=1e3 * (time.perf_counter() - t0),
            ))
        pe = err_slack / config.trials
        lo, hi = wilson_interval(err_slack, config.trials)
        slo, shi = wilson_interval(err_strict, config.trials)
        points.append((float(R), pe, (lo, hi)))
        rows.append({
            "grid_value": float(R),
            "M": params.M,
            "R_actual": params.R_actual,
            "trials": config.trials,
            "overflow": overflow,
            "trivial_zero": trivial,
            "errors_slack": err_slack,
            "pe_slack": pe,
            "ci95_low": lo,
            "ci95_high": hi,
            "errors_strict": err_strict,
            "pe_strict": err_strict / config.trials,
            "strict_ci95_low": slo,
            "strict_ci95_high": shi,
        })
    summary = {
        "slack": slack,
        "chain_failures": chain_failures,
        "points": points,
        "derived_seeds": len(seeds),
    }
    return ExperimentResult(config, rows, summary, records)


def _second_mom_source(n, rho2, mode, rng):
    if mode == "constant":
        return np.full(n, math.sqrt(rho2))
    v = rng.standard_normal(n)
    return math.sqrt(rho2) * v / math.sqrt(float(v @ v) / n)


def run_second_mom(config, *, budget=DEFAULT_BUDGET):
    """Monte Carlo estimates of ``E X``, ``E X^2`` and ``E[X | U_1 = 1]``.

    The quantized source has squared norm ``point.rho2`` (option
    ``source``: ``"constant"`` for ``(rho, ..., rho)``, ``"random"`` for a
    random direction), codeword entries have variance ``rho2 - D``, and a
    codeword is a solution when within ``D`` (option ``threshold``
    overrides the solution threshold only). A threshold at or above
    ``gamma2`` is the degenerate case where every block is within
    distortion already: all ``M^L`` codewords count as solutions.
    Conditioning on ``U_1 = 1`` is done by rejection.
    """
    pt, params = config.point, config.params
    if params.n_codewords > 4096:
        raise DomainError(f"second-moment runs need M^L <= 4096, got {params.n_codewords}")
    check_budget(params.n_codewords, budget)
    mode = config.options.get("source", "constant")
    if mode not in ("constant", "random"):
        raise DomainError(f"options.source must be 'constant' or 'random', got {mode!r}")
    threshold = float(config.options.get("threshold", pt.D))
    coeff = math.sqrt((pt.rho2 - pt.D) / params.L)
    degenerate = threshold >= pt.gamma2
    seeds = SeedLedger(config.base_seed)
    X = np.empty(config.trials, dtype=np.int64)
    u_counts = np.zeros(params.n_codewords, dtype=np.int64)
    u1 = np.zeros(config.trials, dtype=bool)
    for ti in range(config.trials):
        seed = seeds(0, ti)
        s = _second_mom_source(params.n, pt.rho2, mode, np.random.default_rng(seed))
        if degenerate:
            mask = np.ones(params.n_codewords, dtype=bool)
        else:
            mask = solution_mask(s, sample_design_matrix(params, seed), threshold, coeff,
                                 budget=budget)
        X[ti] = mask.sum()
        u_counts += mask
        u1[ti] = mask[0]
    report = second_moment_report(X, u1)
    report["p_success"] = float(np.mean(X > 0))
    report["u_freq"] = (u_counts / config.trials).tolist()
    report["trials"] = config.trials
    row = {k: v for k, v in report.items() if k != "u_freq"}
    return ExperimentResult(config, [row], report)


def second_moment_report(X, u1, *, min_accept=100):
    """Compare ``mean(X^2)`` with ``mean(X) * mean(X | U_1)`` in pooled standard errors."""
    X = np.asarray(X, dtype=float)
    T = X.size
    cond = X[np.asarray(u1, dtype=bool)]
    k = cond.size
    ex = float(X.mean())
    ex2 = float((X * X).mean())
    se_ex = float(X.std(ddof=1) / math.sqrt(T)) if T > 1 else 0.0
    se_ex2 = float((X * X).std(ddof=1) / math.sqrt(T)) if T > 1 else 0.0
    if k == 0:
        econd = se_cond = math.nan
    else:
        econd = float(cond.mean())
        se_cond = float(cond.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    residual = ex2 - ex * econd
    pooled = math.sqrt(se_ex2**2 + (econd * se_ex) ** 2 + (ex * se_cond) ** 2) if k else math.nan
    if k and pooled == 0.0:
        sigma = 0.0 if residual == 0.0 else math.inf
    else:
        sigma = residual / pooled if k else math.nan
    return {
        "status": "ok" if k >= min_accept else "inconclusive",
        "EX_hat": ex,
        "EX_se": se_ex,
        "EX2_hat": ex2,
        "EX2_se": se_ex2,
        "EcondX_hat": econd,
        "EcondX_se": se_cond,
        "accepted": int(k),
        "acceptance_rate": k / T,
        "identity_residual": residual,
        "pooled_se": pooled,
        "identity_residual_sigma": sigma,
    }


def run_stylized(config):
    """Simulate the two-type model for each ``p`` in the grid.

    Standard errors are those of the estimators under the closed-form
    model, so rare type-2 draws that a finite run may never see still
    count towards the tolerance.
    """
    base = config.params
    seeds = SeedLedger(config.base_seed)
    rows = []
    for gi, p in enumerate(config.grid):
        sp = StylizedParams(base.n, float(p), base.log_N)
        n = sp.n
        q = math.exp(-n * sp.p)
        p_u = (math.exp(n - sp.log_N), math.exp(2 * n - sp.log_N))
        vals = (math.exp(n), math.exp(2 * n))
        type2 = np.empty(config.trials, dtype=bool)
        u1 = np.empty(config.trials, dtype=bool)
        for ti in range(config.trials):
            u = np.random.default_rng(seeds(gi, ti)).random(2)
            type2[ti] = u[0] < q
            u1[ti] = u[1] < p_u[int(type2[ti])]
        x = np.where(type2, vals[1], vals[0])
        k = int(u1.sum())
        ex_hat = float(x.mean())
        econd_hat = float(x[u1].mean()) if k else math.nan
        pl_hat = float(type2[u1].mean()) if k else math.nan

        ratio = stylized_ratio(sp)
        ps, pl = stylized_cond_dist(sp)
        spread = (vals[1] - vals[0]) ** 2
        ex = (1 - q) * vals[0] + q * vals[1]
        econd = ps * vals[0] + pl * vals[1]
        se_ex = math.sqrt(q * (1 - q) * spread / config.trials)
        se_cond = math.sqrt(pl * (1 - pl) * spread / k) if k else math.inf
        se_ratio = ratio * math.hypot(se_ex / ex, se_cond / econd)
        se_pl = math.sqrt(pl * (1 - pl) / k) if k else math.inf
        se_t2 = math.sqrt(q * (1 - q) / config.trials)
        ratio_hat = econd_hat / ex_hat
        regime = stylized_regime(sp.p)
        rows.append({
            "grid_value": sp.p,
            "trials": config.trials,
            "accepted": k,
            "EX_hat": ex_hat,
            "EX_closed": ex,
            "EX_se": se_ex,
            "ratio_hat": ratio_hat,
            "ratio_closed": ratio,
            "ratio_se": se_ratio,
            "ratio_within_3sigma": abs(ratio_hat - ratio) <= 3 * se_ratio,
            "p_large_hat": pl_hat,
            "p_large_closed": pl,
            "p_large_se": se_pl,
            "p_large_within_3sigma": abs(pl_hat - pl) <= 3 * se_pl,
            "type2_freq": float(type2.mean()),
            "type2_closed": q,
            "type2_se": se_t2,
            "type2_within_3sigma": abs(float(type2.mean()) - q) <= 3 * se_t2,
            "regime": regime,
            "verdict": REGIME_VERDICT[regime],
        })
    summary = {"regimes": {r["grid_value"]: r["verdict"] for r in rows},
               "status": "ok" if all(r["accepted"] >= 100 for r in rows) else "inconclusive"}
    return ExperimentResult(config, rows, summary)


def run_ld_rate(config):
    """Exact chi-square tails against the Cramér rate, for each ``n`` in the grid."""
    sigma2 = config.point.sigma2
    ratios = config.options.get("t_ratios", [1.5, 2.0, 3.0])
    rows = []
    for n in config.grid:
        n = int(n)
        for u in ratios:
            emp = -chi2_log_upper_tail(n, n * u) / n
            rate = gaussian_ld_rate(sigma2, u * sigma2)
            rows.append({
                "grid_value": n,
                "t_ratio": float(u),
                "neg_log_tail_per_n": emp,
                "ld_rate": rate,
                "gap": abs(emp - rate),
                "gap_bound": 5 * math.log(n) / n,
            })
    return ExperimentResult(config, rows, {"rows": len(rows)})


def emit_rate_curves(sigma2, D_grid):
    """Rows ``(D/sigma2, R*, R0, gap)`` comparing the two achievable-rate curves."""
    rows = []
    for D in D_grid:
        r_star, r0 = shannon_rates(sigma2, D)
        rows.append({"D_ratio": D / sigma2, "Rstar": r_star, "R0": r0, "gap": r0 - r_star})
    return rows


def run_rate_curves(config):
    sigma2 = config.point.sigma2
    rows = emit_rate_curves(sigma2, [float(r) * sigma2 for r in config.grid])
    return ExperimentResult(config, rows, {"x_star": critical_ratio()})


RUNNERS = {
    "pe_sweep": run_pe_sweep,
    "second_mom": run_second_mom,
    "stylized": run_stylized,
    "ld_rate": run_ld_rate,
    "rate_curves": run_rate_curves,
}


def run_experiment(config, *, budget=DEFAULT_BUDGET):
    t0 = time.perf_counter()
    runner = RUNNERS[config.kind]
    if config.kind in ("pe_sweep", "second_mom"):
        result = runner(config, budget=budget)
    else:
        result = runner(config)
    result.runtime_ms = 1e3 * (time.perf_counter() - t0)
    return result


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows, columns=None):
    columns = list(columns or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def write_outputs(result, out_dir):
    """Write ``results.csv`` (plus ``trials.csv`` when records exist) and ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {"results": "results.csv"}
    (out_dir / "results.csv").write_text(rows_to_csv(result.rows))
    if result.trial_records:
        files["trials"] = "trials.csv"
        trial_rows = [{f: getattr(r, f) for f in TrialRecord.CSV_FIELDS} for r in result.trial_records]
        (out_dir / "trials.csv").write_text(rows_to_csv(trial_rows, TrialRecord.CSV_FIELDS))
    manifest = {
        "config": result.config.to_dict(),
        "config_hash": result.config.config_hash(),
        "artifact_version": __version__,
        "seed_algorithm": SEED_ALGORITHM,
        "files": files,
        "summary": _jsonable(result.summary),
        "runtime_ms": result.runtime_ms,
        "trial_runtime_ms_total": sum(r.runtime_ms for r in result.trial_records),
    }
    (out_dir / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2) + "\n")
    return out_dir / "results.csv", out_dir / "manifest.json"
