import csv
import io
import json
import math

import numpy as np
import pytest

from sparcrd import experiments
from sparcrd._validation import BudgetError, DomainError
from sparcrd.experiments import (
    ConfigError,
    ExperimentConfig,
    SeedLedger,
    emit_rate_curves,
    load_config,
    run_experiment,
    second_moment_report,
    trial_seed,
    wilson_interval,
    write_outputs,
)
from sparcrd.theory import critical_ratio


def cfg(**kw):
    return ExperimentConfig.from_dict(kw)


PE_BASE = dict(kind="pe_sweep", params={"n": 20, "L": 2},
               point={"sigma2": 1.0, "D": 0.7, "gamma2": 2.5}, base_seed=5)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_config_errors_list_every_field():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"kind": "nope", "trials": 0, "grid": [], "base_seed": -1,
                                    "colour": "red"})
    fields = {e.split(":")[0] for e in info.value.errors}
    assert fields == {"kind", "trials", "grid", "base_seed", "colour"}


def test_config_param_errors():
    with pytest.raises(ConfigError) as info:
        cfg(kind="second_mom", params={"n": 12, "L": 2, "M": 4, "Q": 1}, trials=2, grid=[0],
            point={"sigma2": 1.0, "D": 2.0})
    fields = {e.split(":")[0] for e in info.value.errors}
    assert fields == {"params", "point"}


def test_json_and_toml_configs_agree(tmp_path):
    d = dict(kind="stylized", params={"n": 6, "p": 3.0}, trials=10, base_seed=3, grid=[0.5, 3.0])
    (tmp_path / "c.json").write_text(json.dumps(d))
    (tmp_path / "c.toml").write_text(
        'kind = "stylized"\ntrials = 10\nbase_seed = 3\ngrid = [0.5, 3.0]\n'
        "[params]\nn = 6\np = 3.0\n")
    a, b = load_config(tmp_path / "c.json"), load_config(tmp_path / "c.toml")
    assert a == b and a.config_hash() == b.config_hash()
    (tmp_path / "bad.toml").write_text("kind = ")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")


def test_seeds_deterministic_and_collision_checked(monkeypatch):
    assert trial_seed(1, 2, 3) == trial_seed(1, 2, 3)
    assert len({trial_seed(1, g, t) for g in range(10) for t in range(1000)}) == 10_000
    ledger = SeedLedger(0)
    ledger(0, 0)
    monkeypatch.setattr(experiments, "trial_seed", lambda *a: 7)
    ledger = SeedLedger(0)
    ledger(0, 0)
    with pytest.raises(RuntimeError, match="collision"):
        ledger(0, 1)


def test_wilson_interval_closed_form():
    for k, n in ((0, 200), (3, 50), (25, 50), (200, 200)):
        z = 1.959963984540054
        p = k / n
        centre = (p + z * z / (2 * n)) / (1 + z * z / n)
        half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
        lo, hi = wilson_interval(k, n)
        assert lo == pytest.approx(max(0.0, centre - half), abs=1e-9)
        assert hi == pytest.approx(min(1.0, centre + half), abs=1e-9)


# ---------------------------------------------------------------------------
# pe sweep
# ---------------------------------------------------------------------------


def test_pe_sweep_rejects_rate_drift_and_budget():
    with pytest.raises(DomainError, match="drift"):
        run_experiment(cfg(**PE_BASE, trials=2, grid=[0.03]))
    with pytest.raises(BudgetError):
        run_experiment(cfg(**PE_BASE, trials=2, grid=[0.8]), budget=1000)


def _one_codeword_oracle(trials, n, D, g2, slack, seed):
    """Error rate of a one-codeword book simulated directly with numpy."""
    rng = np.random.default_rng(seed)
    errors = 0
    for _ in range(trials):
        S = rng.normal(size=n)
        p = float(S @ S) / n
        if p >= g2:
            errors += 1
            continue
        if p <= D:
            continue
        width = (g2 - D) / n
        i = min(max(math.ceil((p - D) / width), 1), n)
        q = D + width * (i - 0.5)
        cw = math.sqrt(q - D) * rng.normal(size=n)
        r = S - cw
        errors += float(r @ r) / n > D + slack
    return errors / trials


def test_pe_sweep_zero_rate_matches_one_codeword_oracle():
    T = 3000
    res = run_experiment(cfg(**PE_BASE, trials=T, grid=[0.0]))
    row = res.rows[0]
    assert row["M"] == 1
    oracle = _one_codeword_oracle(T, 20, 0.7, 2.5, res.summary["slack"], seed=99)
    p = row["pe_slack"]
    se = math.sqrt(p * (1 - p) / T + oracle * (1 - oracle) / T)
    assert abs(p - oracle) <= 3 * se


def test_pe_sweep_schema_and_records():
    res = run_experiment(cfg(**PE_BASE, trials=20, grid=[0.0, 0.3]))
    assert [r["grid_value"] for r in res.rows] == [0.0, 0.3]
    for row in res.rows:
        assert row["ci95_low"] <= row["pe_slack"] <= row["ci95_high"]
        assert row["errors_strict"] >= row["errors_slack"]
    assert len(res.trial_records) == 40
    assert res.summary["chain_failures"] == 0
    assert {r.status for r in res.trial_records} <= {"coded", "trivial_zero", "norm_overflow"}


# ---------------------------------------------------------------------------
# second moment
# ---------------------------------------------------------------------------

SM_BASE = dict(kind="second_mom", params={"n": 12, "L": 2, "M": 4},
               point={"sigma2": 1.0, "D": 0.7, "rho2": 1.0, "gamma2": 2.0}, grid=[0])


def test_second_moment_degenerate_threshold():
    res = run_experiment(cfg(**SM_BASE, trials=300, base_seed=1, options={"threshold": 2.0}))
    s = res.summary
    assert s["EX_hat"] == 16 and s["EX2_hat"] == 256 and s["EcondX_hat"] == 16
    assert s["identity_residual"] == 0 and s["identity_residual_sigma"] == 0
    assert s["status"] == "ok" and s["p_success"] == 1.0


def test_second_moment_inconclusive_when_few_acceptances():
    res = run_experiment(cfg(**SM_BASE, trials=200, base_seed=2))
    assert res.summary["accepted"] < 100 and res.summary["status"] == "inconclusive"


def test_second_moment_report_arithmetic():
    X = np.array([0, 2, 2, 4, 0])
    u1 = np.array([False, True, False, True, False])
    r = second_moment_report(X, u1, min_accept=1)
    assert r["EX_hat"] == 1.6 and r["EX2_hat"] == 24 / 5 and r["EcondX_hat"] == 3.0
    assert r["identity_residual"] == pytest.approx(24 / 5 - 1.6 * 3.0)


def test_solution_symmetry_and_rotation_invariance():
    T = 10_000
    const = run_experiment(cfg(**SM_BASE, trials=T, base_seed=11)).summary
    freq = np.array(const["u_freq"])
    pbar = freq.mean()
    se = math.sqrt(pbar * (1 - pbar) / T)
    for i in (0, 3, 6, 9, 15):
        assert abs(freq[i] - pbar) <= 3 * se * math.sqrt(2)
    rand = run_experiment(cfg(**SM_BASE, trials=T, base_seed=12,
                              options={"source": "random"})).summary
    p1, p2 = const["p_success"], rand["p_success"]
    assert abs(p1 - p2) <= 3 * math.sqrt(p1 * (1 - p1) / T + p2 * (1 - p2) / T)


def test_second_moment_geometry_cap():
    with pytest.raises(DomainError):
        run_experiment(cfg(**{**SM_BASE, "params": {"n": 12, "L": 3, "M": 17}}, trials=1))


# ---------------------------------------------------------------------------
# stylized, ld rate, curves
# ---------------------------------------------------------------------------


def test_stylized_report():
    res = run_experiment(cfg(kind="stylized", params={"n": 4, "p": 1.0}, trials=3000,
                             base_seed=4, grid=[0.5, 1.5, 3.0]))
    assert [r["verdict"] for r in res.rows] == ["condensation", "fixable", "succeeds"]
    for r in res.rows:
        assert r["type2_within_3sigma"]
        assert r["EX_closed"] == pytest.approx(
            (1 - math.exp(-4 * r["grid_value"])) * math.exp(4)
            + math.exp(-4 * r["grid_value"]) * math.exp(8))


def test_ld_rate_rows():
    res = run_experiment(cfg(kind="ld_rate", point={"sigma2": 2.0}, grid=[100, 400, 1600]))
    assert len(res.rows) == 9
    for u in (1.5, 2.0, 3.0):
        gaps = [r["gap"] for r in res.rows if r["t_ratio"] == u]
        assert gaps[0] > gaps[1] > gaps[2]


def test_rate_curves():
    x = critical_ratio()
    rows = emit_rate_curves(1.0, [0.1, 0.5, x, x * (1 + 1e-11), x * (1 - 1e-11)])
    assert rows[0]["gap"] == 0.0
    assert rows[1]["gap"] == pytest.approx(0.5 - 0.5 * math.log(2), abs=1e-15)
    assert all(abs(r["gap"]) < 1e-10 for r in rows[2:])
    grid = np.linspace(0.01, 0.99, 500)
    gaps = [r["gap"] for r in emit_rate_curves(3.0, 3.0 * grid)]
    assert min(gaps) >= 0 and max(abs(np.diff(gaps))) < 0.01
    with pytest.raises(DomainError):
        emit_rate_curves(1.0, [1.0])


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------


def test_outputs_byte_identical_and_manifest(tmp_path):
    c = cfg(**PE_BASE, trials=10, grid=[0.0, 0.3])
    write_outputs(run_experiment(c), tmp_path / "a")
    write_outputs(run_experiment(c), tmp_path / "b")
    for name in ("results.csv", "trials.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config_hash"] == c.config_hash()
    assert manifest["seed_algorithm"] == experiments.SEED_ALGORITHM
    assert "runtime_ms" in manifest
    for name in ("results.csv", "trials.csv"):
        header = next(csv.reader(io.StringIO((tmp_path / "a" / name).read_text())))
        assert not any("runtime" in h for h in header)


def test_csv_round_trips_doubles():
    text = experiments.rows_to_csv([{"a": 0.1 + 0.2, "b": True, "c": None, "d": 3}])
    row = next(csv.DictReader(io.StringIO(text)))
    assert float(row["a"]) == 0.1 + 0.2
    assert (row["b"], row["c"], row["d"]) == ("true", "", "3")
