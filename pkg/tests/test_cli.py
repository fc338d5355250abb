import json
from pathlib import Path

from affine_mart.cli import main

SPECS = Path(__file__).resolve().parent.parent / "specs"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_admissible(capsys):
    code, out, _ = run(capsys, "validate", SPECS / "dirac_series.json")
    assert code == 0 and "admissible" in out


def test_validate_lists_the_violated_bullet(capsys):
    code, out, _ = run(capsys, "validate", SPECS / "bad_gamma.json")
    assert code == 1 and "gamma_nonneg" in out


def test_martingale_of_final_example(capsys, tmp_path):
    report = tmp_path / "report.json"
    code, out, _ = run(capsys, "martingale", SPECS / "stoch_exp_series.json", "--component", 2,
                       "--form", "stoch-exp", "--json", report)
    assert code == 0 and "true martingale" in out
    doc = json.loads(report.read_text())
    assert set(doc) >= {"spec", "verdicts", "evidence", "versions"}
    assert doc["verdicts"]["true_martingale"] == "Holds"


def test_conservative_stable_half_prints_survival(capsys):
    code, out, _ = run(capsys, "conservative", SPECS / "stable_half.json")
    assert code == 1
    assert "survival probability" in out and "0.0432139" in out


def test_conservative_dirac_series(capsys):
    code, _, _ = run(capsys, "conservative", SPECS / "dirac_series.json")
    assert code == 0


def test_transform(capsys, tmp_path):
    report = tmp_path / "star.json"
    code, out, _ = run(capsys, "transform", SPECS / "stoch_exp_series.json", "--component", 2, "--json", report)
    assert code == 0 and "1.6449340668" in out
    star = json.loads(report.read_text())["details"]["star_spec"]
    assert star["kappa"][1]["weight_expr"].startswith("(")


def test_riccati(capsys):
    code, out, _ = run(capsys, "riccati", SPECS / "stable_half.json", "--u=-1", "--T", 1)
    assert code == 0 and "-7.686" in out


def test_truncate_flag(capsys, tmp_path):
    report = tmp_path / "v.json"
    code, _, _ = run(capsys, "validate", SPECS / "stoch_exp_series.json", "--truncate", 50, "--json", report)
    assert code == 0
    kappa = json.loads(report.read_text())["spec"]["kappa"][1]
    assert kappa["kind"] == "finite_atoms" and len(kappa["atoms"]) == 50


def test_simulate_cf(capsys):
    code, out, _ = run(capsys, "simulate", SPECS / "heston_like.json", "--x0", "0.5,0", "--T", 0.5,
                       "--steps", 100, "--paths", 5000, "--estimate", "cf", "--u", "0,1j", "--u", "0,-2j")
    assert code == 0 and "max |phi_emp - phi_model|" in out


def test_simulate_warns_about_infinite_variance(capsys):
    code, out, _ = run(capsys, "simulate", SPECS / "stoch_exp_series.json", "--truncate", 50, "--T", 0.2,
                       "--steps", 200, "--paths", 2000, "--estimate", "mean-exp", "--component", 2)
    assert code in (0, 1) and "second moment infinite" in out


def test_report_all(capsys):
    code, out, _ = run(capsys, "report-all", SPECS / "stoch_exp_series.json")
    assert "true_martingale(2): Holds" in out
    assert code in (0, 1, 2)


def test_usage_errors_exit_3(capsys, tmp_path):
    assert run(capsys, "validate", tmp_path / "missing.json")[0] == 3
    assert run(capsys, "bogus")[0] == 3
    assert run(capsys, "martingale", SPECS / "stoch_exp_series.json", "--form", "exp")[0] == 3
    assert run(capsys, "simulate", SPECS / "stable_half.json", "--paths", 10)[0] == 3


def test_exit_code_follows_verdict_only(capsys):
    # a plain simulation reports a summary and succeeds
    code, out, _ = run(capsys, "simulate", SPECS / "heston_like.json", "--x0", "0.5,0", "--T", 0.2,
                       "--steps", 50, "--paths", 2000)
    assert code == 0
