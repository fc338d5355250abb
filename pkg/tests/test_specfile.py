import json
from pathlib import Path

import numpy as np
import pytest

from affine_mart.model import FiniteAtomic, SeriesAtomic
from affine_mart.reference import CATALOG
from affine_mart.specfile import SpecError, dump_spec, load_spec, params_from_dict

SPECS = Path(__file__).resolve().parent.parent / "specs"


def test_dirac_series_spec():
    p = load_spec(SPECS / "dirac_series.json")
    assert (p.m, p.n) == (1, 0)
    assert isinstance(p.kappa[1], SeriesAtomic)
    assert p.kappa[1].weight_expr.text == "1/n^2"


def test_empty_kappa_means_zero_measures():
    p = params_from_dict({"m": 1, "n": 1, "kappa": [{}, [], None]})
    assert all(isinstance(mu, FiniteAtomic) and mu.is_zero for mu in p.kappa)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_round_trip_is_verbatim(name):
    text = dump_spec(CATALOG[name]())
    assert dump_spec(params_from_dict(json.loads(text))) == text


def test_expression_strings_survive_round_trip():
    doc = {"m": 1, "n": 0, "kappa": [{}, {"kind": "series", "point_exprs": ["n"],
                                          "weight_expr": "1/( n^2 )", "tail": {"c": 1, "p": 2}}]}
    out = json.loads(dump_spec(params_from_dict(doc)))
    assert out["kappa"][1]["weight_expr"] == "1/( n^2 )"


def test_errors_name_the_key(tmp_path):
    bad = {"m": 1, "n": 0, "beta": [[0.0, 1.0], [0.0]],
           "kappa": [{}, {"kind": "series", "point_exprs": ["n"], "weight_expr": "1/n^^2"}]}
    with pytest.raises(SpecError) as err:
        params_from_dict(bad)
    keys = {issue.key for issue in err.value.issues}
    assert "beta" in keys and "kappa[1]" in keys


def test_unknown_kind_and_keys():
    with pytest.raises(SpecError) as err:
        params_from_dict({"m": 1, "n": 0, "kappa": [{}, {"kind": "gaussian"}], "sigma": 1})
    keys = {issue.key for issue in err.value.issues}
    assert {"kappa[1].kind", "sigma"} <= keys


def test_invalid_json_reports_the_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"m": 1,\n "n": }\n')
    with pytest.raises(SpecError, match="line 2"):
        load_spec(path)


def test_dimensions_are_checked():
    with pytest.raises(SpecError, match="alpha"):
        params_from_dict({"m": 1, "n": 1, "alpha": np.zeros((2, 2, 2)).tolist()})
