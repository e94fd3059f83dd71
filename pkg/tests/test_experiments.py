import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lacvar.errors import DomainError, ValidationError
from lacvar.experiments import (ExperimentConfig, compare_reports, delta_closed_form, discrete_average,
                                ensemble_member, ergodic_average, ergodic_shift_demo, hashed_function, jump_aggregate,
                                lemma_bridge_check, norm_ratio_experiment, pointwise_certificates, random_sequences,
                                shift, stability_check)
from lacvar.forms import Cutoff, sum_of_squares
from lacvar.ops import family_apply
from lacvar.seminorms import jump_count


def small(**kw):
    base = {"ensemble": {"members": 6, "support": 3, "radius": 4}, "lacunary": {"count": 3}}
    return ExperimentConfig.from_dict(base, **kw)


def test_config_validation(tmp_path):
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({"family": "nope"})
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({"r": 0.5})
    p = tmp_path / "c.toml"
    p.write_text('name = "t"\n[lacunary]\nvalues = [2, 5, 11, 23]\n')
    cfg = ExperimentConfig.from_toml(p)
    assert cfg.lambdas == (2, 5, 11, 23)
    assert cfg.hash() == ExperimentConfig.from_toml(p).hash()


def test_hypothesis_flag():
    assert not small().hypothesis_flag
    assert small(r=2.0).hypothesis_flag


def test_members_are_deterministic_and_indexed():
    cfg = small()
    a = ensemble_member(cfg, 3)
    b = ensemble_member(cfg.replace(ensemble={"members": 50}), 3)
    assert a.allclose(b, atol=0)
    assert not a.allclose(ensemble_member(cfg, 4), atol=0)


@pytest.mark.parametrize("kind", ["delta", "random_sparse", "rademacher_box", "wave_packet"])
def test_ensemble_kinds(kind):
    f = ensemble_member(small(ensemble={"kind": kind}), 0)
    assert f.n == 5 and len(f) >= 1


def test_delta_closed_form():
    cfg = small(ensemble={"kind": "delta", "members": 1})
    rep = norm_ratio_experiment(cfg)
    assert rep.metrics["variation_ratio"]["max"] == pytest.approx(delta_closed_form(cfg), rel=1e-12)


def test_report_is_reproducible():
    cfg = small()
    a = norm_ratio_experiment(cfg).to_dict()
    b = norm_ratio_experiment(cfg).to_dict()
    assert a == b
    assert json.loads(norm_ratio_experiment(cfg).to_json())["content_id"] == a["content_id"]


def test_compare_reports():
    cfg = small()
    a = norm_ratio_experiment(cfg).to_dict()
    out = compare_reports(a, a)
    assert out["variation_ratio"]["relative_change"] == 0.0


def test_stability_small():
    st_rep = stability_check(small(), lengths=(2, 3), members=(3, 6))
    rec = st_rep.record()
    assert set(rec) == {"variation_ratio", "jump_ratio"}
    assert len(st_rep.base.per_member["variation_ratio"]) == 3
    assert len(st_rep.larger.per_member["variation_ratio"]) == 6


def test_variety_family_runs():
    rep = norm_ratio_experiment(small(family="variety", form={"diagonal": [1, 1, 1, 1, -1]},
                                      lacunary={"c": 1.5, "count": 3}))
    assert math.isfinite(rep.metrics["variation_ratio"]["max"])


def test_pointwise_certificates_small():
    F = sum_of_squares(5)
    cfg = small()
    for i in range(5):
        fam = family_apply(F, Cutoff(), (4, 16, 64), ensemble_member(cfg, i))
        out = pointwise_certificates(fam)
        assert out["points"] > 0
        assert out["jump_square"] == out["vinf_lac"] == out["lac_variation"] == out["jump_variation"] == 0


@settings(max_examples=50)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=10))
def test_bridge_bounded(a):
    rep = lemma_bridge_check([np.array(a)], r=3)
    assert rep.max_ratio < 10


def test_bridge_needs_r_above_two():
    with pytest.raises(ValidationError):
        lemma_bridge_check(random_sequences(2, 4), r=2)


def test_jump_aggregate_example():
    # one jump of size 3: thresholds 2 and below count it
    assert jump_aggregate([0.0, 3.0]) == pytest.approx(math.sqrt(4 + 1 + sum(4.0**-k for k in range(1, 60))), rel=1e-9)
    assert jump_count([0.0, 3.0], 2.0).count == 1


def test_hashed_function_exact_and_float():
    f = hashed_function(1)
    g = hashed_function(1, exact=False)
    x = (3, -4, 5)
    assert isinstance(f(x), Fraction)
    assert float(f(x)) == pytest.approx(g(x))
    assert shift(1, 2, x) == (3, -6, 5)


def test_ergodic_equals_discrete_on_identity():
    f = hashed_function(2)
    pts = [(1, 0), (0, -1), (-1, 0), (0, 1)]
    w = [Fraction(1, 4)] * 4
    x = (5, 7)
    assert ergodic_average(f, w, pts, x) == discrete_average(f, w, pts, x)


def test_ergodic_demo_small():
    rep = ergodic_shift_demo(sum_of_squares(5), Cutoff(), cases=2, samples=3)
    assert rep.passed and rep.exact_mismatches == 0


def test_ergodic_window_domain():
    with pytest.raises(DomainError):
        ergodic_shift_demo(sum_of_squares(5), Cutoff(), window=4, cases=1)


def test_certificates_dedupe_and_sharp_case():
    from lacvar.ops import FamilyField

    # V_3 of (0,1,0,1) is 3^(1/3), attained by lam J_lam^(1/3) as lam -> 1 from below
    vals = np.array([[0.0, 1.0, 0.0, 1.0]] * 3 + [[0.5, 0.0, 0.0, 0.0]])
    fam = FamilyField((1, 2, 3, 4), np.arange(8).reshape(4, 2), vals)
    out = pointwise_certificates(fam)
    assert out["points"] == 4 and out["distinct_rows"] == 2
    assert sum(out[k] for k in ("jump_square", "vinf_lac", "lac_variation", "jump_variation")) == 0
