import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgpump import experiments as E
from kgpump.config import Config

QUICK = ["run.t2_end=2.0", "grid.x_min=-600", "grid.x_max=600", "grid.nx=6144",
         "regions.pre_threshold=0.5"]


@pytest.fixture(scope="module")
def report_01():
    return E.compare_regimes(Config().override(QUICK))


def test_region_membership():
    pre, lay, post = E.RegionSpec("pre", 5), E.RegionSpec("layer", 3), E.RegionSpec("post", 5)
    eps = 0.04
    l = np.array([-1.0, -0.3, 0.0, 0.3, 1.0])
    assert list(pre.contains(l, eps)) == [True, True, False, False, False]
    assert list(lay.contains(l, eps)) == [False, True, True, True, False]
    assert list(post.contains(l, eps)) == [False, False, False, True, True]
    assert E.RegionSpec("pre", 5, threshold=0.5).bound(eps) == 0.5


@settings(max_examples=25, deadline=None)
@given(eps=st.floats(0.01, 0.2))
def test_default_margins_overlap(eps):
    # regions from the default margins always share their seams in this range
    E.check_seams(E.regions_from(Config()), eps)


def test_seam_gap_is_an_error():
    regions = (E.RegionSpec("pre", 5), E.RegionSpec("layer", 1), E.RegionSpec("post", 5))
    with pytest.raises(E.ExperimentError):
        E.check_seams(regions, 0.2)


def test_zero_force_all_errors_zero():
    cfg = Config().override(["force.profile=zero", "run.epsilon=0.2", "run.t2_end=2.0",
                             "regions.pre_threshold=0.5"])
    rep = E.compare_regimes(cfg)
    for r in rep.regions.values():
        assert r.rel_l2 == 0 and r.rel_linf == 0


def test_report_fields(report_01):
    rep = report_01
    d = rep.to_dict()
    json.dumps(d, allow_nan=False)
    assert set(d["regions"]) == {"pre", "layer", "post"}
    for r in d["regions"].values():
        assert r["rel_l2"] >= 0 and r["rel_linf"] >= 0 and r["n_points"] > 0
    assert d["epsilon"] == 0.1 and len(d["config_hash"]) == 16
    assert "runtime_s" not in d and "runtime_s" in rep.to_dict(timing=True)
    assert "| pre |" in rep.to_markdown()


def test_pre_region_error_within_first_correction(report_01):
    pre = report_01.regions["pre"]
    assert pre.rel_l2 < 0.15
    assert pre.extra["leading_modulus_rel_l2"] < 0.15


def test_seam_consistency(report_01):
    assert set(report_01.seams) == {"pre-layer", "layer-post"}
    for s in report_01.seams.values():
        assert s["ok"], s


def test_report_deterministic(report_01):
    again = E.compare_regimes(Config().override(QUICK))
    assert json.dumps(again.to_dict(), sort_keys=True) == json.dumps(report_01.to_dict(), sort_keys=True)


def test_post_amplitude_discriminates_factor(report_01):
    post = report_01.regions["post"]
    # predicted with the quadrature amplitude; twice that is far off
    assert abs(post.peak_direct / post.peak_predicted - 1) < 0.2
    assert abs(post.peak_direct / (2 * post.peak_predicted) - 1) > 0.2


def test_x2_dependent_phase_marks_layer_and_post_unsupported():
    cfg = Config().override(["phase.name=quadratic_tilted", "phase.a=0.5", "run.epsilon=0.2",
                             "run.t2_end=0.87", "regions.pre_threshold=0.5"])
    rep = E.compare_regimes(cfg)
    assert rep.regions["pre"].supported and rep.regions["pre"].n_points > 0
    assert not rep.regions["layer"].supported and not rep.regions["post"].supported
    assert "unsupported" in rep.to_markdown()


def test_amplitude_ratio_scales_like_inverse_eps():
    cfg = Config().override(QUICK + ["run.gamma=1.0", "regions.post_threshold=0.45"])
    ratios = []
    for eps in (0.2, 0.1):
        rep = E.compare_regimes(cfg.override([f"run.epsilon={eps}"]))
        ratios.append(rep.regions["post"].peak_direct / rep.regions["pre"].peak_direct)
    assert abs((ratios[1] / ratios[0]) / 2.0 - 1) < 0.3


def test_sweep_records_failures_and_continues():
    cfg = Config().override(["run.epsilon=0.2", "run.t2_end=0.87", "regions.pre_threshold=0.5",
                             "phase.name=quadratic_tilted", "phase.a=0.5"])
    table = E.epsilon_sweep(cfg, [0.2, 0.6])
    assert table.rows[0]["status"] == "ok"
    assert table.rows[1]["status"].startswith("error")
    assert table.slope is None and "slope undefined" in table.flags


def test_zero_force_sweep_flagged():
    cfg = Config().override(["force.profile=zero", "run.t2_end=2.0", "regions.pre_threshold=0.5"])
    table = E.epsilon_sweep(cfg, [0.2, 0.1])
    assert all(r["status"] == "zero" for r in table.rows)
    assert table.slope is None and "slope undefined" in table.flags
    json.dumps(table.to_dict(), allow_nan=False)


def test_scenario_requires_focusing():
    with pytest.raises(E.FocusingError):
        E.soliton_scenario(Config().override(["run.gamma=1.0"]))


def test_scenario_zero_force_empty():
    rep = E.soliton_scenario(Config().override(["force.profile=zero", "run.gamma=-1.0"]))
    assert rep.empty and rep.arms == []
    assert "empty report" in rep.to_markdown()
