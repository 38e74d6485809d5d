import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vaultcredit import aggregate as ag
from vaultcredit.errors import ConfigError

unit = st.floats(0.0, 1.0)


@pytest.fixture(scope="module")
def shipped():
    return ag.NormalizationConfig.load()


def test_shipped_spec_is_marked_uncalibrated(shipped):
    assert not shipped.calibrated
    assert "UNCALIBRATED" in shipped.note
    assert set(shipped.specs) == set(ag.METRICS)


def test_upper_breakpoint_scores_one(shipped):
    spec = shipped.specs["V1"]
    assert ag.normalize(spec.breakpoints[-1][0], spec).score == 1.0


def test_certain_boundary_hit_scores_zero(shipped):
    spec = shipped.specs["V3"]
    assert not spec.higher_is_safer
    assert ag.normalize(1.0, spec).score == 0.0


def test_undefined_scores_zero_with_flag(shipped):
    r = ag.normalize(None, shipped.specs["V5"])
    assert r.score == 0.0 and r.worst_case


def test_interpolation_and_clamp():
    spec = ag.NormalizationSpec("V1", ((1.0, 0.0), (2.0, 1.0)), True)
    assert ag.normalize(1.5, spec).score == pytest.approx(0.5)
    assert ag.normalize(-3.0, spec).score == 0.0
    assert ag.normalize(9.0, spec).score == 1.0
    assert ag.normalize(float("inf"), spec).score == 1.0


@pytest.mark.parametrize("bp,direction", [
    (((1.0, 0.0),), True),
    (((1.0, 0.0), (1.0, 1.0)), True),
    (((1.0, 0.0), (2.0, 1.0)), False),
    (((1.0, 0.0), (2.0, 0.5)), True),
    (((1.0, 0.0), (2.0, 1.5)), True),
])
def test_malformed_specs(bp, direction):
    with pytest.raises(ConfigError):
        ag.NormalizationSpec("V1", bp, direction)


def test_config_missing_metric(tmp_path):
    p = tmp_path / "n.json"
    p.write_text(json.dumps({"metrics": {"V1": {"breakpoints": [[0, 0], [1, 1]], "higher_is_safer": True}}}))
    with pytest.raises(ConfigError):
        ag.NormalizationConfig.load(p)


@given(st.floats(-10, 10), st.floats(-10, 10), st.booleans())
def test_normalize_monotone(a, b, safer):
    spec = ag.NormalizationSpec("X", ((0.0, 0.0 if safer else 1.0), (0.5, 0.3 if safer else 0.7), (2.0, 1.0 if safer else 0.0)), safer)
    lo, hi = sorted((a, b))
    s_lo, s_hi = ag.normalize(lo, spec).score, ag.normalize(hi, spec).score
    assert (s_lo <= s_hi) if safer else (s_lo >= s_hi)


def test_normalize_idempotent_on_endpoints():
    spec = ag.NormalizationSpec("X", ((0.0, 0.0), (1.0, 1.0)), True)
    for x in (0.0, 1.0):
        assert ag.normalize(ag.normalize(x, spec).score, spec).score == x


class TestVcs:
    def test_zero_score_kills_mult(self):
        r = ag.vcs([0.9, 0.0, 1.0, 1.0, 1.0])
        assert r.vcs_mult == 0.0 and r.worst_link == "V2"

    def test_all_ones(self):
        r = ag.vcs([1.0] * 5)
        assert (r.vcs_mult, r.vcs_add) == (1.0, 1.0)

    def test_uniform_point_nine(self):
        r = ag.vcs([0.9] * 5)
        assert r.vcs_mult == pytest.approx(0.59049, abs=1e-15)
        assert r.vcs_add == pytest.approx(0.9, abs=1e-15)

    def test_tie_break_first_index(self):
        assert ag.vcs([0.5, 0.2, 0.2, 0.9, 0.9]).worst_link == "V2"

    def test_weight_sum_checked(self):
        with pytest.raises(ConfigError):
            ag.vcs([0.5] * 5, [0.2, 0.2, 0.2, 0.2, 0.3])

    @given(st.lists(unit, min_size=5, max_size=5))
    def test_mult_below_add(self, s):
        r = ag.vcs(s)
        assert r.vcs_mult <= r.vcs_add + 1e-15

    @given(st.lists(unit, min_size=5, max_size=5), st.integers(0, 4), unit)
    def test_monotone(self, s, i, bump):
        up = list(s)
        up[i] = max(s[i], bump)
        a, b = ag.vcs(s), ag.vcs(up)
        assert b.vcs_mult >= a.vcs_mult and b.vcs_add >= a.vcs_add - 1e-15

    @pytest.mark.parametrize("x", [0.0, 1.0])
    def test_equality_only_at_binary_equal_scores(self, x):
        r = ag.vcs([x] * 5)
        assert r.vcs_mult == r.vcs_add

    def test_equal_interior_scores_are_strict(self):
        r = ag.vcs([0.5] * 5)
        assert r.vcs_mult < r.vcs_add
