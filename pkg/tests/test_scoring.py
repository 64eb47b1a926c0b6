"""Cosine scoring against the reference corpus and score-panel assembly."""

import datetime as dt

import numpy as np
import pandas as pd
import pytest

from conftest import planted_filing_scores
from cyrisk.errors import DataError
from cyrisk.scoring import (
    EmptyFilingError,
    FilingParagraphScores,
    ReferenceCorpus,
    ReferenceDescription,
    ScoredParagraph,
    ZeroVectorError,
    build_score_panel,
    cosine_similarity,
    filing_score,
    load_reference_descriptions,
    long_run_score,
    paragraph_score,
    read_score_panel,
    top_percentile_count,
    write_score_panel,
)


def make_refs(vectors):
    labels = [
        ReferenceDescription("tac", "tech", f"sub{i}", f"ref:{i}")
        for i in range(len(vectors))
    ]
    return ReferenceCorpus(labels, np.asarray(vectors, dtype=float))


class TestCosine:
    def test_identity(self):
        v = np.array([1.0, 2.0, -3.0])
        assert cosine_similarity(v, v) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_antipodal(self):
        v = np.array([0.3, -0.7, 2.0])
        assert cosine_similarity(v, -v) == pytest.approx(-1.0)

    def test_zero_vector(self):
        with pytest.raises(ZeroVectorError):
            cosine_similarity(np.zeros(3), np.ones(3))

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            v1, v2 = rng.normal(size=8), rng.normal(size=8)
            c = rng.uniform(0.01, 100)
            assert cosine_similarity(c * v1, v2) == pytest.approx(
                cosine_similarity(v1, v2), abs=1e-12
            )


class TestParagraphScore:
    def test_self_in_references(self):
        v = np.array([0.5, 1.0, -0.2])
        refs = make_refs([[1, 0, 0], v])
        score, label = paragraph_score(v, refs)
        assert score == pytest.approx(1.0)
        assert label.sub_technique == "sub1"

    def test_all_negative_clamps_to_zero(self):
        refs = make_refs([[-1.0, 0.0], [-0.7, -0.7]])
        score, _ = paragraph_score(np.array([1.0, 0.0]), refs)
        assert score == 0.0

    def test_max_and_argmax(self):
        a = np.array([1.0, 0.0])

        def at_angle(cos):
            return np.array([cos, np.sqrt(1 - cos**2)])

        refs = make_refs([at_angle(0.2), -a, at_angle(0.5)])
        score, label = paragraph_score(a, refs)
        assert score == pytest.approx(0.5)
        assert label.sub_technique == "sub2"

    def test_scale_invariant(self):
        rng = np.random.default_rng(0)
        refs = make_refs(rng.normal(size=(4, 6)))
        v = rng.normal(size=6)
        s1, _ = paragraph_score(v, refs)
        s2, _ = paragraph_score(17.5 * v, refs)
        assert s1 == pytest.approx(s2, abs=1e-12)


class TestFilingScore:
    def test_top_counts(self):
        assert top_percentile_count(638) == 6
        assert top_percentile_count(50) == 1
        assert top_percentile_count(200) == 2
        assert top_percentile_count(1) == 1

    def test_unique_max_when_small(self):
        paragraphs = [ScoredParagraph(i, s) for i, s in enumerate([0.1] * 49 + [0.9])]
        fs = filing_score(paragraphs)
        assert fs.score == pytest.approx(0.9)
        assert fs.top_paragraph_ids == (49,)

    def test_mean_of_top_two(self):
        scores = [0.3] * 198 + [0.9, 0.8]
        paragraphs = [ScoredParagraph(i, s) for i, s in enumerate(scores)]
        fs = filing_score(paragraphs)
        assert fs.score == pytest.approx(0.85)
        assert set(fs.top_paragraph_ids) == {198, 199}

    def test_ties_broken_by_earlier_ordinal(self):
        scores = [0.5] * 200
        paragraphs = [ScoredParagraph(i, s) for i, s in enumerate(scores)]
        fs = filing_score(paragraphs)
        assert fs.top_paragraph_ids == (0, 1)

    def test_monotone_in_any_paragraph(self):
        rng = np.random.default_rng(2)
        base = rng.uniform(0, 1, 120)
        fs0 = filing_score([ScoredParagraph(i, s) for i, s in enumerate(base)])
        for bump_at in (0, 17, 100):
            bumped = base.copy()
            bumped[bump_at] = min(1.0, bumped[bump_at] + 0.2)
            fs1 = filing_score([ScoredParagraph(i, s) for i, s in enumerate(bumped)])
            assert fs1.score >= fs0.score - 1e-15

    def test_item1a_share(self):
        paragraphs = [ScoredParagraph(i, 0.1, "other") for i in range(198)]
        paragraphs += [ScoredParagraph(198, 0.9, "item1a"), ScoredParagraph(199, 0.8, "other")]
        fs = filing_score(paragraphs)
        assert fs.item1a_share == pytest.approx(0.5)

    def test_empty(self):
        with pytest.raises(EmptyFilingError):
            filing_score([])


class TestLongRunScore:
    @pytest.mark.parametrize(
        "history,expected",
        [([0.5], 0.5), ([0.4, 0.6], 0.5), ([0.5, 0.6, 0.7], 0.6)],
    )
    def test_expanding_mean(self, history, expected):
        assert long_run_score(history) == pytest.approx(expected)


def one_paragraph_filing(cik, date, score, section="other"):
    return FilingParagraphScores(
        cik, date, (ScoredParagraph(0, score, section),)
    )


class TestScorePanel:
    MONTHS = ["2020-02", "2020-12", "2021-06"]

    def two_filing_firm(self):
        return [
            one_paragraph_filing(7, dt.date(2020, 3, 1), 0.5),
            one_paragraph_filing(7, dt.date(2021, 3, 1), 0.6),
        ]

    def test_recency_rule(self):
        panel = build_score_panel(self.two_filing_firm(), self.MONTHS)
        by_month = panel.set_index("month")["score"]
        assert by_month["2020-12"] == pytest.approx(0.5)
        assert by_month["2021-06"] == pytest.approx(0.6)

    def test_absent_before_first_filing(self):
        panel = build_score_panel(self.two_filing_firm(), self.MONTHS)
        assert "2020-02" not in set(panel["month"])

    def test_long_run_mode(self):
        panel = build_score_panel(self.two_filing_firm(), self.MONTHS, mode="long_run")
        by_month = panel.set_index("month")["score"]
        assert by_month["2021-06"] == pytest.approx(0.55)

    def test_exclude_item1a_recomputes(self):
        filings = [
            FilingParagraphScores(
                9,
                dt.date(2020, 3, 1),
                (
                    ScoredParagraph(0, 0.9, "item1a"),
                    ScoredParagraph(1, 0.4, "other"),
                ),
            )
        ]
        full = build_score_panel(filings, ["2020-12"])
        no_1a = build_score_panel(filings, ["2020-12"], section_filter="exclude_item1a")
        assert full["score"].iloc[0] == pytest.approx(0.9)
        assert no_1a["score"].iloc[0] == pytest.approx(0.4)

    def test_scores_stay_in_unit_interval(self):
        panel = build_score_panel(self.two_filing_firm(), self.MONTHS, mode="long_run")
        assert ((panel["score"] >= 0) & (panel["score"] <= 1)).all()

    def test_duplicate_filing_rejected(self):
        filings = [
            one_paragraph_filing(7, dt.date(2020, 3, 1), 0.5),
            one_paragraph_filing(7, dt.date(2020, 3, 1), 0.6),
        ]
        with pytest.raises(DataError):
            build_score_panel(filings, self.MONTHS)

    def test_csv_round_trip(self, tmp_path):
        panel = build_score_panel(self.two_filing_firm(), self.MONTHS)
        path = tmp_path / "panel.csv"
        write_score_panel(panel, path)
        again = read_score_panel(path)
        assert list(again.columns) == ["cik", "month", "score", "filing_date", "mode"]
        pd.testing.assert_frame_equal(panel, again)


class TestReferenceCorpus:
    def test_rejects_empty(self):
        with pytest.raises(DataError):
            ReferenceCorpus([], np.empty((0, 4)))

    def test_rejects_zero_vector(self):
        labels = [ReferenceDescription("t", "t", "s", "r")]
        with pytest.raises(ZeroVectorError):
            ReferenceCorpus(labels, np.zeros((1, 4)))

    def test_fixture_directory_loads(self, fixtures_dir):
        descriptions = load_reference_descriptions(fixtures_dir / "references")
        assert len(descriptions) == 6
        label, text = descriptions[0]
        assert label.sub_technique == "Web Cookies"
        assert "cookies" in text.lower()


class TestDirectionalSanity:
    def test_planted_reference_scores_higher(self):
        planted, control = planted_filing_scores(seed=0)
        assert planted > control
