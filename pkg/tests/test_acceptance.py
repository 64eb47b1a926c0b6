"""Acceptance suite: one test per release criterion, each pinned to its
stated tolerance and wall-clock budget.  The terminal summary prints one
PASS/FAIL line per criterion (see conftest)."""

import filecmp
import io
import time

import numpy as np
import pandas as pd
import pytest

from conftest import (
    build_workspace,
    intra_inter_cosine,
    make_planted_economy,
    make_topic_corpus,
    planted_filing_scores,
    topic_labels,
)
from cyrisk import edgar
from cyrisk.apt.bayes import (
    BayesParams,
    cumulative_factor_prob,
    expanding_scan,
    marginal_likelihood,
    max_sharpe_sq,
    model_scan,
    q_scalar,
)
from cyrisk.apt.fmb import fama_macbeth
from cyrisk.apt.grs import grs_test
from cyrisk.apt.linreg import hac_regression_cov, newey_west_cov, ols, with_intercept
from cyrisk.cli import main
from cyrisk.embed import (
    TrainParams,
    load_model,
    negative_sampling_step,
    save_model,
    train,
)
from cyrisk.portfolio import sort_portfolios
from cyrisk.scoring import cosine_similarity, paragraph_score, top_percentile_count
from cyrisk.textprep import merge_paragraphs, normalize

from test_bayes import PARAMS as BAYES_PARAMS
from test_bayes import planted_factor_panel
from test_grs import dense_oracle, simulate_panel
from test_scoring import make_refs


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, (
                f"criterion exceeded its {self.seconds}s budget: {self.elapsed:.1f}s"
            )


@pytest.mark.acceptance("parser: golden index round-trip, malformed tolerance, field contract")
def test_parser_suite(fixtures_dir):
    with Budget(1.0):
        with open(fixtures_dir / "index" / "2022q4.idx") as fh:
            entries, warnings = edgar.parse_index_file(fh)
        assert len(entries) == 5 and not warnings

        line = "320193|APPLE INC|10-K|2022-10-28|edgar/data/320193/x.txt"
        entry = edgar.parse_index_line(line)
        assert (entry.cik, entry.company_name, entry.form_type) == (
            320193, "APPLE INC", "10-K",
        )
        assert edgar.format_index_line(entry) == line
        for e in entries:
            assert edgar.parse_index_line(edgar.format_index_line(e)) == e

        with open(fixtures_dir / "index" / "malformed.idx") as fh:
            kept, warned = edgar.parse_index_file(fh)
        assert len(kept) == 2 and len(warned) == 1

        with pytest.raises(edgar.MissingSeparatorError):
            edgar.parse_index_file(io.StringIO(""))


@pytest.mark.acceptance("preprocessing: idempotence, conservation, length bounds, corpus mean in [40,50]")
def test_preprocessing_suite():
    with Budget(5.0):
        rng = np.random.default_rng(7)
        samples = [
            "Cyber-Attack 2021! Systems failed.",
            "A.B.C  mixed   WHITESPACE\tand\ndigits 123",
            "",
        ]
        for s in samples:
            once = normalize(s)
            assert normalize(once) == once

        sentences = [["w"] * int(n) for n in rng.integers(4, 26, size=1000)]
        paras = merge_paragraphs(sentences, "doc", target_len=40)
        total_in = sum(len(s) for s in sentences)
        assert sum(len(p.tokens) for p in paras) == total_in
        max_sentence = max(len(s) for s in sentences)
        for p in paras[:-1]:
            assert len(p.tokens) >= 40
        for p in paras:
            assert len(p.tokens) <= 40 + max_sentence + 10
        mean_len = np.mean([len(p.tokens) for p in paras])
        assert 40 <= mean_len <= 50


@pytest.mark.acceptance("embedding: gradient check, 9/10 topic separation, bitwise rerun, save/load")
def test_embedding_suite(tmp_path):
    with Budget(180.0):
        rng = np.random.default_rng(0)
        for _ in range(10):
            d = int(rng.integers(4, 24))
            h = rng.normal(size=d)
            out = rng.normal(size=(int(rng.integers(2, 8)), d))
            labels = np.zeros(out.shape[0])
            labels[0] = 1.0
            _, grad_h, _ = negative_sampling_step(h, out, labels)
            eps = 1e-6
            for i in range(d):
                hp, hm = h.copy(), h.copy()
                hp[i] += eps
                hm[i] -= eps
                lp = negative_sampling_step(hp, out, labels)[0]
                lm = negative_sampling_step(hm, out, labels)[0]
                rel = abs((lp - lm) / (2 * eps) - grad_h[i]) / max(1e-8, abs(grad_h[i]))
                assert rel < 1e-5

        wins = 0
        labels3 = topic_labels(3, 30)
        model = None
        for seed in range(10):
            corpus = make_topic_corpus(seed)
            params = TrainParams(
                mode="dbow", vector_size=32, window=5, min_count=1,
                subsample_t=1.0, negative=5, epochs=30, initial_lr=0.025, seed=seed,
            )
            model = train(corpus, params)
            intra, inter = intra_inter_cosine(model, labels3)
            wins += intra > inter
        assert wins >= 9

        again = train(make_topic_corpus(9), model.params)
        assert np.array_equal(again.paragraph_matrix, model.paragraph_matrix)
        assert np.array_equal(again.word_output_matrix, model.word_output_matrix)

        path = tmp_path / "model.pvec"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.paragraph_matrix, model.paragraph_matrix)
        assert np.array_equal(loaded.word_output_matrix, model.word_output_matrix)
        assert loaded.vocab.token_ids == model.vocab.token_ids


@pytest.mark.acceptance("scoring: cosine exact cases, clamp, top-1% count, 9/10 planted-description wins")
def test_scoring_suite():
    with Budget(60.0):
        v = np.array([0.4, -1.2, 2.0])
        assert cosine_similarity(v, v) == pytest.approx(1.0)
        assert cosine_similarity(v, -v) == pytest.approx(-1.0)
        assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == 0.0

        refs = make_refs([[-1.0, 0.0], [-0.6, -0.8]])
        clamped, _ = paragraph_score(np.array([1.0, 0.0]), refs)
        assert clamped == 0.0

        assert top_percentile_count(638) == 6
        assert top_percentile_count(50) == 1

        wins = 0
        for seed in range(10):
            planted, control = planted_filing_scores(seed)
            wins += planted > control
        assert wins >= 9


@pytest.mark.acceptance("portfolio: weight sums, partition, VW=EW, 95% monotone planted sorts")
def test_portfolio_suite():
    with Budget(60.0):
        panel, scores, rf, _ = make_planted_economy(seed=0, n_firms=60, T=120)
        res = sort_portfolios(panel, scores, rf, q=5)
        for rec in res.membership:
            assert sum(rec["weights"]) == pytest.approx(1.0, abs=1e-12)
        by_month: dict[str, list] = {}
        for rec in res.membership:
            by_month.setdefault(rec["month"], []).extend(rec["members"])
        for members in by_month.values():
            assert len(members) == 60 and len(set(members)) == 60

        equal = panel.assign(mktcap=1.0)
        res_eq = sort_portfolios(equal, scores, rf, q=5)
        ret_wide = equal.pivot(index="month", columns="id", values="ret")
        membership = {
            (r["month"], r["quantile"]): [int(f) for f in r["members"]]
            for r in res_eq.membership
        }
        rebals = sorted({r["month"] for r in res_eq.membership})
        for month in list(res_eq.quantile_excess.index)[:12]:
            formation = [m for m in rebals if m < month][-1]
            for k in range(1, 6):
                ew = ret_wide.loc[month, membership[(formation, k)]].mean()
                assert res_eq.quantile_excess.loc[month, k] == pytest.approx(ew, abs=1e-12)

        monotone = 0
        for seed in range(20):
            p, s, r, _ = make_planted_economy(seed=seed, n_firms=100, T=600)
            result = sort_portfolios(p, s, r, q=5)
            means = [result.quantile_excess[k].mean() for k in range(1, 6)]
            monotone += all(np.diff(means) > 0)
        assert monotone / 20 >= 0.95


@pytest.mark.acceptance("econometrics: GRS oracle 1e-10, size in [3,7]%, NW L0=White, Bartlett hand case, FMB planted premium")
def test_econometrics_suite():
    with Budget(600.0):
        for seed in range(3):
            R, F = simulate_panel(seed)
            res = grs_test(R, F)
            stat, p = dense_oracle(R, F)
            assert res.statistic == pytest.approx(stat, abs=1e-10)
            assert res.p_value == pytest.approx(p, abs=1e-10)

        rejections = sum(
            grs_test(*simulate_panel(seed, T=600, N=20, K=5)).p_value < 0.05
            for seed in range(2000)
        )
        assert 0.03 <= rejections / 2000 <= 0.07

        rng = np.random.default_rng(1)
        X = with_intercept(rng.normal(size=(90, 2)))
        resid = ols(rng.normal(size=90), X).residuals
        nw0 = hac_regression_cov(X, resid, 0)
        xtx_inv = np.linalg.inv(X.T @ X)
        meat = (X * resid[:, None]).T @ (X * resid[:, None])
        assert np.allclose(nw0, xtx_inv @ meat @ xtx_inv, rtol=1e-14, atol=0)

        assert newey_west_cov(np.array([1.0, -1.0, 2.0]), 1)[0, 0] == pytest.approx(
            1.0, abs=1e-12
        )

        rng = np.random.default_rng(0)
        T, N = 600, 20
        z = (np.arange(N) - np.arange(N).mean()) / np.arange(N).std()
        returns = 0.005 + 0.002 * z[None, :] + rng.normal(0, 0.01, size=(T, N))
        fit = fama_macbeth(returns, None, np.tile(z, (T, 1)), names=["const", "score"])
        assert 0.001 <= fit.premium("score") <= 0.003
        assert fit.t_stat("score") > 2


@pytest.mark.acceptance("bayesian scan: 62 models, normalization, oracle Q/ML, planted factor, expanding=full")
def test_bayesian_suite():
    with Budget(300.0):
        a = (1 + 0.04) / 100
        k = (0.09 - 0.04) / 5
        direct = (1 + (a / (a + k)) * 0.1) ** (-49.0) * (1 + k / a) ** (-2.5)
        assert q_scalar(10, 0.04, 0.09, 100, 2, 5) == pytest.approx(direct, rel=1e-10)

        rng = np.random.default_rng(4)
        T = 60
        y = rng.normal(0.006, 0.05, T)
        x = 0.002 + 0.8 * y + rng.normal(0, 0.02, T)
        b_r = float(x @ y / (y @ y))
        s_r = float(((x - b_r * y) ** 2).sum())
        want = -0.5 * np.log(float(y @ y)) - (T - 1) / 2 * np.log(s_r)
        assert marginal_likelihood(y, x, restricted=True) == pytest.approx(
            want, abs=1e-10
        )

        entries = model_scan(planted_factor_panel(0), BAYES_PARAMS)
        assert len(entries) == 62
        posts = [e.posterior for e in entries if e.error is None]
        assert sum(posts) == pytest.approx(1.0, abs=1e-12)

        wins = 0
        for seed in range(20):
            scan = model_scan(planted_factor_panel(seed), BAYES_PARAMS)
            cum = cumulative_factor_prob(scan)
            wins += max(cum, key=cum.get) == "fa"
        assert wins / 20 >= 0.90

        panel = planted_factor_panel(3, T=90)
        table = expanding_scan(panel, BAYES_PARAMS, [panel.index[-1]])
        full = {e.model_key: e.posterior for e in model_scan(panel, BAYES_PARAMS)}
        for row in table.itertuples():
            assert row.posterior == full[row.model]


@pytest.mark.acceptance("end-to-end: full fixture pipeline < 5 min, twice-run outputs byte-identical")
def test_end_to_end_pipeline(tmp_path):
    with Budget(300.0):
        stages = ["ingest", "prep", "train", "score", "sort", "fmb", "grs", "bayes"]
        outputs = []
        for run_dir in ("run1", "run2"):
            root = tmp_path / run_dir
            root.mkdir()
            config = build_workspace(root, seed=11)
            for stage in stages:
                assert main(["--config", str(config), "--quiet", stage]) == 0, stage
            outputs.append(root / "out")

        names = sorted(
            p.name
            for p in outputs[0].iterdir()
            if p.suffix in (".csv", ".jsonl", ".pvec")
        )
        assert names, "pipeline produced no artifacts"
        for name in names:
            assert filecmp.cmp(outputs[0] / name, outputs[1] / name, shallow=False), (
                f"{name} differs between identical runs"
            )
