"""Shared fixtures: synthetic corpora, simulated economies, and the
acceptance-criterion reporting hook."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from cyrisk import months as mo
from cyrisk.textprep import Paragraph

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


# --------------------------------------------------------------------------
# synthetic corpora
# --------------------------------------------------------------------------


def make_topic_corpus(
    seed: int,
    n_topics: int = 3,
    vocab_per_topic: int = 50,
    paras_per_topic: int = 30,
    tokens_per_para: int = 30,
    words_per_para: int = 12,
) -> list[Paragraph]:
    """Paragraphs drawn from disjoint per-topic vocabularies.

    Each paragraph samples its own sub-vocabulary so paragraphs within a
    topic are related but distinguishable.
    """
    rng = np.random.default_rng(seed)
    paras = []
    for t in range(n_topics):
        words = np.array([f"t{t}w{i:02d}" for i in range(vocab_per_topic)])
        for p in range(paras_per_topic):
            sub = rng.choice(words, size=words_per_para, replace=False)
            tokens = rng.choice(sub, size=tokens_per_para, replace=True)
            paras.append(Paragraph(f"d{t}x{p}", 0, tuple(tokens), "other"))
    return paras


def topic_labels(n_topics: int = 3, paras_per_topic: int = 30) -> np.ndarray:
    return np.repeat(np.arange(n_topics), paras_per_topic)


def intra_inter_cosine(model, labels: np.ndarray) -> tuple[float, float]:
    m = model.paragraph_matrix
    unit = m / np.linalg.norm(m, axis=0, keepdims=True)
    sims = unit.T @ unit
    iu = np.triu_indices_from(sims, k=1)
    same = labels[iu[0]] == labels[iu[1]]
    return float(sims[iu][same].mean()), float(sims[iu][~same].mean())


def planted_filing_scores(seed: int) -> tuple[float, float]:
    """Train a small topic model with reference descriptions from topic 0,
    then score two synthetic filings: one with a verbatim reference
    paragraph planted among filler, one with filler only.

    Returns (planted_score, control_score).
    """
    from cyrisk.embed import TrainParams, infer_vector, train
    from cyrisk.scoring import (
        FilingParagraphScores,
        ReferenceCorpus,
        ReferenceDescription,
        ScoredParagraph,
        filing_score,
        paragraph_score,
    )

    rng = np.random.default_rng(seed)
    corpus = make_topic_corpus(seed, paras_per_topic=12, tokens_per_para=25)
    topic0 = np.array([f"t0w{i:02d}" for i in range(50)])
    refs = []
    for r in range(3):
        sub = rng.choice(topic0, size=12, replace=False)
        tokens = tuple(rng.choice(sub, size=25, replace=True))
        refs.append(Paragraph(f"ref:{r}", 0, tokens, "reference"))
    params = TrainParams(
        mode="dbow", vector_size=16, window=5, min_count=1, subsample_t=1.0,
        negative=5, epochs=24, initial_lr=0.025, seed=seed,
    )
    model = train(corpus + refs, params)
    ref_corpus = ReferenceCorpus(
        [ReferenceDescription("tac", "tech", f"sub{r}", f"ref:{r}") for r in range(3)],
        np.vstack([model.paragraph_vector(f"ref:{r}:0") for r in range(3)]),
    )

    filler = [p for p in corpus if not p.doc_id.startswith("d0")]
    shared = [
        Paragraph("filing", i, filler[i].tokens, "other") for i in range(9)
    ]
    planted = shared + [Paragraph("filing", 9, refs[0].tokens, "other")]
    control = shared + [Paragraph("filing", 9, filler[10].tokens, "other")]

    def score_filing(paragraphs):
        scored = []
        for p in paragraphs:
            vec = infer_vector(model, p, infer_epochs=24, seed=seed + 1)
            s, _ = paragraph_score(vec, ref_corpus)
            scored.append(ScoredParagraph(p.ordinal, s, p.source_section))
        return filing_score(scored).score

    return score_filing(planted), score_filing(control)


# --------------------------------------------------------------------------
# simulated economies
# --------------------------------------------------------------------------


def month_index(start: str, T: int) -> list[str]:
    return mo.month_range(start, mo.to_label(mo.to_index(start) + T - 1))


def make_planted_economy(
    seed: int,
    n_firms: int = 100,
    T: int = 600,
    base_mu: float = 0.004,
    slope: float = 0.015,
    sigma: float = 0.04,
    start: str = "1975-01",
):
    """Firm panel where expected returns increase in a fixed score."""
    rng = np.random.default_rng(seed)
    idx = month_index(start, T)
    scores = rng.uniform(0.0, 1.0, n_firms)
    caps = rng.uniform(0.5, 2.0, n_firms)
    rets = rng.normal(
        base_mu + slope * scores[None, :], sigma, size=(T, n_firms)
    )
    panel = pd.DataFrame(
        {
            "id": np.tile(np.arange(n_firms), T),
            "month": np.repeat(idx, n_firms),
            "ret": rets.ravel(),
            "mktcap": np.tile(caps, T),
        }
    )
    score_panel = pd.DataFrame(
        {
            "cik": np.tile(np.arange(n_firms), T),
            "month": np.repeat(idx, n_firms),
            "score": np.tile(scores, T),
        }
    )
    rf = pd.Series(0.0, index=idx)
    return panel, score_panel, rf, scores


# --------------------------------------------------------------------------
# end-to-end workspace
# --------------------------------------------------------------------------

BUSINESS_WORDS = (
    "revenue margin segment inventory logistics warehouse retail customer "
    "supplier contract manufacturing equipment pricing demand seasonal "
    "brand marketing distribution wholesale freight facility lease "
    "maintenance payroll insurance dividend liquidity covenant refinance "
    "amortization depreciation goodwill acquisition divestiture subsidiary "
    "regulation compliance litigation settlement environmental permits "
    "commodity hedging currency translation payable receivable capital "
    "expenditure backlog bookings pipeline productivity automation quality "
    "safety training turnover talent compensation benefits pension audit "
    "governance committee shareholder proxy charter bylaw director officer"
).split()

CYBER_WORDS = (
    "adversaries cyberattack breach malware ransomware phishing credentials "
    "passwords encryption firewall intrusion hackers vulnerability exploit "
    "network servers databases unauthorized exfiltration cookies tokens "
    "authentication spoofing botnet payload remediation forensics incident "
    "monitoring penetration patching backdoor keylogger spyware denial"
).split()

FILLER_GLUE = "the of and to in for with on that our we this".split()


def _sentence(rng, words, n=11):
    picked = [str(w) for w in rng.choice(words, size=n, replace=True)]
    glue = [str(g) for g in rng.choice(FILLER_GLUE, size=3, replace=True)]
    body = picked[:4] + glue[:2] + picked[4:8] + glue[2:] + picked[8:]
    return body[0].capitalize() + " " + " ".join(body[1:]) + "."


def _filing_html(rng, propensity: float, with_item1a: bool) -> str:
    n_paragraphs = 18
    n_cyber = int(round(propensity * 6))
    blocks = []
    for i in range(n_paragraphs):
        words = CYBER_WORDS if i < n_cyber else BUSINESS_WORDS
        sentences = " ".join(_sentence(rng, words) for _ in range(3))
        blocks.append(f"<p>{sentences}</p>")
    rng.shuffle(blocks)
    if with_item1a:
        cut = len(blocks) // 3
        blocks.insert(cut, "<p>Item 1A. Risk Factors.</p>")
        blocks.insert(2 * cut, "<p>Item 2. Properties.</p>")
    body = "\n".join(blocks)
    return (
        "<html><head><title>annual report</title>"
        "<script>var x = 1;</script></head>"
        f"<body>{body}</body></html>"
    )


def build_workspace(root: Path, seed: int = 11) -> Path:
    """Generate a complete offline pipeline workspace.

    25 firms file annually 2008-2011; a firm's share of cyber-flavored
    paragraphs and its expected return both rise with a latent propensity,
    so the pipeline has real signal to find.  Returns the config path.
    """
    rng = np.random.default_rng(seed)
    index_dir = root / "index"
    filings_dir = root / "filings"
    cache_dir = root / "cache"
    out_dir = root / "out"
    for d in (index_dir, filings_dir, cache_dir, out_dir):
        d.mkdir(parents=True, exist_ok=True)

    ciks = list(range(1001, 1026))
    propensity = {cik: (i + 1) / len(ciks) for i, cik in enumerate(ciks)}
    years = [2008, 2009, 2010, 2011]
    for year in years:
        rows = []
        for cik in ciks:
            rel = f"data/{cik}/{year}.htm"
            (filings_dir / f"data/{cik}").mkdir(parents=True, exist_ok=True)
            html = _filing_html(rng, propensity[cik], with_item1a=cik % 2 == 0)
            (filings_dir / rel).write_text(html)
            rows.append(f"{cik}|FIRM {cik}|10-K|{year}-03-15|{rel}")
        rows.append(f"{ciks[0]}|FIRM {ciks[0]}|10-Q|{year}-06-15|data/q.htm")
        rows.append(f"{ciks[1]}|FIRM {ciks[1]}|10-K/A|{year}-07-15|data/a.htm")
        content = [
            "Synthetic EDGAR full index",
            "",
            "CIK|Company Name|Form Type|Date Filed|Filename",
            "-" * 60,
            *rows,
        ]
        if year == years[0]:
            content.append("bad|row")
        (index_dir / f"{year}.idx").write_text("\n".join(content) + "\n")

    months = month_index("2008-01", 72)
    ret_rows = []
    for cik in ciks:
        mu = 0.004 + 0.012 * propensity[cik]
        rets = rng.normal(mu, 0.06, len(months))
        cap = float(rng.uniform(0.5, 5.0))
        for t, m in enumerate(months):
            ret_rows.append(f"{cik},{m},{rets[t]:.6f},{cap:.4f}")
    (root / "returns.csv").write_text(
        "id,month,ret,mktcap\n" + "\n".join(ret_rows) + "\n"
    )

    fac_rows = []
    for m in months:
        vals = [
            rng.normal(0.5, 4.0),            # mkt_rf, monthly percent
            *rng.normal(0.1, 2.0, size=5),   # smb hml mom rmw cma
            0.02,                            # rf
        ]
        fac_rows.append(m + "," + ",".join(f"{v:.5f}" for v in vals))
    (root / "factors.csv").write_text(
        "month,mkt_rf,smb,hml,mom,rmw,cma,rf\n" + "\n".join(fac_rows) + "\n"
    )

    import shutil

    shutil.copytree(FIXTURES / "references", root / "references", dirs_exist_ok=True)

    config = f"""
[paths]
index_dir = {index_dir}
cache_dir = {cache_dir}
reference_dir = {root / "references"}
returns_csv = {root / "returns.csv"}
factors_csv = {root / "factors.csv"}
out_dir = {out_dir}

[ingest]
base_url = file://{filings_dir}
delay_ms = 0

[prep]
target_len = 40
common_rank_cutoff = 100

[train]
mode = dbow
vector_size = 16
window = 5
min_count = 2
subsample_t = 1.0
negative = 5
epochs = 6
initial_lr = 0.05

[score]
mode = simple
section_filter = all
infer_epochs = 8

[sort]
q = 5
frequency = quarterly
start = 2008-06

[fmb]
n_portfolios = 8
beta_window = 24
factors = mkt_rf

[grs]
n_portfolios = 8
factors = mkt_rf,smb,hml

[bayes]
market = mkt_rf
candidates = smb,hml,mom,rmw,cma,cyber
prior_multiple = 1.5
grid_start = 2013-10
grid_end = 2013-12
multiples = 1.5,2

[run]
seed = 11
workers = 1
"""
    config_path = root / "config.ini"
    config_path.write_text(config)
    return config_path


# --------------------------------------------------------------------------
# acceptance reporting: one pass/fail line per criterion
# --------------------------------------------------------------------------

_acceptance_results: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): marks a test as an acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        name = marker.args[0] if marker.args else item.name
        _acceptance_results.append((name, report.outcome.upper()))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance_results:
        line = "PASS" if outcome == "PASSED" else "FAIL"
        terminalreporter.write_line(f"{line}  {name}")
