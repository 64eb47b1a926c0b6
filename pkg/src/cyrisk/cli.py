"""Subcommand front end: ingest -> prep -> train -> score -> sort ->
fmb / grs / bayes -> report.

Each stage reads a flat INI config (any key overridable by a flag of the
same name where exposed), writes its outputs plus a JSON manifest with
input digests, a config echo, and the seed, and is skipped on re-runs
when its recorded input digests still match (unless --force).

Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import datetime as dt
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from . import edgar, embed, panels, portfolio, scoring, textprep
from .apt import bayes as bayes_mod
from .apt import fmb as fmb_mod
from .apt import grs as grs_mod
from .apt import linreg
from .errors import ConfigError, CyriskError, DataError, NumericError

log = logging.getLogger("cyrisk")


class MissingUpstreamError(DataError):
    """A stage's required upstream output is absent."""


# --------------------------------------------------------------------------
# config and manifests
# --------------------------------------------------------------------------


class RunConfig:
    """Flat INI-backed configuration with typed accessors."""

    def __init__(self, parser: configparser.ConfigParser, path: Optional[Path] = None):
        self.parser = parser
        self.path = path

    @classmethod
    def load(cls, path: Path | str) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.read(path)
        return cls(parser, path)

    def get(self, section: str, key: str, default=None) -> Optional[str]:
        value = self.parser.get(section, key, fallback=None)
        if value is None or value.strip() == "":
            return default
        return value.strip()

    def getint(self, section: str, key: str, default=None) -> Optional[int]:
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} must be an integer: {raw!r}") from exc

    def getfloat(self, section: str, key: str, default=None) -> Optional[float]:
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} must be a number: {raw!r}") from exc

    def getlist(self, section: str, key: str, default=None) -> Optional[list[str]]:
        raw = self.get(section, key)
        if raw is None:
            return default
        return [item.strip() for item in raw.split(",") if item.strip()]

    def path_of(self, key: str, required: bool = True) -> Optional[Path]:
        raw = self.get("paths", key)
        if raw is None:
            if required:
                raise ConfigError(f"[paths] {key} is required")
            return None
        return Path(raw)

    def echo(self) -> dict:
        return {s: dict(self.parser.items(s)) for s in self.parser.sections()}


def file_digest(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest_map(paths: Sequence[Path]) -> dict[str, str]:
    return {str(p): file_digest(p) for p in paths}


def stage_is_current(manifest_path: Path, inputs: Sequence[Path]) -> bool:
    """True when the stage manifest exists, every recorded input digest
    matches the file on disk, and every recorded output still exists with
    its recorded digest."""
    if not manifest_path.exists():
        return False
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError:
        return False
    current = {}
    for p in inputs:
        if not Path(p).exists():
            return False
        current[str(p)] = file_digest(p)
    if manifest.get("inputs") != current:
        return False
    for path_s, digest in manifest.get("outputs", {}).items():
        p = Path(path_s)
        if not p.exists() or file_digest(p) != digest:
            return False
    return True


def write_stage_manifest(
    manifest_path: Path,
    stage: str,
    inputs: Sequence[Path],
    outputs: Sequence[Path],
    config: RunConfig,
    seed: int,
) -> None:
    manifest = {
        "stage": stage,
        "version": __version__,
        "seed": seed,
        "inputs": _digest_map(list(inputs)),
        "outputs": _digest_map(list(outputs)),
        "config": config.echo(),
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingUpstreamError(f"{what} not found: {path}")
    return path


def _out_dir(config: RunConfig) -> Path:
    out = config.path_of("out_dir")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(config: RunConfig, args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return config.getint("run", "seed", 42)


def _workers(config: RunConfig, args) -> int:
    if getattr(args, "workers", None) is not None:
        return args.workers
    return config.getint("run", "workers", 1)


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def cmd_ingest(config: RunConfig, args) -> int:
    out = _out_dir(config)
    manifest_json = out / "ingest_manifest.json"
    index_dir = Path(args.index_dir) if args.index_dir else config.path_of("index_dir")
    if not index_dir.is_dir():
        raise ConfigError(f"index dir not found: {index_dir}")
    index_files = sorted(index_dir.glob("*.idx")) + sorted(index_dir.glob("*.txt"))
    if not index_files:
        raise DataError(f"no index files in {index_dir}")

    if not args.force and stage_is_current(manifest_json, index_files):
        log.info("ingest up to date; skipping (use --force to rerun)")
        return 0

    cache_dir = Path(args.cache_dir) if args.cache_dir else config.path_of("cache_dir")
    delay_ms = args.delay_ms if args.delay_ms is not None else config.getint("ingest", "delay_ms", 0)
    workers = _workers(config, args)
    cik_whitelist = _load_cik_list(args.cik_list or config.get("ingest", "cik_list"))

    entries: list[edgar.IndexEntry] = []
    warnings: list[str] = []
    for path in index_files:
        with open(path, encoding="utf-8") as fh:
            got, warn = edgar.parse_index_file(fh)
        entries.extend(got)
        warnings.extend(f"{path.name}: {w}" for w in warn)
    for w in warnings:
        log.warning("index parse: %s", w)
    filings = edgar.filter_10k(entries, cik_whitelist)

    base_url = config.get("ingest", "base_url", edgar.EDGAR_BASE_URL)
    if base_url.startswith("file://"):
        client = edgar.LocalFileClient(base_url[len("file://"):])
        base_url = ""
    else:
        client = edgar.UrlClient()
    cache = edgar.FilingCache(cache_dir)
    throttle = edgar.Throttle(delay_ms / 1000.0)
    records = edgar.ingest_filings(
        filings, client, cache, cache_dir / "text",
        throttle=throttle, workers=workers, base_url=base_url,
    )
    failures = [r for r in records if "error" in r]
    filings_manifest = out / "filings.jsonl"
    edgar.write_manifest(records, filings_manifest)
    write_stage_manifest(
        manifest_json, "ingest", index_files, [filings_manifest],
        config, _seed(config, args),
    )
    log.info(
        "ingest: %d index rows, %d 10-K filings, %d fetched, %d failed",
        len(entries), len(filings), len(records) - len(failures), len(failures),
    )
    if failures and len(failures) == len(records):
        raise DataError("every fetch failed")
    return 0


def _load_cik_list(raw: Optional[str]) -> Optional[set[int]]:
    if not raw:
        return None
    path = Path(raw)
    if path.exists():
        tokens = path.read_text().split()
    else:
        tokens = [t for t in raw.split(",") if t.strip()]
    try:
        return {int(t) for t in tokens}
    except ValueError as exc:
        raise ConfigError(f"bad cik list entry in {raw!r}") from exc


def _stop_config(config: RunConfig) -> textprep.StopConfig:
    cutoff = config.getint("prep", "common_rank_cutoff", textprep.DEFAULT_COMMON_RANK_CUTOFF)
    stop_file = config.get("prep", "stopwords_file")
    common_file = config.get("prep", "common_words_file")
    if stop_file or common_file:
        base = textprep.default_stop_config(cutoff)
        stop = frozenset(textprep.load_wordlist(stop_file)) if stop_file else base.stopwords
        common = tuple(textprep.load_wordlist(common_file)) if common_file else base.common_words
        return textprep.StopConfig(stop, common, cutoff)
    return textprep.default_stop_config(cutoff)


def cmd_prep(config: RunConfig, args) -> int:
    out = _out_dir(config)
    manifest_json = out / "prep_manifest.json"
    filings_manifest = _require(out / "filings.jsonl", "ingest output")
    cache_dir = config.path_of("cache_dir")
    reference_dir = config.path_of("reference_dir")
    ref_manifest = _require(reference_dir / "manifest.csv", "reference manifest")
    inputs = [filings_manifest, ref_manifest]
    if not args.force and stage_is_current(manifest_json, inputs):
        log.info("prep up to date; skipping")
        return 0

    cfg = _stop_config(config)
    target_len = config.getint("prep", "target_len", textprep.DEFAULT_TARGET_LEN)
    paragraphs: list[textprep.Paragraph] = []
    n_docs = 0
    for rec in edgar.read_manifest(filings_manifest):
        if "error" in rec:
            continue
        text_path = cache_dir / "text" / rec["text_path"]
        raw = _require(text_path, "extracted text").read_text(encoding="utf-8")
        doc_id = f"{rec['cik']}-{rec['date_filed']}"
        try:
            paragraphs.extend(
                textprep.document_paragraphs(doc_id, raw, cfg, target_len)
            )
            n_docs += 1
        except textprep.EmptyDocumentError as exc:
            log.warning("prep: %s", exc)
    for label, text in scoring.load_reference_descriptions(reference_dir):
        try:
            paragraphs.append(textprep.preprocess_reference(text, cfg, label.doc_id))
        except textprep.EmptyDocumentError as exc:
            log.warning("prep reference: %s", exc)
    if not paragraphs:
        raise DataError("prep produced no paragraphs")

    out_path = out / "paragraphs.jsonl"
    textprep.write_paragraphs(paragraphs, out_path)
    write_stage_manifest(
        manifest_json, "prep", inputs, [out_path], config, _seed(config, args)
    )
    log.info("prep: %d documents -> %d paragraphs", n_docs, len(paragraphs))
    return 0


def _train_params(config: RunConfig, seed: int, workers: int) -> embed.TrainParams:
    return embed.TrainParams(
        mode=config.get("train", "mode", "dbow"),
        vector_size=config.getint("train", "vector_size", 200),
        window=config.getint("train", "window", 15),
        min_count=config.getint("train", "min_count", 5),
        subsample_t=config.getfloat("train", "subsample_t", 1e-5),
        negative=config.getint("train", "negative", 5),
        epochs=config.getint("train", "epochs", 50),
        initial_lr=config.getfloat("train", "initial_lr", 0.025),
        seed=seed,
        workers=workers,
    )


def cmd_train(config: RunConfig, args) -> int:
    out = _out_dir(config)
    manifest_json = out / "train_manifest.json"
    paragraphs_path = _require(out / "paragraphs.jsonl", "prep output")
    if not args.force and stage_is_current(manifest_json, [paragraphs_path]):
        log.info("train up to date; skipping")
        return 0
    params = _train_params(config, _seed(config, args), _workers(config, args))
    corpus = textprep.read_paragraphs(paragraphs_path)
    model = embed.train(corpus, params)
    model_path = out / "model.pvec"
    embed.save_model(model, model_path)
    write_stage_manifest(
        manifest_json, "train", [paragraphs_path], [model_path], config, params.seed
    )
    log.info("train: %d paragraphs, vocab %d, final loss %.4f",
             len(corpus), len(model.vocab), model.epoch_losses[-1])
    return 0


def cmd_score(config: RunConfig, args) -> int:
    out = _out_dir(config)
    manifest_json = out / "score_manifest.json"
    paragraphs_path = _require(out / "paragraphs.jsonl", "prep output")
    model_path = _require(out / "model.pvec", "train output")
    reference_dir = config.path_of("reference_dir")
    ref_manifest = _require(reference_dir / "manifest.csv", "reference manifest")
    factors_csv = config.path_of("factors_csv")
    inputs = [paragraphs_path, model_path, ref_manifest, factors_csv]
    if not args.force and stage_is_current(manifest_json, inputs):
        log.info("score up to date; skipping")
        return 0

    seed = _seed(config, args)
    model = embed.load_model(model_path)
    cfg = _stop_config(config)
    infer_epochs = config.getint("score", "infer_epochs")
    refs = scoring.embed_references(
        model, scoring.load_reference_descriptions(reference_dir), cfg,
        infer_epochs=infer_epochs, seed=seed,
    )

    by_doc: dict[str, list[textprep.Paragraph]] = {}
    for para in textprep.read_paragraphs(paragraphs_path):
        if para.doc_id.startswith("ref:"):
            continue
        by_doc.setdefault(para.doc_id, []).append(para)

    filings = []
    score_rows = []
    for doc_id in sorted(by_doc):
        cik_s, date_s = doc_id.split("-", 1)
        scored = []
        for para in sorted(by_doc[doc_id], key=lambda p: p.ordinal):
            if model.has_paragraph(para.key):
                vec = model.paragraph_vector(para.key)
            else:
                try:
                    vec = embed.infer_vector(model, para, infer_epochs, seed)
                except embed.NoKnownTokensError:
                    continue
            s, _ = scoring.paragraph_score(vec, refs)
            scored.append(scoring.ScoredParagraph(para.ordinal, s, para.source_section))
        if not scored:
            log.warning("score: no scorable paragraphs in %s", doc_id)
            continue
        filing_date = dt.date.fromisoformat(date_s)
        fp = scoring.FilingParagraphScores(int(cik_s), filing_date, tuple(scored))
        filings.append(fp)
        fs = scoring.filing_score(fp.paragraphs, fp.cik, fp.filing_date)
        score_rows.append(
            {
                "cik": fs.cik,
                "filing_date": fs.filing_date.isoformat(),
                "score": fs.score,
                "n_paragraphs": fs.n_paragraphs,
                "item1a_share": fs.item1a_share,
            }
        )
    if not filings:
        raise DataError("no filings could be scored")

    factor_panel = panels.load_factor_panel(factors_csv)
    mode = config.get("score", "mode", "simple")
    section_filter = config.get("score", "section_filter", "all")
    panel = scoring.build_score_panel(
        filings, list(factor_panel.index), mode=mode, section_filter=section_filter
    )
    filing_scores_csv = out / "filing_scores.csv"
    pd.DataFrame(score_rows).to_csv(filing_scores_csv, index=False)
    panel_csv = out / "score_panel.csv"
    scoring.write_score_panel(panel, panel_csv)
    write_stage_manifest(
        manifest_json, "score", inputs, [filing_scores_csv, panel_csv], config, seed
    )
    log.info("score: %d filings, %d panel rows (mode=%s)", len(filings), len(panel), mode)
    return 0


def _load_sort_inputs(config: RunConfig):
    returns_csv = config.path_of("returns_csv")
    factors_csv = config.path_of("factors_csv")
    out = _out_dir(config)
    panel_csv = _require(out / "score_panel.csv", "score output")
    return_panel = panels.load_return_panel(_require(returns_csv, "returns csv"))
    factor_panel = panels.load_factor_panel(_require(factors_csv, "factors csv"))
    if "rf" not in factor_panel.columns:
        raise DataError("factor panel must include an rf column")
    score_panel = scoring.read_score_panel(panel_csv)
    return return_panel, factor_panel, score_panel


def cmd_sort(config: RunConfig, args) -> int:
    out = _out_dir(config)
    manifest_json = out / "sort_manifest.json"
    inputs = [
        config.path_of("returns_csv"),
        config.path_of("factors_csv"),
        out / "score_panel.csv",
    ]
    exclusions_file = config.get("sort", "exclusions_file")
    if exclusions_file:
        inputs.append(Path(exclusions_file))
    if not args.force and stage_is_current(manifest_json, inputs):
        log.info("sort up to date; skipping")
        return 0

    return_panel, factor_panel, score_panel = _load_sort_inputs(config)
    q = config.getint("sort", "q", 5)
    frequency = config.get("sort", "frequency", "quarterly")
    exclusions = None
    if exclusions_file:
        exclusions = [
            int(t) if t.isdigit() else t
            for t in Path(exclusions_file).read_text().split()
        ]
    result = portfolio.sort_portfolios(
        return_panel,
        score_panel,
        factor_panel["rf"],
        q=q,
        frequency=frequency,
        exclusions=exclusions,
        start=config.get("sort", "start"),
        end=config.get("sort", "end"),
    )

    series = result.quantile_excess.copy()
    series.columns = [f"p{k}" for k in series.columns]
    series["long_short"] = result.long_short
    series.index.name = "month"
    returns_csv_out = out / "portfolio_returns.csv"
    series.to_csv(returns_csv_out)

    mkt = factor_panel["mkt_rf"].reindex(result.long_short.index)
    rows = []
    for name, excess in list(result.quantile_excess.items()) + [
        ("long_short", result.long_short)
    ]:
        stats = portfolio.perf_stats(excess, mkt)
        lag = linreg.nw_lag_rule(len(excess))
        mean = float(excess.mean())
        se = float(
            np.sqrt(
                linreg.newey_west_cov(excess.to_numpy() - mean, lag)[0, 0] / len(excess)
            )
        )
        rows.append(
            {
                "portfolio": str(name),
                "mean_monthly_pct": mean * 100,
                "nw_t_stat": mean / se if se > 0 else float("inf"),
                "sharpe": stats.sharpe,
                "treynor": stats.treynor,
                "sortino": stats.sortino,
                "avg_firms": result.avg_firm_count.get(name, float("nan")),
                "avg_score": result.avg_score.get(name, float("nan")),
            }
        )
    summary_csv = out / "sort_summary.csv"
    pd.DataFrame(rows).to_csv(summary_csv, index=False)
    membership_jsonl = out / "membership.jsonl"
    portfolio.write_membership(result.membership, membership_jsonl)
    write_stage_manifest(
        manifest_json, "sort", inputs,
        [returns_csv_out, summary_csv, membership_jsonl],
        config, _seed(config, args),
    )
    log.info("sort: %d quantiles, %d months", q, len(result.long_short))
    return 0


def _factor_cols(config: RunConfig, section: str, default: str) -> list[str]:
    return config.getlist(section, "factors", default.split(","))


def _cyber_factor(out: Path) -> pd.Series:
    path = _require(out / "portfolio_returns.csv", "sort output")
    table = pd.read_csv(path, dtype={"month": str}).set_index("month")
    return table["long_short"].rename("cyber")


def cmd_fmb(config: RunConfig, args) -> int:
    out = _out_dir(config)
    manifest_json = out / "fmb_manifest.json"
    inputs = [
        config.path_of("returns_csv"),
        config.path_of("factors_csv"),
        out / "score_panel.csv",
    ]
    if not args.force and stage_is_current(manifest_json, inputs):
        log.info("fmb up to date; skipping")
        return 0
    return_panel, factor_panel, score_panel = _load_sort_inputs(config)
    factor_cols = _factor_cols(config, "fmb", "mkt_rf")
    result = fmb_mod.fama_macbeth_pipeline(
        return_panel,
        score_panel,
        factor_panel,
        factor_cols,
        factor_panel["rf"],
        n_portfolios=config.getint("fmb", "n_portfolios", 20),
        beta_window=config.getint("fmb", "beta_window", 24),
        nw_lag=config.getint("fmb", "nw_lag"),
    )
    table = pd.DataFrame(
        {
            "coefficient": result.names,
            "premium_monthly_pct": result.gamma_means * 100,
            "nw_t_stat": result.nw_t_stats,
        }
    )
    fmb_csv = out / "fmb_table.csv"
    table.to_csv(fmb_csv, index=False)
    text = table.to_string(index=False, float_format=lambda v: f"{v:.4f}")
    text += f"\n\navg adj R2: {result.avg_r2_adj:.4f}\nMAPE (monthly): {result.mape:.6f}\n"
    fmb_txt = out / "fmb_table.txt"
    fmb_txt.write_text(text)
    write_stage_manifest(
        manifest_json, "fmb", inputs, [fmb_csv, fmb_txt], config, _seed(config, args)
    )
    log.info("fmb: score premium %.4f%%/mo (t=%.2f)",
             result.premium("score") * 100, result.t_stat("score"))
    return 0


def cmd_grs(config: RunConfig, args) -> int:
    out = _out_dir(config)
    manifest_json = out / "grs_manifest.json"
    inputs = [
        config.path_of("returns_csv"),
        config.path_of("factors_csv"),
        out / "score_panel.csv",
        out / "portfolio_returns.csv",
    ]
    if not args.force and stage_is_current(manifest_json, inputs):
        log.info("grs up to date; skipping")
        return 0
    return_panel, factor_panel, score_panel = _load_sort_inputs(config)
    n_port = config.getint("grs", "n_portfolios", 20)
    base_cols = _factor_cols(config, "grs", "mkt_rf,smb,hml,rmw,cma")
    sort_res = portfolio.sort_portfolios(
        return_panel, score_panel, factor_panel["rf"], q=n_port,
        start=config.get("sort", "start"), end=config.get("sort", "end"),
    )
    assets = sort_res.quantile_excess
    cyber = _cyber_factor(out).reindex(assets.index)
    factors_aligned = factor_panel.reindex(assets.index)
    rows = []
    for label, cols, extra in (
        ("base", base_cols, None),
        ("base+cyber", base_cols, cyber),
    ):
        F = factors_aligned[cols]
        if extra is not None:
            F = F.join(extra)
        res = grs_mod.grs_test(assets, F)
        rows.append(
            {
                "model": label,
                "sorted_on": "score",
                "grs": res.statistic,
                "p_value": res.p_value,
                "avg_r2": res.avg_r2,
            }
        )
    grs_csv = out / "grs_table.csv"
    pd.DataFrame(rows).to_csv(grs_csv, index=False)
    write_stage_manifest(
        manifest_json, "grs", inputs, [grs_csv], config, _seed(config, args)
    )
    log.info("grs: %s", "; ".join(f"{r['model']}={r['grs']:.3f} (p={r['p_value']:.3f})" for r in rows))
    return 0


def cmd_bayes(config: RunConfig, args) -> int:
    out = _out_dir(config)
    manifest_json = out / "bayes_manifest.json"
    inputs = [config.path_of("factors_csv"), out / "portfolio_returns.csv"]
    if not args.force and stage_is_current(manifest_json, inputs):
        log.info("bayes up to date; skipping")
        return 0
    factor_panel = panels.load_factor_panel(config.path_of("factors_csv"))
    cyber = _cyber_factor(out)
    joined = factor_panel.join(cyber, how="inner")
    params = bayes_mod.BayesParams(
        prior_multiple=config.getfloat("bayes", "prior_multiple", 1.5),
        market=config.get("bayes", "market", "mkt_rf"),
        candidates=tuple(
            config.getlist("bayes", "candidates", ["smb", "hml", "mom", "rmw", "cma", "cyber"])
        ),
        start=config.get("bayes", "start"),
        end=config.get("bayes", "end"),
    )
    entries = bayes_mod.model_scan(joined, params)
    posterior_csv = out / "bayes_posteriors.csv"
    pd.DataFrame(
        [
            {
                "model": e.model_key,
                "posterior": e.posterior,
                "log_ml": e.log_ml,
                "error": e.error or "",
            }
            for e in sorted(entries, key=lambda e: -(e.posterior if e.error is None else -1))
        ]
    ).to_csv(posterior_csv, index=False)

    cumulative = bayes_mod.cumulative_factor_prob(entries)
    cumulative_csv = out / "bayes_cumulative.csv"
    pd.DataFrame(
        sorted(cumulative.items()), columns=["factor", "cumulative_probability"]
    ).to_csv(cumulative_csv, index=False)

    outputs = [posterior_csv, cumulative_csv]
    grid_start = config.get("bayes", "grid_start")
    grid_end = config.get("bayes", "grid_end")
    if grid_start and grid_end:
        from . import months as mo

        grid = [
            m for m in mo.month_range(grid_start, grid_end) if m in joined.index
        ]
        expanding = bayes_mod.expanding_scan(joined, params, grid)
        expanding_csv = out / "bayes_expanding.csv"
        expanding.to_csv(expanding_csv, index=False)
        outputs.append(expanding_csv)

    multiples = config.getlist("bayes", "multiples")
    if multiples:
        table = bayes_mod.prior_sensitivity(
            joined, params, [float(m) for m in multiples]
        )
        prior_csv = out / "bayes_prior_sensitivity.csv"
        table.rename_axis("model").to_csv(prior_csv)
        outputs.append(prior_csv)

    write_stage_manifest(
        manifest_json, "bayes", inputs, outputs, config, _seed(config, args)
    )
    best = max((e for e in entries if e.error is None), key=lambda e: e.posterior)
    log.info("bayes: %d models; top %s at %.2f%%", len(entries), best.model_key, 100 * best.posterior)
    return 0


def cmd_report(config: RunConfig, args) -> int:
    out = _out_dir(config)
    sections = []
    for title, name in (
        ("Portfolio sorts", "sort_summary.csv"),
        ("Cross-sectional premia", "fmb_table.csv"),
        ("Joint pricing-error tests", "grs_table.csv"),
        ("Factor-model posteriors", "bayes_posteriors.csv"),
        ("Cumulative factor probabilities", "bayes_cumulative.csv"),
    ):
        path = out / name
        if not path.exists():
            continue
        frame = pd.read_csv(path)
        sections.append(f"== {title} ==\n{frame.to_string(index=False)}\n")
    if not sections:
        raise MissingUpstreamError("no stage outputs found to report on")
    report_path = out / "report.txt"
    report_path.write_text("\n".join(sections))
    print("\n".join(sections))
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cyrisk", description=__doc__)
    parser.add_argument("--config", required=True, help="INI config file")
    parser.add_argument("--seed", type=int, help="override [run] seed")
    parser.add_argument("--workers", type=int, help="override [run] workers")
    parser.add_argument("--force", action="store_true", help="rerun even if up to date")
    parser.add_argument("--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", help="parse indexes, fetch filings, extract text")
    ingest.add_argument("--index-dir")
    ingest.add_argument("--cache-dir")
    ingest.add_argument("--delay-ms", type=int)
    ingest.add_argument("--cik-list")
    for name in ("prep", "train", "score", "sort", "fmb", "grs", "bayes", "report"):
        sub.add_parser(name)
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "prep": cmd_prep,
    "train": cmd_train,
    "score": cmd_score,
    "sort": cmd_sort,
    "fmb": cmd_fmb,
    "grs": cmd_grs,
    "bayes": cmd_bayes,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING if args.quiet else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
        config = RunConfig.load(args.config)
        for attr in ("index_dir", "cache_dir", "delay_ms", "cik_list"):
            if not hasattr(args, attr):
                setattr(args, attr, None)
        return _COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except CyriskError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
