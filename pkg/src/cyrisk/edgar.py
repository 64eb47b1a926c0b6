"""EDGAR full-index parsing, filing download with an on-disk cache, and
HTML-to-text extraction.

Quarterly full-index files are pipe-delimited, one row per document:

    CIK|Company Name|Form Type|Date Filed|Filename

where ``Filename`` is the archive-relative URL of the document.  Parsing is
tolerant of malformed rows (collected as warnings); fetching is throttled,
cached, and safe under bounded parallelism.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import html.parser
import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .errors import DataError

log = logging.getLogger(__name__)

EDGAR_BASE_URL = "https://www.sec.gov/Archives/"

FIELD_COUNT = 5


class MalformedLineError(DataError):
    """Index row does not have exactly five pipe-delimited fields."""


class BadCikError(DataError):
    """CIK field is not a positive integer."""


class BadDateError(DataError):
    """Date Filed field is not a YYYY-MM-DD date."""


class MissingSeparatorError(DataError):
    """Index file has no dashed header separator line."""


class NetworkError(DataError):
    """Transport failure or unexpected HTTP status."""


class NotFoundError(NetworkError):
    """HTTP 404 for a filing URL."""


class RateLimitedError(NetworkError):
    """HTTP 429; ``retry_after`` carries the server hint in seconds."""

    def __init__(self, msg: str, retry_after: Optional[float] = None):
        super().__init__(msg)
        self.retry_after = retry_after


class UndecodableBytesError(DataError):
    """Document bytes are not text in any supported encoding."""


@dataclass(frozen=True)
class IndexEntry:
    """One row of an EDGAR full-index file."""

    cik: int
    company_name: str
    form_type: str
    date_filed: dt.date
    filename: str


@dataclass(frozen=True)
class FilingDocument:
    """A fetched filing: raw-content digest plus extracted plain text."""

    entry: IndexEntry
    raw_bytes_digest: str
    text: str
    fetched_at: float


def parse_index_line(line: str) -> IndexEntry:
    """Parse one data row of a full-index file.

    Fields are split on ``|`` and trimmed.  Raises MalformedLineError,
    BadCikError, or BadDateError.
    """
    fields = [f.strip() for f in line.rstrip("\r\n").split("|")]
    if len(fields) != FIELD_COUNT:
        raise MalformedLineError(
            f"expected {FIELD_COUNT} pipe-delimited fields, got {len(fields)}: {line!r}"
        )
    cik_s, company, form_type, date_s, filename = fields
    if not cik_s.isdigit() or int(cik_s) <= 0:
        raise BadCikError(f"CIK must be a positive integer, got {cik_s!r}")
    try:
        date_filed = dt.date.fromisoformat(date_s)
    except ValueError as exc:
        raise BadDateError(f"bad Date Filed {date_s!r}") from exc
    if not form_type:
        raise MalformedLineError(f"empty Form Type in {line!r}")
    if not filename:
        raise MalformedLineError(f"empty Filename in {line!r}")
    return IndexEntry(int(cik_s), company, form_type, date_filed, filename)


def format_index_line(entry: IndexEntry) -> str:
    """Inverse of parse_index_line (round-trips through parsing)."""
    return "|".join(
        [
            str(entry.cik),
            entry.company_name,
            entry.form_type,
            entry.date_filed.isoformat(),
            entry.filename,
        ]
    )


_SEPARATOR_RE = re.compile(r"^-{10,}\s*$")


def parse_index_file(stream: Iterable[str]) -> tuple[list[IndexEntry], list[str]]:
    """Parse a full-index file: preamble, dashed separator, then data rows.

    The header ends at the first line of ten or more dashes.  Rows that fail
    to parse are collected as warning strings rather than aborting the file.

    Returns (entries, warnings); raises MissingSeparatorError when no
    separator line is present.
    """
    entries: list[IndexEntry] = []
    warnings: list[str] = []
    in_body = False
    for lineno, line in enumerate(stream, start=1):
        if not in_body:
            if _SEPARATOR_RE.match(line):
                in_body = True
            continue
        if not line.strip():
            continue
        try:
            entries.append(parse_index_line(line))
        except DataError as exc:
            warnings.append(f"line {lineno}: {exc}")
    if not in_body:
        raise MissingSeparatorError("no dashed separator line found")
    return entries, warnings


def filter_10k(
    entries: Iterable[IndexEntry], cik_whitelist: Optional[set[int]] = None
) -> list[IndexEntry]:
    """Keep annual reports only: Form Type exactly ``10-K``.

    Amendments (10-K/A) and small-business variants (10-KSB) are excluded.
    When a CIK whitelist is given, entries outside it are dropped too.
    """
    kept = [e for e in entries if e.form_type == "10-K"]
    if cik_whitelist is not None:
        kept = [e for e in kept if e.cik in cik_whitelist]
    return kept


# --------------------------------------------------------------------------
# fetching
# --------------------------------------------------------------------------

# An HTTP client is any callable url -> (status, headers, body).  Production
# use goes through UrlClient; tests inject fakes; fixture pipelines read
# from a local directory via LocalFileClient.
HttpClient = Callable[[str], tuple[int, dict, bytes]]


class UrlClient:
    """Minimal stdlib HTTP client with the SEC-required User-Agent."""

    def __init__(self, user_agent: str = "cyrisk research client"):
        self.user_agent = user_agent

    def __call__(self, url: str) -> tuple[int, dict, bytes]:
        req = urllib.request.Request(url, headers={"User-Agent": self.user_agent})
        try:
            with urllib.request.urlopen(req) as resp:
                return resp.status, dict(resp.headers), resp.read()
        except urllib.error.HTTPError as exc:
            return exc.code, dict(exc.headers or {}), b""
        except urllib.error.URLError as exc:
            raise NetworkError(f"GET {url}: {exc.reason}") from exc


class LocalFileClient:
    """Serves 'GET's from a directory tree; used by fixture pipelines."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.calls = 0

    def __call__(self, url: str) -> tuple[int, dict, bytes]:
        self.calls += 1
        rel = url.split("://", 1)[-1]
        # strip any host-like prefix left over from joining with a base URL
        candidate = self.root / rel
        if not candidate.exists():
            candidate = self.root / Path(rel).name
        if not candidate.exists():
            return 404, {}, b""
        return 200, {}, candidate.read_bytes()


class Throttle:
    """Global minimum spacing between requests, shared across workers."""

    def __init__(self, min_interval_s: float):
        self.min_interval_s = min_interval_s
        self._lock = threading.Lock()
        self._next_allowed = 0.0

    def wait(self) -> None:
        if self.min_interval_s <= 0:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                if now >= self._next_allowed:
                    self._next_allowed = now + self.min_interval_s
                    return
                delay = self._next_allowed - now
            time.sleep(delay)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def cache_key(entry: IndexEntry) -> str:
    """Cache key: hash of the Filename field (stable across reruns)."""
    return _sha256(entry.filename.encode("utf-8"))


class FilingCache:
    """Content store for raw filing bytes.

    Layout: ``raw/<key>.bin`` plus a ``meta/<key>.json`` sidecar recording
    the content digest.  Writes go through a temp file and atomic rename so
    concurrent workers cannot observe partial entries.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        (self.root / "raw").mkdir(parents=True, exist_ok=True)
        (self.root / "meta").mkdir(parents=True, exist_ok=True)

    def _raw_path(self, key: str) -> Path:
        return self.root / "raw" / f"{key}.bin"

    def _meta_path(self, key: str) -> Path:
        return self.root / "meta" / f"{key}.json"

    def get(self, key: str) -> Optional[tuple[bytes, str]]:
        """Return (bytes, digest) when cached and intact, else None."""
        raw_path, meta_path = self._raw_path(key), self._meta_path(key)
        if not raw_path.exists() or not meta_path.exists():
            return None
        data = raw_path.read_bytes()
        meta = json.loads(meta_path.read_text())
        if _sha256(data) != meta.get("content_sha256"):
            return None
        return data, meta["content_sha256"]

    def put(self, key: str, data: bytes, url: str) -> str:
        digest = _sha256(data)
        self._atomic_write(self._raw_path(key), data)
        meta = json.dumps({"url": url, "content_sha256": digest}).encode()
        self._atomic_write(self._meta_path(key), meta)
        return digest

    @staticmethod
    def _atomic_write(path: Path, data: bytes) -> None:
        tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)


def fetch_filing(
    entry: IndexEntry,
    client: HttpClient,
    cache: FilingCache,
    throttle: Optional[Throttle] = None,
    base_url: str = EDGAR_BASE_URL,
) -> FilingDocument:
    """Fetch one filing, going to the network only on a cache miss.

    Raises NotFoundError on 404, RateLimitedError on 429 (with the
    Retry-After hint attached), NetworkError otherwise.
    """
    key = cache_key(entry)
    cached = cache.get(key)
    if cached is not None:
        data, digest = cached
        return FilingDocument(entry, digest, extract_text(data), time.time())

    if throttle is not None:
        throttle.wait()
    url = base_url + entry.filename.lstrip("/")
    status, headers, body = client(url)
    if status == 404:
        raise NotFoundError(f"404 for {url}")
    if status == 429:
        retry_after = headers.get("Retry-After") if headers else None
        raise RateLimitedError(
            f"429 for {url}", float(retry_after) if retry_after else None
        )
    if status != 200:
        raise NetworkError(f"HTTP {status} for {url}")
    digest = cache.put(key, body, url)
    return FilingDocument(entry, digest, extract_text(body), time.time())


# --------------------------------------------------------------------------
# text extraction
# --------------------------------------------------------------------------

_BLOCK_TAGS = frozenset(
    """
    address article aside blockquote br caption dd div dl dt fieldset
    figcaption figure footer form h1 h2 h3 h4 h5 h6 header hr li main nav
    ol p pre section table tbody td tfoot th thead tr ul
    """.split()
)
_SKIP_TAGS = frozenset({"script", "style"})


class _TextExtractor(html.parser.HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
        elif tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
        elif tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_startendtag(self, tag, attrs):
        if tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_data(self, data):
        if not self._skip_depth:
            self.parts.append(data)


def _decode(data: bytes) -> str:
    if b"\x00" in data:
        raise UndecodableBytesError("binary content (NUL bytes present)")
    # honor a declared charset when one is present and known
    head = data[:2048]
    m = re.search(rb"charset=[\"']?([A-Za-z0-9_\-]+)", head)
    if m:
        try:
            return data.decode(m.group(1).decode("ascii"))
        except (LookupError, UnicodeDecodeError):
            pass
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        pass
    try:
        return data.decode("latin-1")
    except UnicodeDecodeError as exc:  # pragma: no cover - latin-1 is total
        raise UndecodableBytesError(str(exc)) from exc


def extract_text(data: bytes) -> str:
    """Extract readable text from an HTML (or plain text) document.

    Script/style content is dropped, tags stripped, entities decoded, and
    block-level boundaries become line breaks.  Input without any markup is
    returned unchanged.
    """
    text = _decode(data)
    if "<" not in text and "&" not in text:
        return text
    parser = _TextExtractor()
    parser.feed(text)
    parser.close()
    joined = "".join(parser.parts)
    lines = [" ".join(line.split()) for line in joined.split("\n")]
    out: list[str] = []
    for line in lines:
        if line:
            out.append(line)
        elif out and out[-1]:
            out.append("")
    while out and not out[-1]:
        out.pop()
    return "\n".join(out)


# --------------------------------------------------------------------------
# ingest pipeline
# --------------------------------------------------------------------------


def ingest_filings(
    entries: Sequence[IndexEntry],
    client: HttpClient,
    cache: FilingCache,
    text_dir: Path | str,
    throttle: Optional[Throttle] = None,
    workers: int = 1,
    base_url: str = EDGAR_BASE_URL,
) -> list[dict]:
    """Fetch every entry, write extracted text files, and return manifest
    records (one dict per filing, sorted by cik/date/filename).

    The throttle is shared across workers; per-entry failures are recorded
    in the returned records rather than aborting the batch.
    """
    text_dir = Path(text_dir)
    text_dir.mkdir(parents=True, exist_ok=True)

    def one(entry: IndexEntry) -> dict:
        rec = {
            "cik": entry.cik,
            "company_name": entry.company_name,
            "form_type": entry.form_type,
            "date_filed": entry.date_filed.isoformat(),
        }
        try:
            doc = fetch_filing(entry, client, cache, throttle, base_url)
        except DataError as exc:
            log.warning("fetch failed for cik=%s %s: %s", entry.cik, entry.filename, exc)
            rec.update({"error": str(exc)})
            return rec
        text_name = f"{cache_key(entry)}.txt"
        (text_dir / text_name).write_text(doc.text, encoding="utf-8")
        rec.update({"digest": doc.raw_bytes_digest, "text_path": text_name})
        return rec

    if workers <= 1:
        records = [one(e) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, entries))
    records.sort(key=lambda r: (r["cik"], r["date_filed"], r.get("text_path", "")))
    return records


def write_manifest(records: Iterable[dict], path: Path | str) -> None:
    """One JSON object per line; keys sorted for reproducible bytes."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifest(path: Path | str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
