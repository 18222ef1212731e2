"""Synthetic document corpus: cost-model stand-ins for PDF files.

Documents are a pure function of (corpus seed, index), and every page
trait is a pure function of the page seed, so any component (pipeline
stage, model endpoint, oracle in a test) derives identical values
without sharing state.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

# calibrated to the reference corpus: 8053 documents, 156 529 pages,
# 20.7 GB, 3 whole-document failures, ~160 docs with ~504 failed pages
MEAN_PAGES_PER_DOC = 156_529 / 8_053
WHOLE_DOC_FAILURE_RATE = 3 / 8_053
PAGE_FAILURE_DOC_RATE = 160 / 8_053
MEAN_FAILED_PAGES_PER_AFFECTED_DOC = 504 / 160
MEAN_PAGE_BYTES = 20_700_000_000 / 156_529


@dataclass
class CorpusShape:
    mean_pages: float = MEAN_PAGES_PER_DOC
    sigma: float = 0.9  # log-normal shape of the page-count distribution
    max_pages: int = 300
    table_rate: float = 0.3
    whole_doc_failure_rate: float = WHOLE_DOC_FAILURE_RATE
    page_failure_doc_rate: float = PAGE_FAILURE_DOC_RATE
    mean_failed_pages: float = MEAN_FAILED_PAGES_PER_AFFECTED_DOC
    complexity_sigma: float = 0.25

    def __post_init__(self) -> None:
        if self.mean_pages <= 0 or self.max_pages < 1:
            raise ValueError("invalid corpus shape")
        if not (0 <= self.whole_doc_failure_rate <= 1 and 0 <= self.page_failure_doc_rate <= 1):
            raise ValueError("failure rates must be probabilities")


def mix_seed(*parts: int) -> int:
    """Stable 63-bit mix of integer parts (splitmix-style)."""
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h ^= (p + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
        h = (h * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        h ^= h >> 31
    return h & 0x7FFFFFFFFFFFFFFF


def page_traits(page_seed: int, table_rate: float = 0.3, complexity_sigma: float = 0.25) -> dict:
    """Deterministic per-page properties derived from the page seed."""
    rng = random.Random(page_seed)
    has_table = rng.random() < table_rate
    n_tables = rng.randint(1, 3) if has_table else 0
    text_cells = rng.randint(5, 40)
    complexity = min(max(rng.lognormvariate(0.0, complexity_sigma), 0.25), 4.0)
    return {
        "has_table": has_table,
        "n_tables": n_tables,
        "text_cells": text_cells,
        "complexity": complexity,
    }


@dataclass(frozen=True)
class PageSpec:
    page_no: int  # 1-based
    seed: int
    has_table: bool
    n_tables: int
    text_cell_count: int
    complexity: float
    fail_page: bool = False

    @staticmethod
    def derive(doc_seed: int, page_no: int, fail: bool = False, shape: CorpusShape | None = None) -> "PageSpec":
        shape = shape or CorpusShape()
        seed = mix_seed(doc_seed, page_no)
        t = page_traits(seed, shape.table_rate, shape.complexity_sigma)
        return PageSpec(
            page_no=page_no,
            seed=seed,
            has_table=t["has_table"],
            n_tables=t["n_tables"],
            text_cell_count=t["text_cells"],
            complexity=t["complexity"],
            fail_page=fail,
        )

    def to_dict(self) -> dict:
        return {
            "page_no": self.page_no,
            "seed": self.seed,
            "has_table": self.has_table,
            "n_tables": self.n_tables,
            "text_cell_count": self.text_cell_count,
            "complexity": self.complexity,
            "fail_page": self.fail_page,
        }

    @staticmethod
    def from_dict(d: dict) -> "PageSpec":
        return PageSpec(
            page_no=d["page_no"],
            seed=d["seed"],
            has_table=d["has_table"],
            n_tables=d["n_tables"],
            text_cell_count=d["text_cell_count"],
            complexity=d["complexity"],
            fail_page=d.get("fail_page", False),
        )


@dataclass
class SyntheticDocument:
    doc_id: str
    page_count: int
    seed: int
    fail_whole_doc: bool = False
    fail_pages: tuple[int, ...] = ()
    binary_size: int = 0
    _pages: list[PageSpec] | None = field(default=None, repr=False, compare=False)

    @property
    def pages(self) -> list[PageSpec]:
        if self._pages is None:
            failed = set(self.fail_pages)
            self._pages = [
                PageSpec.derive(self.seed, i, fail=i in failed) for i in range(1, self.page_count + 1)
            ]
        return self._pages

    def row(self) -> dict:
        """JSONL row; pages are regenerated from the seed on load."""
        return {
            "doc_id": self.doc_id,
            "page_count": self.page_count,
            "seed": self.seed,
            "fail_whole_doc": self.fail_whole_doc,
            "fail_pages": list(self.fail_pages),
            "binary_size": self.binary_size,
        }

    @staticmethod
    def from_row(row: dict) -> "SyntheticDocument":
        return SyntheticDocument(
            doc_id=row["doc_id"],
            page_count=row["page_count"],
            seed=row["seed"],
            fail_whole_doc=row.get("fail_whole_doc", False),
            fail_pages=tuple(row.get("fail_pages", ())),
            binary_size=row.get("binary_size", 0),
        )


def _poisson(rng: random.Random, lam: float) -> int:
    # Knuth's method; lam is small here
    limit = math.exp(-lam)
    k, p = 0, 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1


def generate_corpus(n_docs: int, seed: int, shape: CorpusShape | None = None) -> list[SyntheticDocument]:
    """Deterministic corpus of `n_docs`; extending n keeps earlier docs."""
    if n_docs < 0:
        raise ValueError("n_docs must be >= 0")
    shape = shape or CorpusShape()
    mu = math.log(shape.mean_pages) - shape.sigma**2 / 2
    docs = []
    for i in range(n_docs):
        doc_seed = mix_seed(seed, i)
        rng = random.Random(doc_seed)
        pages = int(round(rng.lognormvariate(mu, shape.sigma)))
        pages = min(max(pages, 1), shape.max_pages)
        fail_whole = rng.random() < shape.whole_doc_failure_rate
        fail_pages: tuple[int, ...] = ()
        if rng.random() < shape.page_failure_doc_rate:
            k = min(1 + _poisson(rng, shape.mean_failed_pages - 1), pages)
            fail_pages = tuple(sorted(rng.sample(range(1, pages + 1), k)))
        size = int(pages * rng.lognormvariate(math.log(MEAN_PAGE_BYTES * 0.94), 0.35))
        docs.append(
            SyntheticDocument(
                doc_id=f"doc-{i:06d}",
                page_count=pages,
                seed=doc_seed,
                fail_whole_doc=fail_whole,
                fail_pages=fail_pages,
                binary_size=size,
            )
        )
    return docs


def make_document(doc_id: str, page_count: int, seed: int = 1, fail_whole_doc: bool = False, fail_pages: Iterable[int] = ()) -> SyntheticDocument:
    """Hand-built document for experiments and oracles."""
    return SyntheticDocument(
        doc_id=doc_id,
        page_count=page_count,
        seed=mix_seed(seed, 0xD0C),
        fail_whole_doc=fail_whole_doc,
        fail_pages=tuple(sorted(fail_pages)),
    )


def total_pages(docs: Iterable[SyntheticDocument]) -> int:
    return sum(d.page_count for d in docs)


def write_corpus(docs: Iterable[SyntheticDocument], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.row(), sort_keys=True) + "\n")


def read_corpus(path: str | Path) -> list[SyntheticDocument]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                docs.append(SyntheticDocument.from_row(json.loads(line)))
    return docs
