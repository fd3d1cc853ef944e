"""Cosine-similarity ranking and the six standard retrieval metrics.

For each query the gallery is sorted by descending cosine similarity (ties
broken by ascending gallery position) and the binary relevance sequence of
that ranking feeds six metrics: nearest neighbor, first/second tier,
E-measure at a fixed cutoff, normalised discounted cumulated gain, and
average precision.  With R the number of gallery items sharing the query's
label and rel_k the relevance at rank k:

  NN  = rel_1
  FT  = (relevant within top R) / R
  ST  = (relevant within top min(2R, G)) / R
  E   = 2 P Rc / (P + Rc) at cutoff K = min(32, G), 0 if nothing relevant
  DCG = (rel_1 + sum_{k>=2} rel_k / log2 k) / (ideal list's value)
  AP  = (1/R) sum over relevant ranks k of precision@k

Queries with no relevant gallery item have no defined metrics; they are
excluded from averages and counted in the report.  Aggregation uses exactly
rounded summation (math.fsum), so any correct implementation of these
definitions produces bit-identical averages.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .ops import cosine_matrix

E_MEASURE_CUTOFF = 32
PR_RECALL_LEVELS = tuple(i / 10.0 for i in range(11))


@dataclass
class RankedList:
    """One query's gallery ordering, best match first."""

    query_id: str
    gallery_ids: list
    relevance: np.ndarray  # 0/1 per rank

    @property
    def num_relevant(self) -> int:
        return int(self.relevance.sum())


@dataclass
class PerQueryMetrics:
    query_id: str
    nn: float
    ft: float
    st: float
    e: float
    dcg: float
    ap: float


@dataclass
class MetricReport:
    nn: float
    ft: float
    st: float
    e: float
    dcg: float
    map: float
    per_query: list = field(default_factory=list)
    pr_curve: list = field(default_factory=list)  # (recall, precision) pairs
    num_queries: int = 0
    num_excluded: int = 0
    excluded_ids: list = field(default_factory=list)

    @property
    def per_query_ap(self) -> list:
        return [q.ap for q in self.per_query]


def rank(queries, gallery, query_labels, gallery_labels, query_ids=None, gallery_ids=None):
    """RankedList per query: descending cosine, ties by gallery position.

    >>> import numpy as np
    >>> ranked = rank(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0], [2.0, 0.0]]),
    ...               np.array([7]), np.array([3, 7]))
    >>> ranked[0].gallery_ids, ranked[0].relevance.tolist()
    ([1, 0], [1, 0])
    """
    queries = np.asarray(queries, dtype=np.float64)
    gallery = np.asarray(gallery, dtype=np.float64)
    if gallery.shape[0] < 1:
        raise ValueError("gallery must not be empty")
    sims = cosine_matrix(queries, gallery)
    query_labels = np.asarray(query_labels, dtype=np.int64)
    gallery_labels = np.asarray(gallery_labels, dtype=np.int64)
    if query_ids is None:
        query_ids = list(range(queries.shape[0]))
    if gallery_ids is None:
        gallery_ids = list(range(gallery.shape[0]))
    positions = np.arange(gallery.shape[0])
    ranked = []
    for i in range(queries.shape[0]):
        order = np.lexsort((positions, -sims[i]))
        rel = (gallery_labels[order] == query_labels[i]).astype(np.int64)
        ranked.append(RankedList(str(query_ids[i]), [gallery_ids[j] for j in order], rel))
    return ranked


def _require_relevant(r: RankedList) -> int:
    total = r.num_relevant
    if total < 1:
        raise ValueError(f"query {r.query_id}: no relevant gallery items, metrics undefined")
    return total


def average_precision(r: RankedList) -> float:
    """Mean of precision@k over the ranks k that hold a relevant item.

    >>> ap = average_precision(RankedList("q", [0, 1, 2, 3], np.array([1, 0, 1, 0])))
    >>> round(ap, 6)
    0.833333
    """
    total = _require_relevant(r)
    hits = 0
    precisions = []
    for k, rel in enumerate(r.relevance, start=1):
        if rel:
            hits += 1
            precisions.append(hits / k)
    return math.fsum(precisions) / total


def tier_metrics(r: RankedList):
    """(NN, FT, ST): top-1 relevance, recall within top R and top 2R."""
    total = _require_relevant(r)
    size = len(r.relevance)
    nn = float(r.relevance[0])
    ft = int(r.relevance[:total].sum()) / total
    st = int(r.relevance[: min(2 * total, size)].sum()) / total
    return nn, ft, st


def e_measure(r: RankedList, cutoff: int = E_MEASURE_CUTOFF) -> float:
    """Harmonic mean of precision and recall at a fixed cutoff."""
    total = _require_relevant(r)
    k = min(cutoff, len(r.relevance))
    hits = int(r.relevance[:k].sum())
    if hits == 0:
        return 0.0
    precision = hits / k
    recall = hits / total
    return 2.0 * precision * recall / (precision + recall)


def _discount_table(size: int) -> list:
    # rank 1 undiscounted; rank k >= 2 contributes 1 / log2(k)
    return [1.0] + [1.0 / math.log2(k) for k in range(2, size + 1)]


def dcg(r: RankedList) -> float:
    """Discounted cumulated gain normalised by the ideal ordering's value.

    >>> round(dcg(RankedList("q", [0, 1, 2, 3], np.array([0, 0, 0, 1]))), 6)
    0.5
    """
    total = _require_relevant(r)
    size = len(r.relevance)
    table = _discount_table(size)
    gain = math.fsum(table[k] for k in range(size) if r.relevance[k])
    ideal = math.fsum(table[:total])
    return gain / ideal


def _interpolated_precisions(r: RankedList):
    """Precision interpolated at the 11 standard recall levels."""
    total = _require_relevant(r)
    hits = 0
    precs = []
    recalls = []
    for k, rel in enumerate(r.relevance, start=1):
        hits += int(rel)
        precs.append(hits / k)
        recalls.append(hits / total)
    out = []
    for level in PR_RECALL_LEVELS:
        best = 0.0
        for prec, rec in zip(precs, recalls):
            if rec >= level and prec > best:
                best = prec
        out.append(best)
    return out


def query_metrics(r: RankedList, e_cutoff: int = E_MEASURE_CUTOFF) -> PerQueryMetrics:
    nn, ft, st = tier_metrics(r)
    return PerQueryMetrics(r.query_id, nn, ft, st, e_measure(r, e_cutoff), dcg(r), average_precision(r))


def evaluate(
    queries,
    gallery,
    query_labels,
    gallery_labels,
    query_ids=None,
    gallery_ids=None,
    e_cutoff: int = E_MEASURE_CUTOFF,
) -> MetricReport:
    """Rank every query and average the six metrics over queries that have
    at least one relevant gallery item; also builds the averaged 11-point
    interpolated precision-recall curve."""
    ranked = rank(queries, gallery, query_labels, gallery_labels, query_ids, gallery_ids)
    per_query = []
    excluded = []
    pr_columns = [[] for _ in PR_RECALL_LEVELS]
    for r in ranked:
        if r.num_relevant < 1:
            excluded.append(r.query_id)
            continue
        per_query.append(query_metrics(r, e_cutoff))
        for column, prec in zip(pr_columns, _interpolated_precisions(r)):
            column.append(prec)
    if not per_query:
        raise ValueError("no query has a relevant gallery item; nothing to evaluate")

    n = len(per_query)
    report = MetricReport(
        nn=math.fsum(q.nn for q in per_query) / n,
        ft=math.fsum(q.ft for q in per_query) / n,
        st=math.fsum(q.st for q in per_query) / n,
        e=math.fsum(q.e for q in per_query) / n,
        dcg=math.fsum(q.dcg for q in per_query) / n,
        map=math.fsum(q.ap for q in per_query) / n,
        per_query=per_query,
        pr_curve=[(level, math.fsum(col) / n) for level, col in zip(PR_RECALL_LEVELS, pr_columns)],
        num_queries=n,
        num_excluded=len(excluded),
        excluded_ids=excluded,
    )
    return report


def write_metric_report(report: MetricReport, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for key in ("nn", "ft", "st", "e", "dcg", "map"):
            fh.write(f"{key} = {getattr(report, key)!r}\n")
        fh.write(f"num_queries = {report.num_queries}\n")
        fh.write(f"num_excluded = {report.num_excluded}\n")
        if report.excluded_ids:
            fh.write(f"excluded_ids = {','.join(report.excluded_ids)}\n")


def write_per_query_csv(report: MetricReport, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("query_id,nn,ft,st,e,dcg,ap\n")
        for q in report.per_query:
            fh.write(f"{q.query_id},{q.nn!r},{q.ft!r},{q.st!r},{q.e!r},{q.dcg!r},{q.ap!r}\n")


def write_pr_curve(report: MetricReport, path) -> None:
    """Two columns, 'recall precision', one line per recall level."""
    with open(path, "w", encoding="ascii") as fh:
        for recall, precision in report.pr_curve:
            fh.write(f"{recall!r} {precision!r}\n")
