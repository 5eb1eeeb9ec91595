"""Contrastive triad selection: anchor, hard negative and boundary probe for one query."""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, FrozenSet, List, Optional, Pattern, Sequence, Tuple

from models.schemas import (
    FALLBACK_BAND_EXPANDED,
    FALLBACK_DOC_RELAXED,
    FALLBACK_GATE_EMPTY,
    FALLBACK_POOL_DEGRADED,
    QueryContext,
    Role,
    ScoreBreakdown,
    SelectionConfig,
    Triad,
    TriadMember,
)
from services.reference_bank import RankedCandidate, ReferenceBank, cosine_similarity, rank_by_similarity
from utils.exceptions import PoolExhaustedError
from utils.logger import get_logger

logger = get_logger(__name__)

_CONFIG_DIR = Path(__file__).resolve().parents[1] / "config"
_TOKEN_RE = re.compile(r"[^\W_]+")


@lru_cache(maxsize=None)
def load_modality_table(path: Optional[str] = None) -> Tuple[Tuple[str, Tuple[Pattern[str], ...]], ...]:
    """Return (modality, keyword patterns) in table order from the keyword data file.

    A keyword matches at the start of a word, so stems such as "radiograph" also
    cover "radiographs" and "radiographic".
    """
    table_path = Path(path) if path else _CONFIG_DIR / "modality_keywords.json"
    rows = json.loads(table_path.read_text(encoding="utf-8"))
    table = []
    for row in rows:
        patterns = tuple(
            re.compile(r"(?<![0-9a-z])" + re.escape(keyword.lower()))
            for keyword in row["keywords"]
        )
        table.append((row["modality"], patterns))
    return tuple(table)


@lru_cache(maxsize=None)
def load_stopwords(path: Optional[str] = None) -> FrozenSet[str]:
    stop_path = Path(path) if path else _CONFIG_DIR / "stopwords.txt"
    return frozenset(
        line.strip().lower() for line in stop_path.read_text(encoding="utf-8").splitlines() if line.strip()
    )


def _keyword_patterns(modality: str) -> Tuple[Pattern[str], ...]:
    for name, patterns in load_modality_table():
        if name == modality:
            return patterns
    return ()


def _mentions(text: str, patterns: Sequence[Pattern[str]]) -> bool:
    lowered = text.lower()
    return any(p.search(lowered) for p in patterns)


def detect_modality(question_text: str, option_a: str, option_b: str) -> Optional[str]:
    """First modality (in table order) whose keywords appear in the question or options."""
    text = " ".join((question_text, option_a, option_b))
    for modality, patterns in load_modality_table():
        if _mentions(text, patterns):
            return modality
    return None


@dataclass(frozen=True)
class CandidatePool:
    bank: ReferenceBank
    modality: Optional[str]
    fallbacks: Tuple[str, ...] = ()


def gate_candidates(bank: ReferenceBank, modality: Optional[str]) -> CandidatePool:
    """Restrict to entries whose caption mentions *modality*; an empty gate falls back to the full bank."""
    if modality is None:
        return CandidatePool(bank=bank, modality=None)
    patterns = _keyword_patterns(modality)
    kept = [i for i, entry in enumerate(bank.entries) if _mentions(entry.caption, patterns)]
    if not kept:
        logger.debug("No caption mentions %s; skipping modality gate", modality)
        return CandidatePool(bank=bank, modality=modality, fallbacks=(FALLBACK_GATE_EMPTY,))
    return CandidatePool(bank=bank.subset(kept), modality=modality)


@lru_cache(maxsize=65536)
def _tokens(text: str) -> FrozenSet[str]:
    stopwords = load_stopwords()
    return frozenset(tok for tok in _TOKEN_RE.findall(text.lower()) if tok not in stopwords)


def lexical_overlap(caption: str, question_text: str) -> int:
    """Number of distinct non-stopword tokens shared by *caption* and *question_text*."""
    return len(_tokens(caption) & _tokens(question_text))


def select_anchor(ranked_pool: Sequence[RankedCandidate]) -> TriadMember:
    if not ranked_pool:
        raise PoolExhaustedError("cannot select an anchor from an empty pool")
    top = ranked_pool[0]
    return TriadMember(entry=top.entry, role=Role.ANCHOR, similarity_to_query=top.similarity, rank=top.rank)


def _band_candidates(
    ranked_pool: Sequence[RankedCandidate],
    band: Tuple[int, int],
    selected: Sequence[TriadMember],
) -> Tuple[List[RankedCandidate], List[str]]:
    """Eligible candidates for one role after clamping, expansion and document relaxation."""
    size = len(ranked_pool)
    lo, hi = band
    hi = min(hi, size)
    selected_ids = {m.entry.id for m in selected}
    selected_docs = {m.entry.doc_id for m in selected}
    tags: List[str] = []

    while True:
        eligible = [c for c in ranked_pool[lo - 1 : hi] if c.entry.id not in selected_ids] if lo <= hi else []
        if eligible:
            break
        if lo <= 2 and hi >= size:
            raise PoolExhaustedError(f"no candidate left outside {sorted(selected_ids)} in a pool of {size}")
        lo, hi = min(lo, max(2, math.ceil(lo / 2))), min(size, 2 * hi)
        if FALLBACK_BAND_EXPANDED not in tags:
            tags.append(FALLBACK_BAND_EXPANDED)

    distinct = [c for c in eligible if c.entry.doc_id not in selected_docs]
    if distinct:
        return distinct, tags
    tags.append(FALLBACK_DOC_RELAXED)
    return eligible, tags


def _pick(candidates: Sequence[RankedCandidate], key: Callable[[RankedCandidate], float]) -> RankedCandidate:
    return min(candidates, key=lambda c: (key(c), c.entry.id))


def select_hard_negative(
    ranked_pool: Sequence[RankedCandidate],
    anchor: TriadMember,
    band: Tuple[int, int],
    selected: Sequence[TriadMember] = (),
) -> TriadMember:
    """Band candidate with the smallest |cosine| to the anchor."""
    chosen_so_far = [anchor, *[m for m in selected if m.entry.id != anchor.entry.id]]
    candidates, tags = _band_candidates(ranked_pool, band, chosen_so_far)
    anchor_vec = anchor.entry.embedding
    best = _pick(candidates, lambda c: abs(cosine_similarity(c.entry.embedding, anchor_vec)))
    return TriadMember(
        entry=best.entry,
        role=Role.HARD_NEGATIVE,
        similarity_to_query=best.similarity,
        rank=best.rank,
        fallback_applied=tuple(tags),
    )


def boundary_score(candidate: RankedCandidate, anchor: TriadMember, question_text: str) -> ScoreBreakdown:
    """(kappa + 1) * s(x, r) * (1 - s(r, r1))."""
    kappa = lexical_overlap(candidate.entry.caption, question_text)
    s_rr1 = cosine_similarity(candidate.entry.embedding, anchor.entry.embedding)
    score = (kappa + 1) * candidate.similarity * (1.0 - s_rr1)
    return ScoreBreakdown(kappa=kappa, s_xr=candidate.similarity, s_rr1=s_rr1, score=score)


def select_boundary_probe(
    ranked_pool: Sequence[RankedCandidate],
    anchor: TriadMember,
    ctx: QueryContext,
    band: Tuple[int, int],
    selected: Sequence[TriadMember] = (),
) -> TriadMember:
    """Band candidate maximising relevance x anchor-dissimilarity x caption overlap."""
    chosen_so_far = [anchor, *[m for m in selected if m.entry.id != anchor.entry.id]]
    candidates, tags = _band_candidates(ranked_pool, band, chosen_so_far)
    scored = {c.entry.id: boundary_score(c, anchor, ctx.question_text) for c in candidates}
    best = _pick(candidates, lambda c: -scored[c.entry.id].score)
    return TriadMember(
        entry=best.entry,
        role=Role.BOUNDARY_PROBE,
        similarity_to_query=best.similarity,
        rank=best.rank,
        score_breakdown=scored[best.entry.id],
        fallback_applied=tuple(tags),
    )


def _top_k(ranked: Sequence[RankedCandidate], ctx: QueryContext) -> List[TriadMember]:
    roles = (Role.ANCHOR, Role.HARD_NEGATIVE, Role.BOUNDARY_PROBE)
    members: List[TriadMember] = []
    for role, candidate in zip(roles, ranked):
        breakdown = None
        if role is Role.BOUNDARY_PROBE:
            breakdown = boundary_score(candidate, members[0], ctx.question_text)
        members.append(
            TriadMember(
                entry=candidate.entry,
                role=role,
                similarity_to_query=candidate.similarity,
                rank=candidate.rank,
                score_breakdown=breakdown,
            )
        )
    return members


def select_triad(
    bank: ReferenceBank,
    ctx: QueryContext,
    config: Optional[SelectionConfig] = None,
    *,
    retrieval: str = "triad",
) -> Triad:
    """Build the reference triad for *ctx* from a deduplicated *bank*."""
    config = config or SelectionConfig()
    modality = detect_modality(ctx.question_text, ctx.option_a, ctx.option_b)
    pool = gate_candidates(bank, modality)
    ranked = rank_by_similarity(pool.bank, ctx.query_embedding)
    fallbacks = list(pool.fallbacks)

    if retrieval == "topk":
        members = _top_k(ranked, ctx)
    else:
        anchor = select_anchor(ranked)
        members = [anchor]
        try:
            members.append(select_hard_negative(ranked, anchor, config.band_hard_negative))
            members.append(
                select_boundary_probe(ranked, anchor, ctx, config.band_boundary_probe, selected=members[1:])
            )
        except PoolExhaustedError as exc:
            logger.debug("Query %s: %s", ctx.query_id, exc)

    if len(members) < 3:
        logger.warning("Query %s: pool of %d yields a %d-member triad", ctx.query_id, len(ranked), len(members))
        fallbacks.append(FALLBACK_POOL_DEGRADED)
    return Triad(query_id=ctx.query_id, members=tuple(members), modality=modality, fallbacks=tuple(fallbacks))
