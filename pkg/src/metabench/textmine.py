"""Classical NLP enrichment: TF-IDF, LSA and LDA topics, embedding-similarity
keyphrases, and rule-based entity tagging.

All operations are pure given their inputs and deterministic given their
seeds; tie-breaking is lexicographic on term or phrase text throughout.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from metabench import _textutil, kernels
from metabench._textutil import default_gazetteer, default_stopwords, tokenize
from metabench.errors import DataError

ENTITY_LABELS = frozenset({"LOC", "ORG", "MISC"})
_CONNECTORS = frozenset({"of", "for", "and"})
_NER_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z0-9'’-]*")


# ---------------------------------------------------------------------------
# TF-IDF substrate
# ---------------------------------------------------------------------------

@dataclass
class TfidfModel:
    """Dense doc-term TF-IDF matrix with L2-normalized rows.

    vocabulary maps term -> column; terms is the same mapping as a
    lexicographically ordered list. Rows for docs that tokenize to nothing
    stay all-zero.
    """

    vocabulary: dict[str, int]
    terms: list[str]
    idf: np.ndarray
    matrix: np.ndarray
    n_docs: int


def _count_vector(tokens: list[str], vocabulary: dict[str, int]) -> np.ndarray:
    vec = np.zeros(len(vocabulary), dtype=np.float64)
    for tok in tokens:
        col = vocabulary.get(tok)
        if col is not None:
            vec[col] += 1.0
    return vec


def build_tfidf(docs: list[str], min_df: int = 1,
                stopwords: frozenset[str] | set[str] | None = None) -> TfidfModel:
    """Build the TF-IDF substrate over a corpus.

    idf(t) = ln((1+N)/(1+df(t))) + 1 over N docs; terms below min_df are
    dropped; vocabulary order is lexicographic.
    """
    if not docs:
        raise ValueError("build_tfidf requires a non-empty corpus")
    token_lists = [tokenize(d, stopwords) for d in docs]
    if not any(token_lists):
        raise ValueError("every document is empty after tokenization")
    df: dict[str, int] = {}
    for toks in token_lists:
        for term in set(toks):
            df[term] = df.get(term, 0) + 1
    terms = sorted(t for t, n in df.items() if n >= min_df)
    if not terms:
        raise ValueError(f"no terms survive min_df={min_df}")
    vocabulary = {t: i for i, t in enumerate(terms)}
    n = len(docs)
    idf = np.array([np.log((1 + n) / (1 + df[t])) + 1.0 for t in terms], dtype=np.float64)
    matrix = np.zeros((n, len(terms)), dtype=np.float64)
    for i, toks in enumerate(token_lists):
        row = _count_vector(toks, vocabulary) * idf
        norm = np.linalg.norm(row)
        matrix[i] = row / norm if norm else row
    return TfidfModel(vocabulary=vocabulary, terms=terms, idf=idf, matrix=matrix, n_docs=n)


def tfidf_transform(model: TfidfModel, text: str,
                    stopwords: frozenset[str] | set[str] | None = None) -> np.ndarray:
    """Project a new text onto the model vocabulary (L2-normalized)."""
    row = _count_vector(tokenize(text, stopwords), model.vocabulary) * model.idf
    norm = np.linalg.norm(row)
    return row / norm if norm else row


# ---------------------------------------------------------------------------
# Topic extraction
# ---------------------------------------------------------------------------

@dataclass
class TopicSet:
    """Ordered topic labels; each label is the topic's top terms joined by a
    single space."""

    topics: list[str]
    method: str
    truncated: bool = False


@dataclass
class LsaSpace:
    """Truncated SVD of a TF-IDF matrix.

    components holds the sign-normalized right singular vectors (one row per
    topic); doc_loadings holds the doc coordinates (U * S). For any new
    tf-idf row v the coordinates are components @ v.
    """

    components: np.ndarray
    singular_values: np.ndarray
    doc_loadings: np.ndarray
    truncated: bool


def fit_lsa(model: TfidfModel, k: int) -> LsaSpace:
    """Rank-k truncated SVD of the doc-term matrix.

    When k exceeds the numerical rank the space holds rank(A) components and
    is flagged truncated. Each component is sign-normalized so its
    largest-magnitude loading is positive (first index wins ties).
    """
    if k < 1:
        raise ValueError(f"topic count must be >= 1, got {k}")
    u, s, vt = np.linalg.svd(model.matrix, full_matrices=False)
    tol = max(model.matrix.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if rank == 0:
        raise ValueError("doc-term matrix has rank 0")
    k_eff = min(k, rank)
    components = vt[:k_eff].copy()
    u_k = u[:, :k_eff].copy()
    for i in range(k_eff):
        peak = int(np.argmax(np.abs(components[i])))
        if components[i, peak] < 0:
            components[i] = -components[i]
            u_k[:, i] = -u_k[:, i]
    return LsaSpace(
        components=components,
        singular_values=s[:k_eff].copy(),
        doc_loadings=u_k * s[:k_eff],
        truncated=k_eff < k,
    )


def component_label(loadings: np.ndarray, terms: list[str], m: int) -> str:
    """Top-m terms by absolute loading, ties broken lexicographically."""
    m_eff = min(m, len(terms))
    order = sorted(range(len(terms)), key=lambda j: (-abs(loadings[j]), terms[j]))
    return " ".join(terms[j] for j in order[:m_eff])


def lsa_topics(model: TfidfModel, k: int, m: int) -> TopicSet:
    space = fit_lsa(model, k)
    labels = [component_label(space.components[i], model.terms, m)
              for i in range(space.components.shape[0])]
    return TopicSet(topics=labels, method="lsa", truncated=space.truncated)


@dataclass
class LdaModel:
    terms: list[str]
    doc_topic: np.ndarray
    topic_term: np.ndarray
    topic_totals: np.ndarray
    alpha: float
    beta: float


def fit_lda(docs: list[str], k: int, seed: int = 42, iters: int = 500,
            alpha: float | None = None, beta: float = 0.01,
            stopwords: frozenset[str] | set[str] | None = None) -> LdaModel:
    """Fit LDA by collapsed Gibbs sampling; fully deterministic given seed."""
    if k < 1:
        raise ValueError(f"topic count must be >= 1, got {k}")
    if iters < 1:
        raise ValueError(f"iteration count must be >= 1, got {iters}")
    token_lists = [tokenize(d, stopwords) for d in docs]
    if not any(token_lists):
        raise ValueError("every document is empty after tokenization")
    terms = sorted({t for toks in token_lists for t in toks})
    term_to_id = {t: i for i, t in enumerate(terms)}
    doc_ids: list[int] = []
    term_ids: list[int] = []
    for d, toks in enumerate(token_lists):
        for tok in toks:
            doc_ids.append(d)
            term_ids.append(term_to_id[tok])
    if alpha is None:
        alpha = 50.0 / k
    _, n_dk, n_kt, n_k = kernels.lda_gibbs(
        np.asarray(doc_ids, dtype=np.int32),
        np.asarray(term_ids, dtype=np.int32),
        len(docs), len(terms), k, float(alpha), float(beta), int(iters), seed,
    )
    return LdaModel(terms=terms, doc_topic=n_dk, topic_term=n_kt,
                    topic_totals=n_k, alpha=float(alpha), beta=float(beta))


def lda_label(lda: LdaModel, topic: int, m: int) -> str:
    # (count + beta) smoothing is monotone in count, so rank by raw count
    counts = lda.topic_term[topic]
    order = sorted(range(len(lda.terms)), key=lambda j: (-counts[j], lda.terms[j]))
    return " ".join(lda.terms[j] for j in order[: min(m, len(lda.terms))])


def lda_topics(docs: list[str], k: int, m: int, seed: int = 42, iters: int = 500,
               alpha: float | None = None, beta: float = 0.01,
               stopwords: frozenset[str] | set[str] | None = None) -> TopicSet:
    lda = fit_lda(docs, k, seed=seed, iters=iters, alpha=alpha, beta=beta,
                  stopwords=stopwords)
    return TopicSet(topics=[lda_label(lda, i, m) for i in range(k)], method="lda")


# ---------------------------------------------------------------------------
# Keyphrase extraction
# ---------------------------------------------------------------------------

@dataclass
class KeyphraseSet:
    """Phrases with cosine-to-document scores, scores non-increasing."""

    phrases: list[tuple[str, float]]

    def surfaces(self) -> list[str]:
        return [p for p, _ in self.phrases]


def keyphrase_candidates(doc: str, ngram_max: int,
                         stopwords: frozenset[str] | set[str]) -> list[str]:
    """All 1..ngram_max token n-grams with no stopword (or sub-2-char token)
    at either edge, deduplicated, in (length, position) order."""
    toks = _textutil.words(doc)

    def edge_ok(tok: str) -> bool:
        return len(tok) >= 2 and tok not in stopwords

    out: list[str] = []
    seen: set[str] = set()
    for n in range(1, ngram_max + 1):
        for i in range(len(toks) - n + 1):
            gram = toks[i : i + n]
            if not edge_ok(gram[0]) or not edge_ok(gram[-1]):
                continue
            phrase = " ".join(gram)
            if phrase not in seen:
                seen.add(phrase)
                out.append(phrase)
    return out


def extract_keyphrases(doc: str, embedder, top_n: int = 10, ngram_max: int = 2,
                       mmr_lambda: float = 0.5,
                       stopwords: frozenset[str] | set[str] | None = None) -> KeyphraseSet:
    """Rank candidate n-grams by embedding cosine to the whole document.

    With mmr_lambda < 1 the returned subset is chosen by maximal marginal
    relevance (diversity-aware); the final list is always ordered by
    relevance score descending, ties lexicographic.
    """
    if not 0.0 <= mmr_lambda <= 1.0:
        raise ValueError(f"mmr_lambda must be in [0, 1], got {mmr_lambda}")
    if not _textutil.words(doc):
        raise ValueError("document is empty after tokenization")
    if stopwords is None:
        stopwords = default_stopwords()
    candidates = keyphrase_candidates(doc, ngram_max, stopwords)
    if top_n <= 0 or not candidates:
        return KeyphraseSet([])

    vecs = embedder.embed([doc] + candidates)
    doc_vec = vecs[0]
    if doc_vec.is_zero:
        raise ValueError("document embeds to the zero sentinel")
    cand_vecs = {c: v.values for c, v in zip(candidates, vecs[1:])}
    rel = {
        c: float(np.clip(np.dot(cand_vecs[c], doc_vec.values), -1.0, 1.0))
        for c in candidates
    }
    ranked = sorted(candidates, key=lambda c: (-rel[c], c))

    if mmr_lambda == 1.0:
        chosen = ranked[:top_n]
    else:
        chosen = [ranked[0]]
        remaining = ranked[1:]
        while remaining and len(chosen) < top_n:
            best = None
            best_score = -np.inf
            for c in remaining:
                redundancy = max(float(np.dot(cand_vecs[c], cand_vecs[s])) for s in chosen)
                score = mmr_lambda * rel[c] - (1.0 - mmr_lambda) * redundancy
                if score > best_score:
                    best, best_score = c, score
            remaining.remove(best)
            chosen.append(best)
        chosen.sort(key=lambda c: (-rel[c], c))
    return KeyphraseSet([(c, rel[c]) for c in chosen])


# ---------------------------------------------------------------------------
# Rule-based entity tagging
# ---------------------------------------------------------------------------

@dataclass
class EntitySet:
    entities: list[tuple[str, str]]

    def surfaces(self) -> list[str]:
        return [s for s, _ in self.entities]


def _capitalized(tok: str) -> bool:
    return tok[0].isupper()


def _build_runs(doc: str) -> list[list[tuple[str, int, int]]]:
    """Maximal runs of capitalized tokens; lowercase of/for/and may join a
    run only when flanked by capitalized tokens. Tokens chain only across
    plain spaces (punctuation or newlines break a run)."""
    tokens = [(m.group(), m.start(), m.end()) for m in _NER_TOKEN_RE.finditer(doc)]

    def adjacent(a: int, b: int) -> bool:
        gap = doc[tokens[a][2] : tokens[b][1]]
        return bool(gap) and gap.strip(" ") == ""

    runs: list[list[tuple[str, int, int]]] = []
    i = 0
    while i < len(tokens):
        if not _capitalized(tokens[i][0]):
            i += 1
            continue
        run = [tokens[i]]
        j = i
        while True:
            nxt = j + 1
            if nxt < len(tokens) and adjacent(j, nxt) and _capitalized(tokens[nxt][0]):
                run.append(tokens[nxt])
                j = nxt
                continue
            if (
                nxt + 1 < len(tokens)
                and adjacent(j, nxt)
                and adjacent(nxt, nxt + 1)
                and tokens[nxt][0] in _CONNECTORS
                and _capitalized(tokens[nxt + 1][0])
            ):
                run.append(tokens[nxt])
                run.append(tokens[nxt + 1])
                j = nxt + 1
                continue
            break
        runs.append(run)
        i = j + 1
    return runs


def extract_entities(doc: str, gazetteer: dict[str, str] | None = None) -> EntitySet:
    """Tag capitalized runs, segmenting each by greedy longest gazetteer
    match; unmatched leftovers (minus dangling connectors) become MISC."""
    if gazetteer is None:
        gazetteer = default_gazetteer()
    gaz: dict[tuple[str, ...], str] = {}
    max_key = 1
    for surface, label in gazetteer.items():
        if label not in ENTITY_LABELS:
            raise ValueError(f"gazetteer label {label!r} not in {sorted(ENTITY_LABELS)}")
        key = tuple(surface.split())
        gaz[key] = label
        max_key = max(max_key, len(key))

    entities: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()

    def emit(surface: str, label: str) -> None:
        if (surface, label) not in seen:
            seen.add((surface, label))
            entities.append((surface, label))

    def flush_misc(segment: list[tuple[str, int, int]]) -> None:
        while segment and segment[0][0] in _CONNECTORS:
            segment = segment[1:]
        while segment and segment[-1][0] in _CONNECTORS:
            segment = segment[:-1]
        if segment and any(_capitalized(t[0]) for t in segment):
            emit(doc[segment[0][1] : segment[-1][2]], "MISC")

    for run in _build_runs(doc):
        pos = 0
        pending: list[tuple[str, int, int]] = []
        while pos < len(run):
            hit = None
            for length in range(min(max_key, len(run) - pos), 0, -1):
                key = tuple(t[0] for t in run[pos : pos + length])
                if key in gaz:
                    hit = (length, gaz[key])
                    break
            if hit:
                flush_misc(pending)
                pending = []
                length, label = hit
                emit(doc[run[pos][1] : run[pos + length - 1][2]], label)
                pos += length
            else:
                pending.append(run[pos])
                pos += 1
        flush_misc(pending)
    return EntitySet(entities)


# ---------------------------------------------------------------------------
# Description enrichment
# ---------------------------------------------------------------------------

@dataclass
class TextmineParams:
    topics_k: int = 10
    topic_terms: int = 5
    topics_per_doc: int = 2
    top_n_keyphrases: int = 10
    ngram_max: int = 2
    mmr_lambda: float = 0.5
    min_df: int = 1
    use_lda: bool = False
    lda_iters: int = 500
    lda_alpha: float | None = None
    lda_beta: float = 0.01
    seed: int = 42


@dataclass
class EnrichmentResult:
    keywords: list[str]
    topics: list[str]
    enriched: bool


class DescriptionEnricher:
    """Corpus-level enrichment context for one description field.

    Builds the TF-IDF model and LSA space (plus LDA when enabled) over the
    corpus once; enrich() then derives keywords and topic labels for any
    description. LDA labels are only assigned to texts that are corpus
    members, since assignment reads the fitted doc-topic counts.
    """

    def __init__(self, corpus_docs: list[str], embedder,
                 params: TextmineParams | None = None,
                 stopwords: frozenset[str] | set[str] | None = None,
                 gazetteer: dict[str, str] | None = None):
        if not corpus_docs:
            raise DataError("enrichment corpus is empty")
        self.params = params or TextmineParams()
        self.embedder = embedder
        self.stopwords = default_stopwords() if stopwords is None else stopwords
        self.gazetteer = default_gazetteer() if gazetteer is None else gazetteer
        p = self.params
        self.model = build_tfidf(corpus_docs, min_df=p.min_df, stopwords=self.stopwords)
        self.space = fit_lsa(self.model, p.topics_k)
        self.lsa_labels = [
            component_label(self.space.components[i], self.model.terms, p.topic_terms)
            for i in range(self.space.components.shape[0])
        ]
        self.lda: LdaModel | None = None
        self.lda_labels: list[str] = []
        self._doc_index: dict[str, int] = {}
        if p.use_lda:
            self.lda = fit_lda(corpus_docs, p.topics_k, seed=p.seed, iters=p.lda_iters,
                               alpha=p.lda_alpha, beta=p.lda_beta, stopwords=self.stopwords)
            self.lda_labels = [lda_label(self.lda, i, p.topic_terms)
                               for i in range(self.lda.doc_topic.shape[1])]
            for i, doc in enumerate(corpus_docs):
                self._doc_index.setdefault(doc, i)

    def _lsa_topic_labels(self, text: str) -> list[str]:
        vec = tfidf_transform(self.model, text, self.stopwords)
        if not np.any(vec):
            return []
        loadings = self.space.components @ vec
        order = sorted(range(len(loadings)), key=lambda i: (-abs(loadings[i]), i))
        labels = []
        for i in order[: self.params.topics_per_doc]:
            if self.lsa_labels[i] not in labels:
                labels.append(self.lsa_labels[i])
        return labels

    def _lda_topic_labels(self, text: str) -> list[str]:
        if self.lda is None:
            return []
        row = self._doc_index.get(text)
        if row is None:
            return []
        counts = self.lda.doc_topic[row]
        order = sorted(range(len(counts)), key=lambda i: (-counts[i], i))
        return [self.lda_labels[i] for i in order[: self.params.topics_per_doc]]

    def enrich(self, text: str | None) -> EnrichmentResult:
        """Derive (keywords, topics) for one description.

        Empty or alphanumeric-free text yields empty outputs flagged as not
        enriched. Keywords are keyphrase surfaces first, then entity
        surfaces, deduplicated case-insensitively.
        """
        if not text or not _textutil.words(text):
            return EnrichmentResult([], [], False)
        p = self.params
        phrases = extract_keyphrases(
            text, self.embedder, top_n=p.top_n_keyphrases,
            ngram_max=p.ngram_max, mmr_lambda=p.mmr_lambda, stopwords=self.stopwords,
        )
        entities = extract_entities(text, self.gazetteer)
        keywords: list[str] = []
        seen: set[str] = set()
        for surface in phrases.surfaces() + entities.surfaces():
            folded = surface.casefold()
            if folded not in seen:
                seen.add(folded)
                keywords.append(surface)
        topics = self._lsa_topic_labels(text)
        for label in self._lda_topic_labels(text):
            if label not in topics:
                topics.append(label)
        return EnrichmentResult(keywords=keywords, topics=topics, enriched=True)


def enrich_description(text: str | None, enricher: DescriptionEnricher) -> EnrichmentResult:
    """Functional form of DescriptionEnricher.enrich."""
    return enricher.enrich(text)
