"""Metadata-field ablation benchmark for natural-language dataset search."""

from metabench.bench import (
    CONDITION_NAMES,
    AblationConfig,
    EvalReport,
    RetrievalOutcome,
    assemble_ablation_text,
    compute_metrics,
    evaluate_matrix,
    render_report,
    run_condition,
)
from metabench.catalog import (
    CompletenessReport,
    DatasetRecord,
    Distribution,
    TableSample,
    completeness_report,
    filter_structured,
    parse_catalog,
    sample_table,
)
from metabench.llmgen import (
    STYLES,
    GenBackendConfig,
    GenPrompt,
    QueryRecord,
    build_description_prompt,
    generate_description,
    generate_queries,
    sanitize_cell,
)
from metabench.textmine import (
    DescriptionEnricher,
    EntitySet,
    KeyphraseSet,
    TfidfModel,
    TopicSet,
    build_tfidf,
    extract_entities,
    extract_keyphrases,
    lda_topics,
    lsa_topics,
)
from metabench.vectors import (
    EmbeddingVector,
    HashEmbedder,
    RemoteEmbedder,
    SearchParams,
    VectorIndex,
    build_index,
    embed_texts,
    hash_embed,
    search_topk,
)

__version__ = "0.1.0"
