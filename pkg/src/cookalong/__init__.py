"""Recipe-grounded dialog orchestration: tracking, intents, generation, metrics."""

from .corpus import (
    Conversation,
    CorpusError,
    CorpusStats,
    Recipe,
    RecipeStep,
    Turn,
    compute_stats,
    load_corpus,
    split_sentences,
    state_change_histogram,
    tokenize_words,
)
from .generation import (
    BackendError,
    GenerationPrompt,
    HttpCompletionBackend,
    KnowledgeSelection,
    StubBackend,
    backend_from_config,
    build_prompt,
    respond,
    select_knowledge,
)
from .intent import (
    IntentCatalog,
    IntentEntry,
    IntentParseError,
    IntentPrediction,
    build_intent_prompt,
    detect_intents,
    micro_f1,
    parse_prediction,
)
from .metrics import (
    EvalReport,
    avg_length,
    corpus_bleu4,
    distinct_n,
    evaluate_generation,
    recipe_ngram_overlap,
)
from .service import SessionConfig, SessionStore, create_app
from .tracker import (
    EMBEDDING_THRESHOLDS,
    WORDMATCH_THRESHOLDS,
    EmbeddingScorer,
    ScorerUnavailableError,
    TrackerConfig,
    WordMatchScorer,
    advance_state,
    score_steps,
    track_conversation,
    unigram_f1,
)

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "Conversation",
    "CorpusError",
    "CorpusStats",
    "EMBEDDING_THRESHOLDS",
    "EmbeddingScorer",
    "EvalReport",
    "GenerationPrompt",
    "HttpCompletionBackend",
    "IntentCatalog",
    "IntentEntry",
    "IntentParseError",
    "IntentPrediction",
    "KnowledgeSelection",
    "Recipe",
    "RecipeStep",
    "ScorerUnavailableError",
    "SessionConfig",
    "SessionStore",
    "StubBackend",
    "TrackerConfig",
    "Turn",
    "WORDMATCH_THRESHOLDS",
    "WordMatchScorer",
    "advance_state",
    "avg_length",
    "backend_from_config",
    "build_intent_prompt",
    "build_prompt",
    "compute_stats",
    "corpus_bleu4",
    "create_app",
    "detect_intents",
    "distinct_n",
    "evaluate_generation",
    "load_corpus",
    "micro_f1",
    "parse_prediction",
    "recipe_ngram_overlap",
    "respond",
    "score_steps",
    "select_knowledge",
    "split_sentences",
    "state_change_histogram",
    "tokenize_words",
    "track_conversation",
    "unigram_f1",
    "__version__",
]
