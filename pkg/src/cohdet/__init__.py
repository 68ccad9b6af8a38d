"""Entity-coherence graphs and contrastive training for machine-generated
text detection."""

__version__ = "0.1.0"

from .corpus import (Document, EntityMention, Label, SentenceSpan,
                     entity_key, load_corpus, parse_corpus,
                     sample_low_resource, save_corpus)
from .graph import (CoherenceGraph, GraphLimits, RelKind, build_graph,
                    merged_adjacency, normalized_laplacian)
from .stats import (avg_clustering, avg_degree, core_decomposition,
                    corpus_report, degree_histogram, js_divergence,
                    lcc_portion, structure_entropy)
from .encoder import EncoderConfig, EmbeddingSource, Params, encode_document
from .trainer import (MemoryBank, TrainConfig, ce_loss, contrastive_loss,
                      momentum_update, predict, total_loss, train)
from .evaluation import (CueStats, EvalReport, PerturbKind, PerturbSpec,
                         cue_stats, evaluate, ngram_supporter_coverage,
                         pair_documents, perturb)
