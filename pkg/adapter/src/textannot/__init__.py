"""Raw-text annotation into the coherence-toolkit corpus schema."""

__version__ = "0.1.0"

from .annotate import (EmptyAfterTokenization, RawDocument, annotate,
                       annotate_stream, export_embeddings, parse_raw)
from .ner import AVAILABLE_BACKENDS, BackendUnavailable
