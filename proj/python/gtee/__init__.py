"""Python access to the gtee event-extraction core.

Sentences are plain dicts in the JSONL corpus schema
(``doc_id``, ``sent_id``, ``tokens``, ``events``).
"""

import json

from ._core import (
    ContractError,
    DataError,
    Model,
    Ontology,
    OntologyError,
    __version__,
)
from . import _core

__all__ = [
    "ContractError",
    "DataError",
    "Model",
    "Ontology",
    "OntologyError",
    "__version__",
    "decode",
    "generate_synthetic",
    "predict",
    "score",
    "serialize_ground_truth",
]


def _lines(sentences):
    return [json.dumps(s, ensure_ascii=False) for s in sentences]


def generate_synthetic(ontology, n, irrelevant_rate=0.8, seed=13, two_event_rate=0.3, id_prefix="synth"):
    lines = _core.generate_synthetic(ontology, n, irrelevant_rate, seed, two_event_rate, id_prefix)
    return [json.loads(line) for line in lines]


def serialize_ground_truth(ontology, type_id, sentence):
    return _core.serialize_ground_truth(ontology, type_id, json.dumps(sentence, ensure_ascii=False))


def decode(ontology, type_id, generated, tokens):
    """Event records (corpus schema) recovered from generated text."""
    return json.loads(_core.decode(ontology, type_id, generated, list(tokens)))


def score(predictions, gold):
    """Trigger and argument classification scores (p, r, f1 and counts); missing predictions count as empty."""
    return json.loads(_core.score(_lines(predictions), _lines(gold)))


def predict(model, contexts, mode="dynamic", beam=6, max_steps=0):
    lines = model.predict(_lines(contexts), mode, beam, max_steps)
    return [json.loads(line) for line in lines]
