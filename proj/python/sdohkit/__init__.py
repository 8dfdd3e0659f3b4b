"""Python face of the SDoH sentence classification toolkit.

The native module returns JSON strings; this package decodes them so callers
get plain dicts and lists.
"""

import json as _json

from . import _sdohkit
from ._sdohkit import (
    SdohError,
    __version__,
    label_names,
    render_prompt,
)

__all__ = [
    "SdohError",
    "__version__",
    "label_names",
    "render_prompt",
    "score",
    "parse_llm_output",
    "split_corpus",
    "corpus_stats",
    "default_experiment_config",
    "run_experiment",
    "predict",
]


def score(gold, pred, task="multilabel"):
    """Precision/recall/F1 report for gold vs predicted label-name lists."""
    return _json.loads(_sdohkit.score_json(list(gold), list(pred), task))


def parse_llm_output(raw):
    """Recover labels, parse mode and hallucinated tokens from generation text."""
    return _json.loads(_sdohkit.parse_llm_output_json(raw))


def split_corpus(corpus_path, fractions=(0.6, 0.2, 0.2), seed=13):
    """Stratified train/validation/test id split of a corpus JSONL file."""
    return _json.loads(_sdohkit.split_corpus_json(str(corpus_path), list(fractions), seed))


def corpus_stats(corpus_path):
    """Label and source distribution of a corpus JSONL file."""
    return _json.loads(_sdohkit.corpus_stats_json(str(corpus_path)))


def default_experiment_config():
    """A complete experiment config with default settings, ready to edit."""
    return _json.loads(_sdohkit.default_experiment_config_json())


def run_experiment(config):
    """Run a full experiment; `config` is a dict or a JSON string."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _json.loads(_sdohkit.run_experiment_json(config))


def predict(model_dir, sentences):
    """Classify (id, text) pairs with an exported model bundle."""
    return _json.loads(_sdohkit.predict_json(str(model_dir), list(sentences)))
