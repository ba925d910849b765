"""Python interface to the codeforge data and reward pipeline.

Records, tasks and reward breakdowns are plain dicts with the same shape as
the JSON Lines artifacts the command-line tool writes.
"""

import json
import os

from . import _core
from ._core import CodeforgeError, ConfigError, ScoringError

__all__ = [
    "CodeforgeError",
    "ConfigError",
    "ScoringError",
    "TEMPLATE_HASH",
    "TEMPLATE_VERSION",
    "curate",
    "generate_tasks",
    "mask_lines",
    "max_mask_count",
    "public_task",
    "run_pipeline",
    "score",
    "score_batch",
    "structure_distance",
]

TEMPLATE_VERSION = _core.template_version
TEMPLATE_HASH = _core.template_hash


def _dump(value):
    return json.dumps(value, ensure_ascii=False)


def structure_distance(a, b):
    """Size of the symmetric difference of the two snippets' line sets."""
    return _core.structure_distance(a, b)


def curate(snippets, gamma=1.0, subset_cap=400, iterations=5, seed=17):
    """Ids of a structurally distinct subset of ``snippets``.

    ``snippets`` is an iterable of ``(id, source)`` pairs or dicts with
    ``id`` and ``source`` keys.
    """
    pairs = [(s["id"], s["source"]) if isinstance(s, dict) else tuple(s) for s in snippets]
    return _core.curate(pairs, gamma, subset_cap, iterations, seed)


def max_mask_count(source):
    return _core.max_mask_count(source)


def mask_lines(source, count, seed):
    """Returns ``(masked_source, mask_map)``."""
    text, entries = _core.mask_lines(source, count, seed)
    return text, json.loads(entries)


def generate_tasks(samples, mix="forward=0.5,backward=0.5", seed=17):
    """Builds one task per prepared sample (rows of samples.jsonl)."""
    return [json.loads(row) for row in _core.generate_tasks([_dump(s) for s in samples], mix, seed)]


def public_task(task):
    """The model-visible view of a task, without ground truth."""
    return json.loads(_core.public_task(_dump(task)))


def score(task, response_text, w=0.1, beta=0.5):
    """Reward breakdown ``{r_format, r_o, r_e, r}`` for one response.

    Backward tasks run the completed program in the sandbox; limits come from
    CODEFORGE_TIMEOUT_SECS, CODEFORGE_MEM_BYTES and CODEFORGE_INTERP.
    """
    return json.loads(_core.score(_dump(task), response_text, w, beta))


def score_batch(tasks_path, requests, w=0.1, beta=0.5):
    """Scores ``{task_id, response_text, group_id?}`` requests in order."""
    rows = _core.score_batch(os.fspath(tasks_path), [_dump(r) for r in requests], w, beta)
    return [json.loads(row) for row in rows]


def run_pipeline(config, base_dir="."):
    """Runs ingest, curate, augment and tasks; returns the manifest.

    ``config`` is a dict in the pipeline config format. Relative paths in it
    resolve against ``base_dir``.
    """
    return json.loads(_core.run_pipeline(_dump(config), os.path.abspath(base_dir)))
