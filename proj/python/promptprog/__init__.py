"""Python access to the corpus, grader, platform and analytics."""

import json

from . import _core
from ._core import PromptProgError, char_length, extract_code_blocks, render_specification

__all__ = [
    "Platform",
    "PromptProgError",
    "analyze",
    "char_length",
    "extract_code_blocks",
    "grade",
    "load_corpus",
    "render_specification",
]

PromptProgError.code = property(lambda self: self.args[0])


def load_corpus(corpus_dir):
    return json.loads(_core.load_corpus(str(corpus_dir)))


def grade(corpus_dir, problem_id, code, mode="single_driver", per_test_timeout_s=2.0):
    """ExecutionReport of `code` against the hidden tests, as a dict."""
    return json.loads(_core.grade(str(corpus_dir), problem_id, code, mode, per_test_timeout_s))


def analyze(log_path, report, format="structured", problem=None, top_edges=15, buckets=(1, 2, 3, 4, 5)):
    """Rendered report text; structured output is decoded."""
    text = _core.analyze(str(log_path), report, format, problem, top_edges, list(buckets))
    return json.loads(text) if format == "structured" else text


class Platform:
    def __init__(self, config_path):
        self._p = _core.Platform(str(config_path))

    def start_session(self, student_id, problem_id):
        return self._p.start_session(student_id, problem_id)

    def post_message(self, session_id, content):
        return json.loads(self._p.post_message(session_id, content))

    def run_code(self, session_id, idempotency_key=None):
        return json.loads(self._p.run_code(session_id, idempotency_key))

    def reset_conversation(self, session_id, idempotency_key=None):
        return self._p.reset_conversation(session_id, idempotency_key)

    def session(self, session_id):
        return json.loads(self._p.session(session_id))

    def drain(self):
        self._p.drain()
