"""Python access to the tabby tabular synthesis core."""

import json

from . import _tabby
from ._tabby import TabbyError, r2_clipped, toy_kinds

__all__ = [
    "TabbyError",
    "aup",
    "dcr",
    "discrimination",
    "encode_row",
    "evaluate",
    "make_toy",
    "make_toy_files",
    "mle",
    "profile",
    "r2_clipped",
    "sample",
    "toy_kinds",
    "train",
]


def make_toy(kind, rows, seed=0):
    """Return (schema dict, list of rows) for a seeded toy dataset."""
    schema, table = _tabby.make_toy(kind, rows, seed)
    return json.loads(schema), table


def encode_row(schema, row, vocabulary_rows):
    return _tabby.encode_row(json.dumps(schema), row, vocabulary_rows)


def dcr(real, synthetic, schema):
    return _tabby.dcr(real, synthetic, json.dumps(schema))


def discrimination(real, synthetic, schema, seed=0):
    return _tabby.discrimination(real, synthetic, json.dumps(schema), seed)


def mle(real, synthetic, test, schema, seed=0):
    """Return (score on synthetic, score on real)."""
    return _tabby.mle(real, synthetic, test, json.dumps(schema), seed)


def aup(scores, methods):
    return _tabby.aup(scores, methods)


def train(config):
    return json.loads(_tabby.cmd_train(str(config)))


def sample(config):
    return json.loads(_tabby.cmd_sample(str(config)))


def evaluate(config, synthetic=()):
    return json.loads(_tabby.cmd_eval(str(config), [str(p) for p in synthetic]))


def profile(summaries, metric="mle"):
    return json.loads(_tabby.cmd_profile([str(p) for p in summaries], metric))


def make_toy_files(kind, rows, seed, out_dir):
    return json.loads(_tabby.cmd_make_toy(kind, rows, seed, str(out_dir)))
