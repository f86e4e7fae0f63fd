"""Shared oracles and fixtures.

The oracles here are deliberately naive re-derivations (python loops, finite
differences, closed forms) so that they share no code with the package.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from amafed.dataio import DatasetTable

# Acceptance lines collected by tests/test_acceptance.py and echoed in the
# terminal summary, so they survive pytest's output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def brute_force_metrics(predictions, labels, n_classes):
    """Per-class one-vs-rest counts by explicit looping, then macro means over
    the classes that occur in the labels or the predictions."""
    counts = []
    for c in range(n_classes):
        tp = fp = fn = tn = 0
        for p, y in zip(predictions, labels):
            if y == c and p == c:
                tp += 1
            elif y != c and p == c:
                fp += 1
            elif y == c and p != c:
                fn += 1
            else:
                tn += 1
        counts.append((tp, fp, fn, tn))

    def ratio(a, b):
        return a / b if b else 0.0

    active = [c for c, (tp, fp, fn, _) in enumerate(counts) if tp + fn > 0 or tp + fp > 0]
    prec = [ratio(counts[c][0], counts[c][0] + counts[c][1]) for c in active]
    rec = [ratio(counts[c][0], counts[c][0] + counts[c][2]) for c in active]
    f1 = [ratio(2 * p * r, p + r) for p, r in zip(prec, rec)]
    fpr = [ratio(counts[c][1], counts[c][1] + counts[c][3]) for c in active]
    correct = sum(1 for p, y in zip(predictions, labels) if p == y)
    return {
        "counts": counts,
        "accuracy": correct / len(labels),
        "precision": sum(prec) / len(active),
        "recall": sum(rec) / len(active),
        "f1": sum(f1) / len(active),
        "fpr": sum(fpr) / len(active),
    }


def central_difference(fn, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (fn(up) - fn(down)) / (2 * h)
    return grad


def softmax_oracle(u, mu):
    e = [math.exp(v / mu) for v in u]
    s = sum(e)
    return np.array([v / s for v in e])


def make_table(labels, n_features=3, n_classes=None, seed=0):
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = n_classes or int(labels.max()) + 1
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(labels.size, n_features))
    names = tuple(f"c{i}" for i in range(n_classes))
    return DatasetTable(features, labels, names)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
