import numpy as np

from peeksched.core import Application, ModelProfile, Request
from peeksched.scoring import PenaltyKind, PenaltySpec


def profile(recalls, infer=10.0, swap=0.0, name="m", row_total=100):
    """A model whose per-class recalls are exactly ``recalls`` on a balanced test set."""
    recalls = np.asarray(recalls, dtype=float)
    n = len(recalls)
    z = np.zeros((n, n))
    for i, r in enumerate(recalls):
        z[i, i] = r * row_total
        if n > 1:
            z[i, [j for j in range(n) if j != i]] = (1.0 - r) * row_total / (n - 1)
        else:
            z[i, i] = row_total
    return ModelProfile(name, z, infer, swap)


def flat_model(acc, infer=10.0, swap=0.0, labels=2, name="m"):
    return profile([acc] * labels, infer, swap, name)


def make_app(app_id, models, penalty=PenaltyKind.SIGMOID, labels=None):
    labels = labels or models[0].label_count
    return Application(app_id, labels, models, PenaltySpec(penalty))


def req(rid, app_id, deadline, arrival=0.0, label=0):
    return Request(rid, app_id, arrival, deadline, true_label=label)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
