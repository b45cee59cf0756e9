import numpy as np

from ..rules.mala import posterior_predict


def uncertainty_report(samples, evaluator, x, labels):
    """Per-example rows ``(example_id, correct, entropy, std)``.

    ``std`` is the across-sample standard deviation of the probability given
    to the predicted class.
    """
    mean, std, entropy = posterior_predict(samples, evaluator, x)
    pred = mean.argmax(axis=1)
    labels = np.asarray(labels)
    rows = []
    for i in range(len(labels)):
        rows.append((i, int(pred[i] == labels[i]), float(entropy[i]), float(std[i, pred[i]])))
    return rows


def entropy_split(rows):
    """Median entropy of (correct, incorrect) rows; NaN where a group is empty."""
    correct = [r[2] for r in rows if r[1]]
    wrong = [r[2] for r in rows if not r[1]]
    med = lambda v: float(np.median(v)) if v else float("nan")  # noqa: E731
    return med(correct), med(wrong)
