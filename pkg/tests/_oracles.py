"""Independent reference computations used by the tests.

Nothing here shares code paths with the package beyond plain numpy.
"""
import numpy as np


def central_diff(fn, arrays, h=1e-6):
    """Central finite differences of scalar ``fn()`` w.r.t. every entry of ``arrays`` (mutated in place)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + h
            fp = fn()
            a[i] = old - h
            fm = fn()
            a[i] = old
            g[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def rel_error(analytic, numeric):
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    den = max(np.linalg.norm(a), np.linalg.norm(n), 1e-10)
    return np.linalg.norm(a - n) / den


def naive_delta(features, labels, centers, weights=None):
    """Center displacement straight from the per-class sum, class by class."""
    n, d = centers.shape
    out = np.zeros((n, d))
    for j in range(n):
        members = [i for i in range(len(labels)) if labels[i] == j]
        if not members:
            continue
        acc = np.zeros(d)
        for i in members:
            acc += (1.0 if weights is None else weights[j]) * (centers[j] - features[i])
        out[j] = acc / (1 + len(members))
    return out


def naive_metrics(cm):
    cm = np.asarray(cm, dtype=float)
    n = cm.shape[0]
    prec, sens, f1 = [], [], []
    for j in range(n):
        tp = cm[j, j]
        col = sum(cm[i, j] for i in range(n))
        row = sum(cm[j, i] for i in range(n))
        p = tp / col if col else 0.0
        r = tp / row if row else 0.0
        prec.append(p)
        sens.append(r)
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
    acc = sum(cm[j, j] for j in range(n)) / cm.sum()
    return acc, prec, sens, f1


def jitter_biases(net, rng, scale=0.1):
    """Fresh nets have zero biases, which can park ReLU inputs exactly on the kink."""
    for layer in net.layers:
        layer.bias += rng.normal(scale=scale, size=layer.bias.shape)
    return net
