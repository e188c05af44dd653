"""Pointwise losses L(y, p) and their first two derivatives in p.

All functions broadcast over numpy arrays.
"""

from enum import Enum

import numpy as np
from scipy.special import expit

from .exceptions import LabelError


class LossKind(str, Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"l2": cls.SQUARED, "squared_l2": cls.SQUARED,
                   "log": cls.LOGISTIC, "logloss": cls.LOGISTIC}
        key = str(value).lower()
        return aliases.get(key) or cls(key)


def check_labels(y, max_report=10):
    """Raise LabelError unless every label is exactly -1 or +1."""
    y = np.asarray(y)
    bad = np.flatnonzero((y != 1.0) & (y != -1.0))
    if len(bad):
        shown = ", ".join(f"[{i}]={y.flat[i].item()!r}" for i in bad[:max_report])
        raise LabelError(
            f"logistic loss needs labels in {{-1, +1}}; {len(bad)} offending: {shown}")


def loss_value(kind, y, p):
    kind = LossKind.parse(kind)
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if kind is LossKind.SQUARED:
        return 0.5 * (y - p) ** 2
    check_labels(y)
    # log(1 + exp(-yp)) without overflow
    return np.logaddexp(0.0, -y * p)


def loss_grad(kind, y, p):
    kind = LossKind.parse(kind)
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if kind is LossKind.SQUARED:
        return p - y
    check_labels(y)
    return -y * expit(-y * p)


def loss_hess(kind, y, p):
    kind = LossKind.parse(kind)
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if kind is LossKind.SQUARED:
        return np.ones(np.broadcast(y, p).shape)
    check_labels(y)
    yp = y * p
    return expit(yp) * expit(-yp)
