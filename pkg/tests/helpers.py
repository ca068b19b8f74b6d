"""Shared comparison helpers for the test suite."""

import numpy as np

from wavectrl import Field, l2_norm
from wavectrl.grid import spectral


def diff_norm(a: Field, b: Field) -> float:
    return l2_norm(Field(a.grid, spectral(a).data - spectral(b).data, "spectral"))


def rel_diff(a: Field, b: Field) -> float:
    return diff_norm(a, b) / max(l2_norm(b), 1e-300)


def max_coeff_diff(a: Field, b: Field) -> float:
    return float(np.max(np.abs(spectral(a).data - spectral(b).data)))
