"""Constructed inputs shared by several test modules."""

import numpy as np

from vge.ensemble import EnsembleOutput


def flat_prediction(n, var=1.0):
    return EnsembleOutput(np.zeros(n), np.full(n, var), np.ones((1, n)), np.ones(n))


def plateau_fixture():
    """Two true anomalies whose tentative points are 3 and 4 apart.

    With q = 2 a window of tau points catches the first pair only once
    tau exceeds the spacing: segment A needs tau >= 4, segment B tau >= 5.
    Isolated false tentative points sit more than 30 apart, so they never
    gather q points for any tau in the grid.
    """
    n = 600
    y = np.zeros(n)
    a = [100, 103, 106, 109, 112]
    b = [300, 304, 308, 312, 316]
    noise = [20, 200, 450, 520]
    y[a + b + noise] = 10.0
    return y, flat_prediction(n), [(100, 112), (300, 316)]
