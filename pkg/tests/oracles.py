"""Independent reference values used across the test-suite.

Everything here is computed without touching ``csiuq``: either by hand
(the constants, with their derivation alongside) or by small scalar
routines written against the standard library only.
"""

from __future__ import annotations

import math
from decimal import Decimal, getcontext

C = 299_792_458  # m/s, exact

# Frozen output of ``carrier_phase`` for d = 30 m on the first two subcarriers
# of a 5.18 GHz / 312.5 kHz grid (50-digit decimal arithmetic).
PHASE_30M = {
    5.18e9: -2.2531749938877410036636293053192418628,
    5.18e9 + 312.5e3: -2.4496604646957111735508736449900239713,
}

# [0, 0, 0, 1]: mean 1/4, deviations (-1/4, -1/4, -1/4, 3/4)
#   m2 = (3/16 + 9/16) / 4 = 3/16
#   m3 = (-3/64 + 27/64) / 4 = 3/32
#   m4 = (3/256 + 81/256) / 4 = 21/256
SKEW_0001 = (3 / 32) / (3 / 16) ** 1.5  # = 2 / sqrt(3)
KURT_0001 = (21 / 256) / (3 / 16) ** 2 - 3  # = -2/3

# KL(N(0, 2) || N(0, 1)) = ln(1/2) + 4/2 - 1/2
KL_N02_N01 = math.log(0.5) + 1.5

# Constant model y = 1 against f = (0, 1, 2) on a 3-point probe:
# mean squared gap ((1)^2 + 0 + (1)^2) / 3
CONST_PROBE_REDUCIBLE = 2 / 3


def carrier_phase(freq_hz, distance_m) -> float:
    """``-2 pi f d / c`` wrapped to (-pi, pi], via exact decimal arithmetic."""
    getcontext().prec = 50
    pi = Decimal("3.14159265358979323846264338327950288419716939937510")
    cycles = Decimal(repr(float(freq_hz))) * Decimal(repr(float(distance_m))) / Decimal(C)
    frac = cycles - int(cycles)
    ph = -2 * pi * frac
    if ph <= -pi:
        ph += 2 * pi
    return float(ph)


def shannon_bits(p) -> float:
    return -sum(v * math.log2(v) for v in p if v > 0)


def plain_network(x, W1, b1, W2, b2, n_classes=2):
    """Deterministic forward pass: relu hidden layer, softmax of the logit means."""
    h = [max(0.0, sum(x[i] * W1[i][j] for i in range(len(x))) + b1[j]) for j in range(len(b1))]
    z = [sum(h[i] * W2[i][j] for i in range(len(h))) + b2[j] for j in range(len(b2))]
    logits = z[:n_classes]
    top = max(logits)
    e = [math.exp(v - top) for v in logits]
    s = sum(e)
    return [v / s for v in e]
