"""Independent reference implementations used by the tests.

Written with the math module only, line by line from the BSG pseudocode,
so they share no code with the package.
"""

import math


def bsg_scalar_oracle(dfn, x, steps, alpha=2.0, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8, n=100.0, p=0.0):
    """Returns a list of (x, g, u, n, p, r, x_next) per step."""
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = dfn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        u = lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        s = n - p + abs(u)
        r = 1 if s > 0 else 0
        if g <= 0:
            n = x - u
            p = p * (1 - r) + (n - alpha * u) * r
        else:
            p = x - u
            n = n * (1 - r) + (p - alpha * u) * r
        x_next = (n + p) / 2
        out.append((x, g, u, n, p, r, x_next))
        x = x_next
    return out
