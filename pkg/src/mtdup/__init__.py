"""Duplication patterns of the Mersenne Twister MT19937.

Exact GF(2) operator algebra for lagged-equality events, constrained state
planting for Monte Carlo confirmation, and a streaming repetition
(run-length) test.
"""

__version__ = "0.1.0"
