"""Pursuit-evasion planning as nested inference.

A chaser plans online by simulating a runner that in turn simulates a naive
chaser; routes come from an RRT prior and detection from a limited field of
view isovist.
"""

__version__ = "0.1.0"
