"""Hop-limited content search in opportunistic networks.

Closed-form success models, a CTMC for forward completion time, temporal
h-hop neighbourhoods of contact traces and a two-phase search simulator.
"""
__version__ = "0.1.0"
