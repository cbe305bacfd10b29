"""Somnus - Equilibrium Propagation with sleep replay consolidation"""

__version__ = "1.0.0"
