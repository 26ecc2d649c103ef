"""
Sparse-JT - sparse joint transmission for cloud radio access networks with
finite-capacity fronthaul and noisy, incomplete CSIT.
"""

from .simulator import SparseJTSimulator

__all__ = ['SparseJTSimulator']
__version__ = '0.1.0'
