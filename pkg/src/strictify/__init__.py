"""Exact verification of the strictification of relative Cauchy evolution.

Chain complexes, homotopy data, the derived Kan extension along the
localization to BZ, its Poisson structure and CCR quantization are checked
on seeded random diagrams; linear Yang-Mills on a 1+1 lattice provides the
geometric instance.  All arithmetic is over the rationals or the dual
numbers, and every identity is checked with zero tolerance.
"""

__version__ = "0.1.0"
