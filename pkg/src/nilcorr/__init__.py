"""Desk-scale experiments on short-interval correlations of multiplicative
functions with nilsequences.

Modules: nilgroup (group law in Mal'cev coordinates), polyseq (polynomial
sequences), sieve (Mobius tables and dense sets), pretentious (pretentious
distances), equidist (equidistribution and obstructions), factorize
(eps * g' * gamma factorization), correlate (the averaged correlation and its
major/minor split), cli (experiment driver).
"""
__version__ = "0.1.0"
