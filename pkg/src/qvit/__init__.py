"""Hybrid quantum-classical vision transformer on RBS-gate circuits.

The package is organized around a small exact circuit simulator (`qsim`)
with a fast path restricted to the Hamming-weight-1 subspace, unary
vector-loading circuits (`loaders`), pyramid orthogonal layers (`ortho`),
a quantum attention block plus its classical counterpart (`attention`),
the assembled transformer models (`model`), training utilities (`train`),
a synthetic jet-image dataset (`data`) and a command-line front end
(`cli`).
"""

__version__ = "0.1.0"
