"""Tensor-network decoding of the surface code under general local noise.

The package is organized by function:

- ``tensors``: label-addressed tensors and bounded-bond grid contraction
- ``lattice``: surface-code layout, syndromes, Pauli frames, homology
- ``channels``: qubit channel representations and distance measures
- ``noise``: amplitude damping and correlated-flip noise models
- ``decoder``: the tensor-network logical-channel decoder
- ``oracles``: brute-force references and the matching baseline
- ``bench``: Monte Carlo decoder comparisons
- ``cli``: command line entry points
"""

__version__ = "0.1.0"
