"""netexpr: explicit per-layer mathematical expressions for trained MLPs.

The pipeline: train (or load) a small sigmoid MLP, capture its per-layer
activations on a dataset, then evolve integer-coded expression genomes --
one chromosome per layer, each wrapped in a fitted per-neuron affine --
until the chain reproduces every layer's behaviour.  Classifiers are
explained on points sampled near their decision boundary.
"""

__version__ = "0.1.0"

from . import affine, benchmarks, boundary, cgp, evolve, mlp, surrogate  # noqa: F401
