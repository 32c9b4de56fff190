"""simlearn: agnostic single-index / generalized linear model learning.

Training is driven by matching losses (convex surrogates induced by monotone
activations) and calibrated multiaccuracy; the transfer module turns the
resulting loss guarantees into squared- and absolute-error bound checks on
planted synthetic instances.
"""

__version__ = "0.1.0"

from . import fenchel, synth, learners, transfer  # noqa: F401
