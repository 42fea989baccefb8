"""Dual-stream tokenized video codec.

A group of pictures is tokenized into a discrete FSQ code map and a
continuous latent grid; both are compressed with checkerboard context
models over a bit-exact range coder. Masked discrete tokens are
reconstructed by a cross-attending transformer and both streams are fused
in a multi-scale residual pixel decoder.
"""

__version__ = "0.1.0"
