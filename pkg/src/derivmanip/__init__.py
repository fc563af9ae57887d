"""Example weighting by derivative manipulation.

The backward signal at the softmax classifier is synthesized directly from
an emphasis density function instead of being obtained by differentiating
a loss.
"""

__version__ = "0.1.0"
