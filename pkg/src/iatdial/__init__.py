"""iatdial: a desk-scale toolkit for history-sensitive dialogue models.

Trains a small recurrent encoder-decoder with maximum likelihood and an
inverse-adversarial objective that rewards responses whose likelihood drops
under dialogue-history corruption, and evaluates history sensitivity and
response diversity, including MMI re-ranking baselines.
"""

__version__ = "0.1.0"
