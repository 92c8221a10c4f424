"""
dfms - data-free, hard-label model stealing.

Synthetic proxy corpora, a metered victim oracle, a DCGAN generator trained with a
class-diversity objective, the alternating clone/generator attack and the evaluation
kit used to measure it.
"""

__version__ = "0.1.0"
__author__ = "dfms developers"
