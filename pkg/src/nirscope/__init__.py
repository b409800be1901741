"""fNIRS analysis toolkit.

Preprocessing of raw optical intensities into hemoglobin concentration
changes, block-design epoching, cross-participant classification, Shapley
channel attribution, and classical group statistics, plus a synthetic
generator with known ground truth for end-to-end verification.
"""

__version__ = "0.1.0"
