"""repsim: a desk-scale lab for comparing self-supervised speech representations.

Pipeline: synthesize or featurize a corpus, pre-train the model grid on it,
extract frozen representations, measure pairwise similarity (linear CKA /
SVCCA), probe phonetic and speaker content with linear classifiers, and
correlate pre-training loss with probe error across checkpoints and data
scales.
"""

__version__ = "0.1.0"

from . import analysis, corpus, errors, nn, numkernel, pretrain, probe, similarity

__all__ = [
    "analysis",
    "corpus",
    "errors",
    "nn",
    "numkernel",
    "pretrain",
    "probe",
    "similarity",
    "__version__",
]
