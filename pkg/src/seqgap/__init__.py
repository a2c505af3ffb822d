"""seqgap: recurrent generative models of discrete sequences, with
gap-filling inference in the middle of a series.

Train one-directional or two-directional recurrent models over text or
binary piano-roll data, then reconstruct multi-step gaps with Gibbs
sampling, ordered reconstruction with a missing-value token, exact
Bayesian conditionals on the one-directional model, left-to-right
inference, or a context-free baseline. Small-scale exhaustive oracles
verify every inference path.
"""

from .corpus import Alphabet, GapSpec, Minibatch, build_alphabet, encode_onehot, load_pianoroll
from .inference import (
    ChainConfig,
    GapResult,
    OneGramStats,
    bayes_exact_conditional,
    bayes_mcmc_fill,
    enumerate_gap_posterior,
    fit_onegram,
    gsn_fill,
    nade_exact_gap_nll,
    nade_fill,
    onegram_nll,
    oneway_fill,
)
from .models import (
    BiRnnParams,
    UniRnnParams,
    bi_forward,
    init_bi,
    init_uni,
    load_checkpoint,
    save_checkpoint,
    uni_forward,
)
from .training import BinaryCorpus, CategoricalCorpus, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Alphabet",
    "BiRnnParams",
    "BinaryCorpus",
    "CategoricalCorpus",
    "ChainConfig",
    "GapResult",
    "GapSpec",
    "Minibatch",
    "OneGramStats",
    "TrainConfig",
    "UniRnnParams",
    "bayes_exact_conditional",
    "bayes_mcmc_fill",
    "bi_forward",
    "build_alphabet",
    "encode_onehot",
    "enumerate_gap_posterior",
    "fit_onegram",
    "gsn_fill",
    "init_bi",
    "init_uni",
    "load_checkpoint",
    "load_pianoroll",
    "nade_exact_gap_nll",
    "nade_fill",
    "onegram_nll",
    "oneway_fill",
    "save_checkpoint",
    "train",
    "uni_forward",
]
