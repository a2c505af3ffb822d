import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from seqgap.models import BiRnnParams, UniRnnParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def zero_uni(d_in, d_out, c, family="softmax", b_y=None):
    return UniRnnParams(
        w_x=np.zeros((c, d_in)),
        w_h=np.zeros((c, c)),
        w_y=np.zeros((d_out, c)),
        b_h=np.zeros(c),
        b_y=np.zeros(d_out) if b_y is None else np.asarray(b_y, dtype=float),
        family=family,
    )


def zero_bi(d_in, d_out, c, family="softmax", b_y=None):
    return BiRnnParams(
        w_x_f=np.zeros((c, d_in)),
        w_h_f=np.zeros((c, c)),
        b_h_f=np.zeros(c),
        w_x_b=np.zeros((c, d_in)),
        w_h_b=np.zeros((c, c)),
        b_h_b=np.zeros(c),
        w_y_f=np.zeros((d_out, c)),
        w_y_b=np.zeros((d_out, c)),
        b_y=np.zeros(d_out) if b_y is None else np.asarray(b_y, dtype=float),
        family=family,
    )


def onehot_sequence(rng, t, d):
    return np.eye(d)[rng.integers(0, d, t)].astype(float)
