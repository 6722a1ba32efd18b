"""Small MLP plumbing shared by encoders and heads.

Parameters live in flat name->ndarray dicts; forward passes take the same
dict with values wrapped as (possibly tape-attached) tensors. Weights use
uniform fan-in initialization, biases start at zero.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T


def linear_init(rng, fan_in, fan_out):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def mlp_init(rng, name, sizes):
    """Parameter dict for an MLP with layer sizes [in, h1, ..., out]."""
    params = {}
    for i in range(len(sizes) - 1):
        params[f"{name}.w{i}"] = linear_init(rng, sizes[i], sizes[i + 1])
        params[f"{name}.b{i}"] = np.zeros((1, sizes[i + 1]))
    return params


def mlp_apply(params, name, x, n_layers):
    """ReLU MLP on rows of x: [N, in] -> [N, out]; final layer is linear."""
    h = x
    for i in range(n_layers):
        h = T.add(T.matmul(h, params[f"{name}.w{i}"]), params[f"{name}.b{i}"])
        if i < n_layers - 1:
            h = T.relu(h)
    return h


def mlp_layer_count(sizes):
    return len(sizes) - 1
