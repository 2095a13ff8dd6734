# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from typing import Any

import numpy as np
from scipy.special import expit

from .common import ParamSet, Tensor, check_shape, softmax, softmax_backward


##########################################################################################
# Class definitions
##########################################################################################

class AdditiveAttention:
    '''
    Additive attention with one hidden layer scoring each token pair.

    h[t, s] = tanh(W^t x_t + W^x x_s), e[t, s] = sigmoid(W^a h[t, s]),
    a[t] = softmax(e[t]), x'_t = sum_s a[t, s] x_s. The output is the mean
    of x'_t over t.

    Parameters: <prefix>.W_t (units, in), <prefix>.W_x (units, in) and
    <prefix>.W_a (1, units).
    '''

    def __init__(self, in_dim: int, units: int, prefix: str = 'additive'):
        self.in_dim = in_dim
        self.units = units
        self.prefix = prefix

    @property
    def out_dim(self) -> int:
        return self.in_dim

    def init_params(self, params: ParamSet, rng: np.random.Generator) -> None:
        params.add_uniform(f'{self.prefix}.W_t', (self.units, self.in_dim), self.in_dim, rng)
        params.add_uniform(f'{self.prefix}.W_x', (self.units, self.in_dim), self.in_dim, rng)
        params.add_uniform(f'{self.prefix}.W_a', (1, self.units), self.units, rng)

    def forward(self, params: ParamSet, x: Tensor) -> tuple[Tensor, dict[str, Any]]:
        '''
        Forward pass.

        Arguments:
            params - parameter set holding the layer weights
            x      - sequences of shape (batch, steps, in)

        Returns the pooled context (batch, in). The attention weights are in
        the cache under 'weights' with shape (batch, steps, steps).
        '''

        check_shape(x, 3, self.in_dim, f'additive attention {self.prefix}')

        W_t = params[f'{self.prefix}.W_t']
        W_x = params[f'{self.prefix}.W_x']
        w_a = params[f'{self.prefix}.W_a'][0]

        query = x @ W_t.T
        key = x @ W_x.T

        hidden = np.tanh(query[:, :, None, :] + key[:, None, :, :])
        scores = expit(hidden @ w_a)
        weights = softmax(scores, axis=-1)

        context = weights @ x
        pooled = context.mean(axis=1)

        return pooled, {'x': x, 'hidden': hidden, 'scores': scores, 'weights': weights}

    def backward(self, params: ParamSet, cache: dict[str, Any], dout: Tensor, grads: ParamSet) -> Tensor:
        x = cache['x']
        hidden, scores, weights = cache['hidden'], cache['scores'], cache['weights']

        W_t = params[f'{self.prefix}.W_t']
        W_x = params[f'{self.prefix}.W_x']
        w_a = params[f'{self.prefix}.W_a'][0]

        steps = x.shape[1]

        dcontext = np.repeat(dout[:, None, :] / steps, steps, axis=1)

        dweights = dcontext @ np.swapaxes(x, 1, 2)
        dx = np.swapaxes(weights, 1, 2) @ dcontext

        dscores = softmax_backward(weights, dweights)
        dlogits = dscores * scores * (1.0 - scores)

        dw_a = np.einsum('btsa,bts->a', hidden, dlogits)
        dpre = dlogits[..., None] * w_a * (1.0 - hidden * hidden)

        dquery = dpre.sum(axis=2)
        dkey = dpre.sum(axis=1)

        grads[f'{self.prefix}.W_t'] = grads[f'{self.prefix}.W_t'] + np.einsum('bta,btd->ad', dquery, x)
        grads[f'{self.prefix}.W_x'] = grads[f'{self.prefix}.W_x'] + np.einsum('bta,btd->ad', dkey, x)
        grads[f'{self.prefix}.W_a'] = grads[f'{self.prefix}.W_a'] + dw_a[None, :]

        return dx + dquery @ W_t + dkey @ W_x

class SelfAttention:
    '''
    Scaled dot-product self-attention X' = softmax(Q K^T / sqrt(d_k)) V.

    Parameters: <prefix>.W_Q (in, d_k), <prefix>.W_K (in, d_k) and
    <prefix>.W_V (in, d_v).
    '''

    def __init__(self, in_dim: int, d_k: int = 64, d_v: int = 64, prefix: str = 'self'):
        self.in_dim = in_dim
        self.d_k = d_k
        self.d_v = d_v
        self.prefix = prefix

    @property
    def out_dim(self) -> int:
        return self.d_v

    def init_params(self, params: ParamSet, rng: np.random.Generator) -> None:
        params.add_uniform(f'{self.prefix}.W_Q', (self.in_dim, self.d_k), self.in_dim, rng)
        params.add_uniform(f'{self.prefix}.W_K', (self.in_dim, self.d_k), self.in_dim, rng)
        params.add_uniform(f'{self.prefix}.W_V', (self.in_dim, self.d_v), self.in_dim, rng)

    def forward(self, params: ParamSet, x: Tensor) -> tuple[Tensor, dict[str, Any]]:
        '''
        Forward pass, returns the sequence (batch, steps, d_v).
        '''

        check_shape(x, 3, self.in_dim, f'self attention {self.prefix}')

        Q = x @ params[f'{self.prefix}.W_Q']
        K = x @ params[f'{self.prefix}.W_K']
        V = x @ params[f'{self.prefix}.W_V']

        weights = softmax(Q @ np.swapaxes(K, 1, 2) / np.sqrt(self.d_k), axis=-1)

        return weights @ V, {'x': x, 'Q': Q, 'K': K, 'V': V, 'weights': weights}

    def backward(self, params: ParamSet, cache: dict[str, Any], dout: Tensor, grads: ParamSet) -> Tensor:
        x, Q, K, V, weights = cache['x'], cache['Q'], cache['K'], cache['V'], cache['weights']

        dweights = dout @ np.swapaxes(V, 1, 2)
        dV = np.swapaxes(weights, 1, 2) @ dout

        dlogits = softmax_backward(weights, dweights) / np.sqrt(self.d_k)

        dQ = dlogits @ K
        dK = np.swapaxes(dlogits, 1, 2) @ Q

        W_Q = params[f'{self.prefix}.W_Q']
        W_K = params[f'{self.prefix}.W_K']
        W_V = params[f'{self.prefix}.W_V']

        grads[f'{self.prefix}.W_Q'] = grads[f'{self.prefix}.W_Q'] + np.einsum('btd,btk->dk', x, dQ)
        grads[f'{self.prefix}.W_K'] = grads[f'{self.prefix}.W_K'] + np.einsum('btd,btk->dk', x, dK)
        grads[f'{self.prefix}.W_V'] = grads[f'{self.prefix}.W_V'] + np.einsum('btd,btk->dk', x, dV)

        return dQ @ W_Q.T + dK @ W_K.T + dV @ W_V.T

class WeightedAttention:
    '''
    Weighted attention over hidden states: a = softmax(W h_t), out = sum a_t h_t.

    Parameters: <prefix>.W (1, in).
    '''

    def __init__(self, in_dim: int, prefix: str = 'weighted'):
        self.in_dim = in_dim
        self.prefix = prefix

    @property
    def out_dim(self) -> int:
        return self.in_dim

    def init_params(self, params: ParamSet, rng: np.random.Generator) -> None:
        params.add_uniform(f'{self.prefix}.W', (1, self.in_dim), self.in_dim, rng)

    def forward(self, params: ParamSet, hs: Tensor) -> tuple[Tensor, dict[str, Any]]:
        check_shape(hs, 3, self.in_dim, f'weighted attention {self.prefix}')

        weights = softmax(hs @ params[f'{self.prefix}.W'][0], axis=-1)

        return np.einsum('bt,bth->bh', weights, hs), {'hs': hs, 'weights': weights}

    def backward(self, params: ParamSet, cache: dict[str, Any], dout: Tensor, grads: ParamSet) -> Tensor:
        hs, weights = cache['hs'], cache['weights']
        w = params[f'{self.prefix}.W'][0]

        dweights = np.einsum('bh,bth->bt', dout, hs)
        dscores = softmax_backward(weights, dweights)

        grads[f'{self.prefix}.W'] = grads[f'{self.prefix}.W'] + np.einsum('bt,bth->h', dscores, hs)[None, :]

        return weights[:, :, None] * dout[:, None, :] + dscores[:, :, None] * w


##########################################################################################
# Functions
##########################################################################################

def additive_attention(x: Tensor, params: ParamSet, prefix: str = 'additive') -> Tensor:
    units, in_dim = params[f'{prefix}.W_t'].shape
    pooled, _ = AdditiveAttention(in_dim, units, prefix).forward(params, x)

    return pooled

def self_attention(x: Tensor, params: ParamSet, prefix: str = 'self') -> Tensor:
    in_dim, d_k = params[f'{prefix}.W_Q'].shape
    d_v = params[f'{prefix}.W_V'].shape[1]
    out, _ = SelfAttention(in_dim, d_k, d_v, prefix).forward(params, x)

    return out

def weighted_attention(hs: Tensor, params: ParamSet, prefix: str = 'weighted') -> Tensor:
    out, _ = WeightedAttention(hs.shape[-1], prefix).forward(params, hs)

    return out
