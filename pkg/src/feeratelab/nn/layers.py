# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from typing import Any

import numpy as np
from scipy.special import expit

from ..errors import InvalidInputError
from .common import Activation, ParamSet, Tensor, check_shape


##########################################################################################
# Class definitions
##########################################################################################

class Dense:
    '''
    Fully-connected layer y = act(x W^T + b).

    Parameters: <prefix>.W (out, in) and <prefix>.b (out,).
    '''

    def __init__(self, in_dim: int, out_dim: int, activation: Activation = Activation.Linear, prefix: str = 'dense'):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.prefix = prefix

    def init_params(self, params: ParamSet, rng: np.random.Generator) -> None:
        params.add_uniform(f'{self.prefix}.W', (self.out_dim, self.in_dim), self.in_dim, rng)
        params.add_uniform(f'{self.prefix}.b', (self.out_dim,), self.in_dim, rng)

    def forward(self, params: ParamSet, x: Tensor) -> tuple[Tensor, dict[str, Any]]:
        '''
        Forward pass over a batch.

        Arguments:
            params - parameter set holding the layer weights
            x      - input of shape (batch, in)
        '''

        check_shape(x, 2, self.in_dim, f'dense layer {self.prefix}')

        z = x @ params[f'{self.prefix}.W'].T + params[f'{self.prefix}.b']
        y = self.activation.apply(z)

        return y, {'x': x, 'z': z, 'y': y}

    def backward(self, params: ParamSet, cache: dict[str, Any], dy: Tensor, grads: ParamSet) -> Tensor:
        '''
        Backward pass, accumulates into grads and returns the input gradient.
        '''

        dz = dy * self.activation.derivative(cache['z'], cache['y'])

        grads[f'{self.prefix}.W'] = grads[f'{self.prefix}.W'] + dz.T @ cache['x']
        grads[f'{self.prefix}.b'] = grads[f'{self.prefix}.b'] + dz.sum(axis=0)

        return dz @ params[f'{self.prefix}.W']

class Lstm:
    '''
    LSTM over a batch of sequences, without bias terms.

    Gates i, f, o = sigmoid(W x_t + M h_(t-1)), candidate tanh(W^c x_t +
    M^c h_(t-1)), c_t = i * candidate + f * c_(t-1), h_t = o * tanh(c_t).
    With literal set the output uses tanh(c_(t-1)) instead.
    '''

    _gates = ('i', 'f', 'o', 'c')

    def __init__(self, in_dim: int, hidden: int, prefix: str = 'lstm', literal: bool = False):
        self.in_dim = in_dim
        self.hidden = hidden
        self.prefix = prefix
        self.literal = literal

    def init_params(self, params: ParamSet, rng: np.random.Generator) -> None:
        for g in self._gates:
            params.add_uniform(f'{self.prefix}.W_{g}', (self.hidden, self.in_dim), self.in_dim, rng)

        for g in self._gates:
            params.add_uniform(f'{self.prefix}.M_{g}', (self.hidden, self.hidden), self.hidden, rng)

    def forward(self, params: ParamSet, x: Tensor) -> tuple[Tensor, dict[str, Any]]:
        '''
        Forward pass.

        Arguments:
            params - parameter set holding the layer weights
            x      - sequences of shape (batch, steps, in)

        Returns all hidden states (batch, steps, hidden), the final state is
        the last step. The cache also holds the final cell state.
        '''

        check_shape(x, 3, self.in_dim, f'lstm layer {self.prefix}')

        batch, steps, _ = x.shape

        W = {g: params[f'{self.prefix}.W_{g}'] for g in self._gates}
        M = {g: params[f'{self.prefix}.M_{g}'] for g in self._gates}

        h = np.zeros((batch, self.hidden))
        c = np.zeros((batch, self.hidden))

        hs, cs, gates = [h], [c], []

        for t in range(steps):
            x_t = x[:, t, :]

            i = expit(x_t @ W['i'].T + h @ M['i'].T)
            f = expit(x_t @ W['f'].T + h @ M['f'].T)
            o = expit(x_t @ W['o'].T + h @ M['o'].T)
            g = np.tanh(x_t @ W['c'].T + h @ M['c'].T)

            c_prev = c
            c = i * g + f * c_prev
            h = o * np.tanh(c_prev if self.literal else c)

            hs.append(h)
            cs.append(c)
            gates.append((i, f, o, g))

        cache = {'x': x, 'hs': hs, 'cs': cs, 'gates': gates, 'W': W, 'M': M}

        return np.stack(hs[1:], axis=1), cache

    def final_state(self, cache: dict[str, Any]) -> tuple[Tensor, Tensor]:
        return cache['hs'][-1], cache['cs'][-1]

    def backward(self, params: ParamSet, cache: dict[str, Any], dhs: Tensor, grads: ParamSet) -> Tensor:
        '''
        Backpropagation through time.

        Arguments:
            params - parameter set holding the layer weights
            cache  - forward cache
            dhs    - gradient wrt all hidden states (batch, steps, hidden)
            grads  - gradient accumulator

        Returns the gradient wrt the input sequences.
        '''

        x = cache['x']
        W, M = cache['W'], cache['M']

        _, steps, _ = x.shape

        dW = {g: np.zeros_like(W[g]) for g in self._gates}
        dM = {g: np.zeros_like(M[g]) for g in self._gates}
        dx = np.zeros_like(x)

        dh_next = np.zeros_like(cache['hs'][0])
        dc_next = np.zeros_like(cache['cs'][0])

        for t in range(steps - 1, -1, -1):
            i, f, o, g = cache['gates'][t]
            c_prev, c = cache['cs'][t], cache['cs'][t + 1]
            h_prev = cache['hs'][t]

            dh = dhs[:, t, :] + dh_next

            if self.literal:
                tc = np.tanh(c_prev)
                do = dh * tc
                dc = dc_next
                dc_prev_out = dh * o * (1.0 - tc * tc)
            else:
                tc = np.tanh(c)
                do = dh * tc
                dc = dc_next + dh * o * (1.0 - tc * tc)
                dc_prev_out = 0.0

            da = {
                'i': dc * g * i * (1.0 - i),
                'f': dc * c_prev * f * (1.0 - f),
                'o': do * o * (1.0 - o),
                'c': dc * i * (1.0 - g * g),
            }

            x_t = x[:, t, :]
            dh_next = np.zeros_like(dh)

            for k in self._gates:
                dW[k] += da[k].T @ x_t
                dM[k] += da[k].T @ h_prev
                dx[:, t, :] += da[k] @ W[k]
                dh_next += da[k] @ M[k]

            dc_next = dc * f + dc_prev_out

        for k in self._gates:
            grads[f'{self.prefix}.W_{k}'] = grads[f'{self.prefix}.W_{k}'] + dW[k]
            grads[f'{self.prefix}.M_{k}'] = grads[f'{self.prefix}.M_{k}'] + dM[k]

        return dx


##########################################################################################
# Functions
##########################################################################################

def dense_forward(x: Tensor, params: ParamSet, activation: Activation = Activation.Linear, prefix: str = 'dense') -> Tensor:
    '''
    Single dense layer forward pass, layer shape taken from the parameters.
    '''

    out_dim, in_dim = params[f'{prefix}.W'].shape
    y, _ = Dense(in_dim, out_dim, activation, prefix).forward(params, x)

    return y

def lstm_forward(x: Tensor, params: ParamSet, prefix: str = 'lstm', literal: bool = False) -> tuple[Tensor, Tensor, Tensor]:
    '''
    LSTM forward pass, returns (all hidden states, final h, final c).
    '''

    hidden, in_dim = params[f'{prefix}.W_i'].shape
    layer = Lstm(in_dim, hidden, prefix, literal)

    hs, cache = layer.forward(params, x)
    h, c = layer.final_state(cache)

    return hs, h, c

def mse_loss(pred: Tensor, target: Tensor) -> tuple[float, Tensor]:
    '''
    Mean squared error and its gradient wrt the prediction.
    '''

    if pred.shape != target.shape:
        raise InvalidInputError(f'loss shape mismatch: {pred.shape} != {target.shape}')

    diff = pred - target

    return float(np.mean(diff * diff)), 2.0 * diff / diff.size

def bce_with_logits(logits: Tensor, labels: Tensor) -> tuple[float, Tensor]:
    '''
    Binary cross-entropy on logits and its gradient wrt the logits.
    '''

    if logits.shape != labels.shape:
        raise InvalidInputError(f'loss shape mismatch: {logits.shape} != {labels.shape}')

    # log(1 + exp(z)) - y z, written to stay finite for large |z|
    loss = np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))

    return float(np.mean(loss)), (expit(logits) - labels) / logits.size
