# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from .attention import AdditiveAttention, SelfAttention, WeightedAttention, additive_attention, self_attention, weighted_attention
from .checkpoint import deserialize_params, load_checkpoint, save_checkpoint, serialize_params
from .common import Activation, ParamSet, Tensor, softmax
from .gradcheck import GradCheckReport, grad_check, layer_suite
from .layers import Dense, Lstm, bce_with_logits, dense_forward, lstm_forward, mse_loss
from .optim import AdamHyper, AdamState, adam_step
