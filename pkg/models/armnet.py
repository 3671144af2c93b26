"""
ARM-Net style classifier.
Per-field embeddings feed gated multi-head attention; each head turns its
attention weights into exponents of multiplicative feature crosses
(exponential interaction neurons). The crosses go through a residual
feed-forward stack and a 3-way classifier head.
"""

import numpy as np

from engine import ComputeGraph
from models.layers import (EMBEDDING_INIT_BOUND, TabularModel, dense, dropout, embed, fan_in_uniform,
                           uniform)

LOG_EPS = 1e-6


def exponential_interaction(graph, alpha, log_magnitude):
    """
    exp(sum_j alpha[:, j, k] * log(|e_j| + eps)) for every neuron k.
    alpha: (B, F, K), log_magnitude: (B, F, E) -> (B, K, E)
    """
    exponent = graph.apply('matmul', [alpha, log_magnitude], transpose_a=True)
    return graph.apply('exp', [exponent])


class ArmNetModel(TabularModel):
    kind = 'armnet'

    def init_parameters(self, rng):
        hp = self.hyperparams
        e, k, width = hp.embed_dim, hp.num_cross, hp.hidden_dim
        self.add_parameter('embedding', uniform(rng, (hp.input_dim, e), EMBEDDING_INIT_BOUND, self.dtype))
        for h in range(hp.num_heads):
            self.add_parameter(f'head{h}.key', fan_in_uniform(rng, (e, e), e, self.dtype))
            self.add_parameter(f'head{h}.query', fan_in_uniform(rng, (e, k), e, self.dtype))
            self.add_parameter(f'head{h}.gate_weight', fan_in_uniform(rng, (e, 1), e, self.dtype))
            self.add_parameter(f'head{h}.gate_bias', np.zeros(1))
        interaction_dim = hp.num_heads * k * e
        self.add_parameter('input.weight', fan_in_uniform(rng, (interaction_dim, width), interaction_dim, self.dtype))
        self.add_parameter('input.bias', np.zeros(width))
        for i in range(hp.num_layers):
            self.add_parameter(f'block{i}.norm.gamma', np.ones(width))
            self.add_parameter(f'block{i}.norm.beta', np.zeros(width))
            self.add_parameter(f'block{i}.dense.weight', fan_in_uniform(rng, (width, width), width, self.dtype))
            self.add_parameter(f'block{i}.dense.bias', np.zeros(width))
        self.add_parameter('output.weight', fan_in_uniform(rng, (width, hp.output_dim), width, self.dtype))
        self.add_parameter('output.bias', np.zeros(hp.output_dim))

    def _param(self, graph, name):
        return graph.parameter(self.params[name])

    def attention(self, graph, emb, head):
        """Gated attention weights over fields, (B, F, K); softmax over the field axis"""
        keys = graph.apply('tanh', [graph.apply('matmul', [emb, self._param(graph, f'head{head}.key')])])
        scores = graph.apply('matmul', [keys, self._param(graph, f'head{head}.query')])
        gate = graph.apply('sigmoid', [dense(graph, emb, self._param(graph, f'head{head}.gate_weight'),
                                             self._param(graph, f'head{head}.gate_bias'))])
        return graph.apply('softmax', [graph.apply('mul', [scores, gate])], axis=1)

    def forward(self, graph, x, mode='eval', rng=None):
        hp = self.hyperparams
        emb = embed(graph, self, x)
        log_magnitude = graph.apply('log', [emb], magnitude=True, eps=LOG_EPS)
        crosses = [exponential_interaction(graph, self.attention(graph, emb, h), log_magnitude)
                   for h in range(hp.num_heads)]
        z = crosses[0] if len(crosses) == 1 else graph.apply('concat', crosses, axis=1)
        z = graph.apply('reshape', [z], shape=(-1, hp.num_heads * hp.num_cross * hp.embed_dim))

        hidden = graph.apply('relu', [dense(graph, z, self._param(graph, 'input.weight'),
                                            self._param(graph, 'input.bias'))])
        for i in range(hp.num_layers):
            normed = graph.apply('layernorm', [hidden, self._param(graph, f'block{i}.norm.gamma'),
                                               self._param(graph, f'block{i}.norm.beta')])
            update = graph.apply('relu', [dense(graph, normed, self._param(graph, f'block{i}.dense.weight'),
                                                self._param(graph, f'block{i}.dense.bias'))])
            hidden = graph.apply('add', [hidden, dropout(graph, update, hp.dropout_rate, mode, rng)])
        return dense(graph, hidden, self._param(graph, 'output.weight'), self._param(graph, 'output.bias'))

    def attention_weights(self, data):
        """Eval-mode attention weights per head, shape (H, B, F, K)"""
        graph = ComputeGraph()
        emb = embed(graph, self, graph.constant(self.check_input(data)))
        return np.stack([self.attention(graph, emb, h).data for h in range(self.hyperparams.num_heads)])


def armnet_forward(model, batch, mode='eval', rng=None):
    """Logits for an EncodedMatrix slice or a plain (batch, columns) array"""
    data = batch.data if hasattr(batch, 'data') else batch
    return model.logits(data, mode=mode, rng=rng)
