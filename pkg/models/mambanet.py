"""
MambaNet style classifier: a CNN-LSTM hybrid over the embedded field
sequence. Fields are consumed in schema order. The `dense` variant skips
the conv/recurrent stages and flattens the embeddings straight into the
dense head.
"""

import numpy as np

from models.layers import EMBEDDING_INIT_BOUND, TabularModel, dense, dropout, embed, fan_in_uniform, uniform


class MambaNetModel(TabularModel):
    kind = 'mambanet'

    @property
    def is_recurrent(self):
        return self.hyperparams.variant == 'cnn-lstm'

    def init_parameters(self, rng):
        hp = self.hyperparams
        e = hp.embed_dim
        self.add_parameter('embedding', uniform(rng, (hp.input_dim, e), EMBEDDING_INIT_BOUND, self.dtype))
        if self.is_recurrent:
            for i in range(hp.num_conv):
                fan_in = hp.conv_width * e
                self.add_parameter(f'conv{i}.weight', fan_in_uniform(rng, (hp.conv_width, e, e), fan_in, self.dtype))
                self.add_parameter(f'conv{i}.bias', np.zeros(e))
            hidden = hp.lstm_hidden
            self.add_parameter('lstm.weight', fan_in_uniform(rng, (e + hidden, 4 * hidden), e + hidden, self.dtype))
            bias = np.zeros(4 * hidden)
            bias[hidden:2 * hidden] = 1.0  # forget gate
            self.add_parameter('lstm.bias', bias)
            width = hidden
        else:
            width = self.n_fields * e
        for i, size in enumerate(hp.hidden_dims):
            self.add_parameter(f'dense{i}.weight', fan_in_uniform(rng, (width, size), width, self.dtype))
            self.add_parameter(f'dense{i}.bias', np.zeros(size))
            width = size
        self.add_parameter('output.weight', fan_in_uniform(rng, (width, hp.output_dim), width, self.dtype))
        self.add_parameter('output.bias', np.zeros(hp.output_dim))

    def _param(self, graph, name):
        return graph.parameter(self.params[name])

    def encode_sequence(self, graph, seq, batch_size):
        """conv stack then an LSTM pass; returns the final hidden state (B, lstm_hidden)"""
        hp = self.hyperparams
        for i in range(hp.num_conv):
            seq = graph.apply('relu', [graph.apply('conv1d', [seq, self._param(graph, f'conv{i}.weight'),
                                                              self._param(graph, f'conv{i}.bias')])])
        hidden = hp.lstm_hidden
        h = graph.constant(np.zeros((batch_size, hidden), dtype=self.dtype))
        c = graph.constant(np.zeros((batch_size, hidden), dtype=self.dtype))
        weight = self._param(graph, 'lstm.weight')
        bias = self._param(graph, 'lstm.bias')
        for t in range(self.n_fields):
            step = graph.apply('slice', [seq], axis=1, start=t, stop=t + 1)
            step = graph.apply('reshape', [step], shape=(batch_size, hp.embed_dim))
            state = graph.apply('lstm-cell', [step, h, c, weight, bias])
            h = graph.apply('slice', [state], axis=1, start=0, stop=hidden)
            c = graph.apply('slice', [state], axis=1, start=hidden, stop=2 * hidden)
        return h

    def forward(self, graph, x, mode='eval', rng=None):
        hp = self.hyperparams
        batch_size = x.shape[0]
        emb = embed(graph, self, x)
        if self.is_recurrent:
            features = self.encode_sequence(graph, emb, batch_size)
        else:
            features = graph.apply('reshape', [emb], shape=(batch_size, self.n_fields * hp.embed_dim))
        for i in range(len(hp.hidden_dims)):
            features = graph.apply('relu', [dense(graph, features, self._param(graph, f'dense{i}.weight'),
                                                  self._param(graph, f'dense{i}.bias'))])
            features = dropout(graph, features, hp.dropout_rate, mode, rng)
        return dense(graph, features, self._param(graph, 'output.weight'), self._param(graph, 'output.bias'))


def mambanet_forward(model, batch, mode='eval', rng=None):
    """Logits for an EncodedMatrix slice or a plain (batch, columns) array"""
    data = batch.data if hasattr(batch, 'data') else batch
    return model.logits(data, mode=mode, rng=rng)
