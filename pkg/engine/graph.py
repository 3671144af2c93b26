"""
Reverse-mode automatic differentiation tape.
A ComputeGraph records every kernel application in order; backward sweeps
the records in reverse and accumulates gradients at fan-in.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from engine.kernels import KERNELS
from utils.errors import NumericalError, ShapeError

logger = logging.getLogger(__name__)


class Parameter:
    """Named trainable array with a gradient slot"""

    def __init__(self, name, data):
        self.name = name
        self.data = np.asarray(data)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Tensor:
    """A value on a ComputeGraph"""

    def __init__(self, graph, node_id, data, requires_grad):
        self.graph = graph
        self.node_id = node_id
        self.data = data
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(node={self.node_id}, shape={self.data.shape}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    kind: str
    inputs: list
    ctx: object = None
    requires_grad: bool = False
    parameter: Parameter = None


@dataclass
class ComputeGraph:
    """Topologically ordered op records plus the parameters used as leaves"""
    debug: bool = False
    nodes: list = field(default_factory=list)
    parameters: dict = field(default_factory=dict)

    def _push(self, node, data):
        self.nodes.append(node)
        return Tensor(self, len(self.nodes) - 1, data, node.requires_grad)

    def constant(self, data, dtype=None):
        data = np.asarray(data, dtype=dtype)
        return self._push(Node(kind='constant', inputs=[]), data)

    def parameter(self, param):
        """Leaf for a Parameter; one leaf per parameter name"""
        if param.name in self.parameters:
            existing_id = self.parameters[param.name]
            return Tensor(self, existing_id, param.data, True)
        tensor = self._push(Node(kind='parameter', inputs=[], requires_grad=True, parameter=param), param.data)
        self.parameters[param.name] = tensor.node_id
        return tensor

    def apply(self, kind, inputs, **attrs):
        """Run a kernel forward and record it on the tape"""
        kernel = KERNELS.get(kind)
        if kernel is None:
            raise ShapeError(f"Unknown kernel {kind!r}")
        for t in inputs:
            if t.graph is not self:
                raise ShapeError(f"{kind}: input tensor belongs to another graph")
        out, ctx = kernel.forward([t.data for t in inputs], attrs)
        if self.debug and not np.all(np.isfinite(out)):
            raise NumericalError(f"{kind} produced non-finite values")
        requires_grad = any(t.requires_grad for t in inputs)
        node = Node(kind=kind, inputs=[t.node_id for t in inputs], ctx=ctx if requires_grad else None,
                    requires_grad=requires_grad)
        return self._push(node, out)


def backward(graph, loss):
    """
    Reverse sweep from a scalar loss.
    Returns parameter name -> gradient; parameters not reached get zeros.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    for node_id in graph.parameters.values():
        graph.nodes[node_id].parameter.grad = None
    grads = {loss.node_id: np.ones_like(loss.data)}
    for node_id in range(loss.node_id, -1, -1):
        node = graph.nodes[node_id]
        grad = grads.pop(node_id, None)
        if grad is None or not node.requires_grad:
            continue
        if node.kind == 'parameter':
            param = node.parameter
            param.grad = grad.reshape(param.data.shape)
            continue
        input_grads = KERNELS[node.kind].backward(grad, node.ctx)
        for input_id, input_grad in zip(node.inputs, input_grads):
            if not graph.nodes[input_id].requires_grad:
                continue
            if input_id in grads:
                grads[input_id] = grads[input_id] + input_grad
            else:
                grads[input_id] = input_grad

    result = {}
    for name, node_id in graph.parameters.items():
        param = graph.nodes[node_id].parameter
        if param.grad is None or param.grad.shape != param.data.shape:
            param.grad = np.zeros_like(param.data)
        result[name] = param.grad
    return result
