"""Minimal module system: parameter containers with deterministic naming."""

import math

import numpy as np

from . import functional as F
from .tensor import Tensor


class Parameter(Tensor):
    """A learnable tensor (always ``requires_grad``)."""

    __slots__ = ()

    def __init__(self, data, dtype=np.float32):
        super().__init__(np.asarray(data, dtype=dtype), requires_grad=True)


class Module:
    """Base class; parameters and submodules are discovered from attributes.

    Parameter names are dotted attribute paths, ordered by attribute
    assignment, so two instances built from the same config enumerate
    identical names in identical order.
    """

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def zero_(self):
        """Set every parameter to zero (used by passthrough checks and ``--init zero``)."""
        for p in self.parameters():
            p.data[...] = 0

    def forward(self, *args):
        raise NotImplementedError

    def __call__(self, *args):
        return self.forward(*args)


class Conv2d(Module):
    """Square-kernel convolution, "same" padding for stride 1.

    Weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at 0.
    """

    def __init__(self, cin, cout, kernel_size=3, rng=None, bias=True):
        rng = np.random.default_rng(0) if rng is None else rng
        bound = 1.0 / math.sqrt(cin * kernel_size * kernel_size)
        self.weight = Parameter(rng.uniform(-bound, bound, (cout, cin, kernel_size, kernel_size)))
        self.bias = Parameter(np.zeros(cout)) if bias else None
        self.padding = kernel_size // 2

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, padding=self.padding)


class PReLU(Module):
    def __init__(self, num_parameters=1, init=0.25):
        self.slope = Parameter(np.full(num_parameters, init))

    def forward(self, x):
        return F.prelu(x, self.slope)
