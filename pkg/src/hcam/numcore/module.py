"""Parameter containers."""
import numpy as np

from ..errors import ShapeError
from .functional import layer_norm, linear
from .tensor import Tensor, relu


def uniform_init(rng, shape, fan_in, dtype=np.float32):
    bound = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def zeros_param(shape, dtype=np.float32):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones_param(shape, dtype=np.float32):
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


class Module:
    """Attribute-driven parameter tree.

    Parameters are ``Tensor`` attributes with ``requires_grad``; submodules are
    ``Module`` attributes or lists of them. Order of registration is attribute
    assignment order, which keeps ``named_parameters`` stable across runs.
    """

    training = True

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for val in vars(self).values():
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        yield from item.modules()

    def num_parameters(self):
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ShapeError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ShapeError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, dtype=np.float32):
        self.weight = uniform_init(rng, (out_dim, in_dim), in_dim, dtype)
        self.bias = zeros_param((out_dim,), dtype)

    def __call__(self, x):
        return linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float32, eps=1e-5):
        self.gamma = ones_param((dim,), dtype)
        self.beta = zeros_param((dim,), dtype)
        self.eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gamma, self.beta, self.eps)


class FeedForward(Module):
    """Position-wise ``Linear -> ReLU -> Linear``."""

    def __init__(self, in_dim, hidden_dim, out_dim, rng, dtype=np.float32):
        self.fc1 = Linear(in_dim, hidden_dim, rng, dtype)
        self.fc2 = Linear(hidden_dim, out_dim, rng, dtype)

    def __call__(self, x):
        return self.fc2(relu(self.fc1(x)))
