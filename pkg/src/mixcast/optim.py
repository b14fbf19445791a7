"""Adam optimizer over named parameters."""

import numpy as np

from .autodiff import Parameter


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names passed to Adam")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m = {p.name: np.zeros_like(p.data) for p in self.params}
        self._v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p in self.params:
            if p.grad is None:
                raise ValueError(f"parameter {p.name!r} has no gradient")
            m = self._m[p.name]
            v = self._v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class Module:
    """Minimal container: parameters are attributes, submodules recurse."""

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix=""):
        out = []
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                out.append((name, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(prefix=name + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(prefix=f"{name}.{i}."))
                    elif isinstance(item, Parameter):
                        out.append((f"{name}.{i}", item))
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    """Affine map on the last axis; weights uniform in +-1/sqrt(fan_in)."""

    def __init__(self, in_dim, out_dim, rng, name="linear"):
        bound = 1.0 / np.sqrt(in_dim)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(in_dim, out_dim)), f"{name}.weight")
        self.bias = Parameter(np.zeros(out_dim), f"{name}.bias")

    def __call__(self, x):
        return x @ self.weight + self.bias
