"""Adam optimizer over a module's named parameters."""

import numpy as np


class Adam:
    def __init__(self, module, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.module = module
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p) for k, p in module.params().items()}
        self.v = {k: np.zeros_like(p) for k, p in module.params().items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        grads = self.module.grads()
        for key, p in self.module.params().items():
            g = grads[key]
            m = self.m[key]
            v = self.v[key]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state(self):
        out = {"t": np.array(self.t, dtype=np.int64)}
        out.update({f"m.{k}": v for k, v in self.m.items()})
        out.update({f"v.{k}": v for k, v in self.v.items()})
        return out

    def load_state(self, state):
        self.t = int(state["t"])
        for key, value in state.items():
            kind, _, name = key.partition(".")
            if kind == "m":
                self.m[name][...] = value
            elif kind == "v":
                self.v[name][...] = value
