"""
Adam optimizer

Per-tensor first and second moment estimates with bias correction.
Updates are applied in the insertion order of the parameter dict so runs
are bit-reproducible.

References:
- Kingma, D. P. & Ba, J. (2015). "Adam: A Method for Stochastic Optimization"
"""

import numpy as np


class Adam:
    """Adam over a dict of named arrays.

    Args:
        learning_rate: Step size α
        beta1: First moment decay
        beta2: Second moment decay
        eps: Denominator floor
    """

    def __init__(
        self,
        learning_rate: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def update(
        self, values: dict[str, np.ndarray], grads: dict[str, np.ndarray]
    ) -> dict[str, np.ndarray]:
        """One step; returns new arrays, ``values`` is left untouched.

        Names without a gradient are carried over unchanged.
        """
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        updated: dict[str, np.ndarray] = {}
        for name, value in values.items():
            grad = grads.get(name)
            if grad is None:
                updated[name] = value
                continue
            m = self._m.get(name, np.zeros_like(value))
            v = self._v.get(name, np.zeros_like(value))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self._m[name], self._v[name] = m, v
            step = self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            updated[name] = value - step
        return updated
