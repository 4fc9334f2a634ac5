"""
Adaptive-moment optimizer over a flat parameter vector
"""

import numpy as np

from utils import LabValidationError, lab_default


class Adam:
    """
    Adam with bias correction and a per-parameter learning-rate vector

    Args:
        size (int): Number of parameters
        betas (tuple): Decay rates of the first and second moments
        eps (float): Denominator offset
    """

    def __init__(self, size, betas=None, eps=None):
        beta1, beta2 = betas if betas is not None else lab_default('adam_betas', (0.9, 0.999))
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise LabValidationError('Adam decay rates must lie in [0, 1)')
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps if eps is not None else lab_default('adam_eps', 1e-8))
        self.m = np.zeros(int(size))
        self.v = np.zeros(int(size))
        self.t = 0

    def step(self, params, grad, rates) -> np.ndarray:
        """Return the updated parameters; ``rates`` is a scalar or one rate per parameter."""
        grad = np.asarray(grad, dtype=float)
        if grad.shape != self.m.shape:
            raise LabValidationError(f'gradient has shape {grad.shape}, optimizer tracks {self.m.shape}')
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad ** 2
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - rates * m_hat / (np.sqrt(v_hat) + self.eps)
