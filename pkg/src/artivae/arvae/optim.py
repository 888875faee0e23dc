"""Adam over the flat parameter buffer."""
import numpy as np

from .. import kernels

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class Adam:
    def __init__(self, size, learning_rate=1e-3, beta1=BETA1, beta2=BETA2, eps=EPS,
                 backend=None):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.step_count = 0
        self._k = kernels.get_backend(backend)

    def step(self, params, grads):
        """Update ``params`` in place from ``grads`` (both :class:`VaeParams` or flat arrays)."""
        p = params if isinstance(params, np.ndarray) else params.data
        g = grads if isinstance(grads, np.ndarray) else grads.data
        if p.shape != g.shape or p.shape != self.m.shape:
            raise ValueError("parameter, gradient and moment shapes differ")
        self.step_count += 1
        self._k.adam_update(p, g, self.m, self.v, self.learning_rate, self.beta1,
                            self.beta2, self.eps, self.step_count)


def adam_step(params, grads, moments, step_count, learning_rate, backend=None):
    """Functional form: returns ``(new_params, (m, v), step_count + 1)``."""
    p = np.array(params, dtype=np.float64, copy=True)
    m, v = (np.array(x, dtype=np.float64, copy=True) for x in moments)
    kernels.get_backend(backend).adam_update(p, np.ascontiguousarray(grads, dtype=np.float64),
                                             m, v, learning_rate, BETA1, BETA2, EPS,
                                             step_count + 1)
    return p, (m, v), step_count + 1
