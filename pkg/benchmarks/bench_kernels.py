"""Compare the compiled kernels with their numpy twins.

Times each kernel on training-sized buffers and one full training step
(forward, backward, Adam) of the default-size model.

    python benchmarks/bench_kernels.py [--repeat 200] [--batch 32]
"""
import argparse
import timeit

import numpy as np

from artivae.arvae import Adam, init_params, loss_and_grads
from artivae.kernels import BACKENDS


def _kernel_cases(rng, batch, n_params):
    p, g = rng.standard_normal(n_params), rng.standard_normal(n_params)
    m, v = np.zeros(n_params), np.zeros(n_params)
    z, b = rng.standard_normal((batch, 256)), rng.standard_normal(256)
    h = np.tanh(rng.standard_normal((batch, 256)))
    delta, bias_grad = rng.standard_normal((batch, 256)), np.empty(256)
    target, mu = rng.standard_normal((batch, 18)), rng.standard_normal((batch, 18))
    lv = rng.standard_normal((batch, 18))
    out = [np.empty((batch, 18)), np.empty((batch, 18)), np.empty(batch)]

    def cases(k):
        return {
            "adam_update": lambda: k.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 10),
            "bias_tanh": lambda: k.bias_tanh(z.copy(), b),
            "tanh_backward": lambda: k.tanh_backward(delta.copy(), h, bias_grad),
            "gaussian_nll": lambda: k.gaussian_nll(target, mu, lv, -15.0, 15.0, 1 / batch, *out),
        }
    return cases


def _train_step(backend, batch, rng):
    params = init_params(12, 6, rng)
    opt = Adam(params.size, backend=backend)
    grads = params.zeros_like()
    x, a = rng.standard_normal((batch, 18)), rng.standard_normal((batch, 6))
    eps = rng.standard_normal((batch, 12))

    def step():
        loss_and_grads(params, x, x, a, 1.0, eps, backend=backend, grads=grads)
        opt.step(params, grads)
    return step, params.size


def best_us(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e6


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--batch", type=int, default=32)
    args = parser.parse_args(argv)

    names = [n for n in ("compiled", "python") if n in BACKENDS]
    if "compiled" not in BACKENDS:
        print("compiled backend not built; timing the numpy fallback only")
    rng = np.random.default_rng(0)
    _, size = _train_step("python", args.batch, rng)
    cases = _kernel_cases(rng, args.batch, size)
    rows = {}
    for name in names:
        for kernel, fn in cases(BACKENDS[name]).items():
            rows.setdefault(kernel, {})[name] = best_us(fn, args.repeat)
        step, _ = _train_step(name, args.batch, np.random.default_rng(1))
        rows.setdefault("training step", {})[name] = best_us(step, args.repeat)

    print(f"{'kernel':<16}" + "".join(f"{n + ' (us)':>16}" for n in names) + f"{'speedup':>10}")
    for kernel, t in rows.items():
        line = f"{kernel:<16}" + "".join(f"{t[n]:>16.1f}" for n in names)
        if len(names) == 2:
            line += f"{t['python'] / t['compiled']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    with np.errstate(over="ignore"):
        main()
