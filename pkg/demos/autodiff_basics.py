"""Tour of the reverse-mode engine: build a graph, backpropagate, verify.

Walks the same path the training loop takes, at toy size: tensors in,
a scalar loss out, one backward() call, and a finite-difference check that
the analytic gradients are trustworthy.
"""

import numpy as np

from twoview.ndgrad import Tensor, conv2d, dense, finite_diff_grad, global_avg_pool, relu


def main():
    rng = np.random.default_rng(7)

    # A scalar chain first: every op records its parents, backward() walks
    # the graph once in reverse topological order.
    a = Tensor(np.array(2.0), requires_grad=True)
    b = Tensor(np.array(-3.0), requires_grad=True)
    loss = (a * b + a**2).sum()
    loss.backward()
    print(f"d(a*b + a^2)/da at a=2, b=-3: {a.grad:+.1f}  (expect -3 + 4 = +1.0)")
    print(f"d(a*b + a^2)/db at a=2, b=-3: {b.grad:+.1f}  (expect  2      = +2.0)")
    print()

    # The same machinery drives the network ops.  Chain conv -> relu ->
    # global average pool -> dense on a 6x6 image and compare every
    # parameter gradient against central finite differences.
    x = Tensor(rng.uniform(0, 1, (2, 3, 6, 6)))
    params = {
        "kernel": Tensor(rng.normal(0, 0.3, (4, 3, 3, 3)), requires_grad=True),
        "kbias": Tensor(np.zeros(4), requires_grad=True),
        "weight": Tensor(rng.normal(0, 0.3, (2, 4)), requires_grad=True),
        "dbias": Tensor(np.zeros(2), requires_grad=True),
    }

    def forward() -> Tensor:
        h = relu(conv2d(x, params["kernel"], params["kbias"], pad=1))
        return (dense(global_avg_pool(h), params["weight"], params["dbias"]) ** 2).sum()

    loss = forward()
    loss.backward()
    fd = finite_diff_grad(lambda: forward().item(), params, h=1e-5)

    print("conv -> relu -> pool -> dense, |analytic - finite difference|:")
    for name, p in params.items():
        err = np.max(np.abs(p.grad - fd[name])) / (np.max(np.abs(fd[name])) + 1e-12)
        print(f"  {name:7s} max relative error {err:.2e}")


if __name__ == "__main__":
    main()
