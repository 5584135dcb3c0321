"""Dense feedforward networks over a flat float64 parameter vector.

This is the numerical substrate for every learned component in the package:
batched forward/backward passes with hand-derived gradients, an
adaptive-moment optimizer, Polyak target tracking, and a central-difference
gradient checker used by the test suite. Parameters live in a single 1-D
array so optimizers, target copies, and checkpoints can treat a network as
one vector.
"""

from __future__ import annotations

import numpy as np

__all__ = ["DenseNet", "Adam", "soft_update", "finite_diff_check"]


def _activation(name: str):
    """Return (function, derivative-in-terms-of-preactivation) for `name`."""
    if name == "relu":
        return (lambda z: np.maximum(z, 0.0), lambda z: (z > 0.0).astype(np.float64))
    if name == "tanh":
        return (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2)
    if name == "linear":
        return (lambda z: z, lambda z: np.ones_like(z))
    raise ValueError(f"unknown activation {name!r}")


class DenseNet:
    """Fully connected network with an explicit flat parameter vector.

    `layer_sizes` gives the width of every layer including input and output,
    so `[4, 64, 64, 2]` is a two-hidden-layer net. Hidden layers share one
    activation; the output layer has its own (linear by default, tanh for
    bounded actors). Weights initialize uniformly in +-1/sqrt(fan_in).

    Forward and backward accept a single input `(d,)` or a batch `(B, d)`.
    `backward` returns the gradient of `sum(upstream * output)` with respect
    to the flat parameter vector and with respect to the input.
    """

    def __init__(self, layer_sizes, activation="relu", output_activation="linear",
                 rng=None, params=None):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 1 or any(s <= 0 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        self.layer_sizes = sizes
        self.activation = activation
        self.output_activation = output_activation
        self._act, self._dact = _activation(activation)
        self._out_act, self._out_dact = _activation(output_activation)
        self.param_count = sum((i + 1) * o for i, o in zip(sizes[:-1], sizes[1:]))
        if params is not None:
            params = np.array(params, dtype=np.float64).ravel()
            if params.size != self.param_count:
                raise ValueError(f"expected {self.param_count} parameters, got {params.size}")
            if not np.all(np.isfinite(params)):
                raise ValueError("non-finite initial parameters")
            self.params = params
        elif rng is not None:
            chunks = []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                bound = 1.0 / np.sqrt(fan_in)
                chunks.append(rng.uniform(-bound, bound, size=(fan_in + 1) * fan_out))
            self.params = np.concatenate(chunks) if chunks else np.zeros(0)
        else:
            self.params = np.zeros(self.param_count)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def _layers(self):
        """Yield (W, b) views into the flat parameter vector."""
        off = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = self.params[off:off + fan_in * fan_out].reshape(fan_in, fan_out)
            off += fan_in * fan_out
            b = self.params[off:off + fan_out]
            off += fan_out
            yield w, b

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.in_dim:
            raise ValueError(f"expected input width {self.in_dim}, got shape {x.shape}")
        return h, single

    def forward(self, x):
        h, single = self._check_input(x)
        last = len(self.layer_sizes) - 2
        for idx, (w, b) in enumerate(self._layers()):
            z = h @ w + b
            h = self._out_act(z) if idx == last else self._act(z)
        return h[0] if single else h

    def backward(self, x, upstream):
        """Gradient of sum(upstream * forward(x)).

        Returns `(param_grad, input_grad)`. `upstream` must match the output
        shape, `(out,)` for a single input or `(B, out)` for a batch;
        gradients sum over the batch for parameters and stay per-row for the
        input.
        """
        h, single = self._check_input(x)
        upstream = np.asarray(upstream, dtype=np.float64)
        u = upstream[None, :] if single else upstream
        if u.shape != (h.shape[0], self.out_dim):
            raise ValueError(f"expected upstream shape {(h.shape[0], self.out_dim)}, got {u.shape}")

        layers = list(self._layers())
        inputs = [h]
        pre = []
        last = len(layers) - 1
        for idx, (w, b) in enumerate(layers):
            z = inputs[-1] @ w + b
            pre.append(z)
            inputs.append(self._out_act(z) if idx == last else self._act(z))

        grad = np.zeros_like(self.params)
        if not layers:
            ig = u.copy()
            return grad, (ig[0] if single else ig)

        offsets = []
        off = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            offsets.append(off)
            off += (fan_in + 1) * fan_out

        delta = u * self._out_dact(pre[last])
        for idx in range(last, -1, -1):
            w, _ = layers[idx]
            fan_in, fan_out = w.shape
            gw = inputs[idx].T @ delta
            gb = delta.sum(axis=0)
            o = offsets[idx]
            grad[o:o + fan_in * fan_out] = gw.ravel()
            grad[o + fan_in * fan_out:o + (fan_in + 1) * fan_out] = gb
            if idx > 0:
                delta = (delta @ w.T) * self._dact(pre[idx - 1])
            else:
                input_grad = delta @ w.T
        return grad, (input_grad[0] if single else input_grad)

    def clone(self) -> "DenseNet":
        return DenseNet(self.layer_sizes, self.activation, self.output_activation,
                        params=self.params)


class Adam:
    """Adaptive-moment optimizer over one flat parameter vector.

    `step` returns the updated parameters; moments and the step counter are
    internal state so the optimizer can be checkpointed as (m, v, t).
    Non-finite gradients raise FloatingPointError rather than silently
    corrupting the moments.
    """

    def __init__(self, size: int, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = np.zeros(int(size))
        self.v = np.zeros(int(size))
        self.t = 0

    def step(self, params, grad):
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.m.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match state {self.m.shape}")
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient passed to Adam")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def soft_update(target, source, tau: float):
    """Polyak average: new_target = (1 - tau) * target + tau * source."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    target = np.asarray(target, dtype=np.float64)
    source = np.asarray(source, dtype=np.float64)
    if target.shape != source.shape:
        raise ValueError("target and source parameter vectors differ in shape")
    return (1.0 - tau) * target + tau * source


def finite_diff_check(net: DenseNet, x, tolerance=1e-4, step=1e-5):
    """Compare analytic parameter gradients against central differences.

    The scalar objective is `sum(forward(x))` (all-ones upstream). The error
    for coordinate k is `|a_k - fd_k| / max(1e-4, |a_k| + |fd_k|)`, relative
    where gradients are O(1) and absolute (floored) where they vanish, so
    dead-unit coordinates with pure roundoff noise do not trip the check.
    Returns `(passed, max_error)`.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.ones(net.out_dim) if x.ndim == 1 else np.ones(
        (x.shape[0], net.out_dim))
    analytic, _ = net.backward(x, upstream)
    if net.param_count == 0:
        return True, 0.0
    max_err = 0.0
    for k in range(net.param_count):
        saved = net.params[k]
        net.params[k] = saved + step
        f_plus = float(np.sum(net.forward(x)))
        net.params[k] = saved - step
        f_minus = float(np.sum(net.forward(x)))
        net.params[k] = saved
        fd = (f_plus - f_minus) / (2.0 * step)
        err = abs(analytic[k] - fd) / max(1e-4, abs(analytic[k]) + abs(fd))
        max_err = max(max_err, err)
    return max_err < tolerance, max_err
