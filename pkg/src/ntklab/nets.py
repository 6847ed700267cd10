"""Finite-width trainable networks with exact reverse-mode gradients.

Three architectures:

* TwoLayerNet — the NTK-regime network f(x) = (1/sqrt(r)) sum_r a_r
  sigma(w_r . x): Gaussian first layer (trained), frozen +-1 output signs.
  Accepts flat vectors or node sets (sum readout).
* WcgcnNet — the message-passing power-control network: per layer,
  y_k = MAX_{i != k} MLP1(p_i, |h_ik|, |h_ki|) followed by
  p_k = sigmoid(MLP2(y_k, w_k, |h_kk|)), parameters shared across nodes.
* PowerMlp — the flat baseline: |H| magnitudes and weights in, K sigmoid
  powers out.

MLP blocks in the two trained-from-scratch nets are Linear -> ReLU ->
BatchNorm, following the reference message-passing implementations for this
problem; without the normalization the sigmoid head saturates at the
full-power fixed point and training stalls.  All gradients are hand-written
reverse mode and checked against central finite differences in the tests.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericFailureError
from .netsim import PowerAllocation, neighbor_indices, sum_rate_batch
from .rng import DOMAIN_INIT, stream

__all__ = [
    "TwoLayerNet",
    "WcgcnNet",
    "PowerMlp",
    "init_net",
    "forward_mlp",
    "forward_wcgcn",
    "gradients",
    "loss_value",
    "output_jacobians",
    "sum_rate_loss_grad",
]

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _he(rng, fan_in, shape):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _bn_forward(A, gamma, beta, state, prefix, tag, train):
    """BatchNorm over axis 0.  Returns (out, cache); updates running stats
    in train mode.  Stats live in ``state`` under ``{prefix}mu{tag}`` /
    ``{prefix}va{tag}``."""
    mk, vk = prefix + "mu" + tag, prefix + "va" + tag
    if train:
        mu = A.mean(axis=0)
        va = A.var(axis=0)
        state[mk] = (1 - BN_MOMENTUM) * state[mk] + BN_MOMENTUM * mu
        state[vk] = (1 - BN_MOMENTUM) * state[vk] + BN_MOMENTUM * va
    else:
        mu, va = state[mk], state[vk]
    inv = 1.0 / np.sqrt(va + BN_EPS)
    xhat = (A - mu) * inv
    return gamma * xhat + beta, (xhat, inv)


def _bn_backward(dout, gamma, cache, train):
    xhat, inv = cache
    dgamma = (dout * xhat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dxhat = dout * gamma
    if train:
        dA = (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0)) * inv
    else:
        dA = dxhat * inv
    return dA, dgamma, dbeta


# ---------------------------------------------------------------------------
# TwoLayerNet

class TwoLayerNet:
    """f(x) = (1/sqrt(r)) sum_r a_r sigma(w_r . x); only W is trainable."""

    kind = "two-layer"

    def __init__(self, W, a, activation="relu"):
        self.W = np.asarray(W, dtype=float)
        self.a = np.asarray(a, dtype=float)
        if self.W.ndim != 2 or self.a.shape != (self.W.shape[0],):
            raise ValueError("W must be (r, d) and a an r-vector")
        if not np.all(np.isin(self.a, (-1.0, 1.0))):
            raise ValueError("output signs must be +-1")
        if activation not in ("relu", "quadratic"):
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation

    @property
    def width(self):
        return self.W.shape[0]

    @property
    def d(self):
        return self.W.shape[1]

    @property
    def params(self):
        return {"W": self.W}

    def _act(self, Z):
        return np.maximum(Z, 0.0) if self.activation == "relu" else Z ** 2

    def _act_prime(self, Z):
        return (Z > 0).astype(float) if self.activation == "relu" else 2.0 * Z

    def forward(self, X):
        """Flat (m, d) inputs -> (m,) outputs; node sets (m, n, d) -> sum
        readout over nodes."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim == 2:
            Z = X @ self.W.T
            return self._act(Z) @ self.a / np.sqrt(self.width)
        if X.ndim == 3:
            m, n, d = X.shape
            Z = X.reshape(m * n, d) @ self.W.T
            per_node = self._act(Z) @ self.a / np.sqrt(self.width)
            return per_node.reshape(m, n).sum(axis=1)
        raise ValueError("inputs must be (d,), (m, d) or (m, n, d)")

    def grad_W(self, X, dout):
        """d(sum_i dout_i * f(x_i))/dW for flat or node-set inputs."""
        X = np.asarray(X, dtype=float)
        dout = np.asarray(dout, dtype=float)
        if X.ndim == 2:
            Xn, g = X, dout
        else:
            m, n, d = X.shape
            Xn = X.reshape(m * n, d)
            g = np.repeat(dout, n)
        Z = Xn @ self.W.T
        S = self._act_prime(Z) * self.a                     # (N, r)
        return (S * g[:, None]).T @ Xn / np.sqrt(self.width)


# ---------------------------------------------------------------------------
# WcgcnNet

class WcgcnNet:
    """Weight-tied message-passing power-control net (MAX aggregation,
    sigmoid head).  Parameter count is independent of K, so one net serves
    any user count."""

    kind = "wcgcn"

    def __init__(self, params, state, hidden, layers):
        self.params = params
        self.state = state
        self.hidden = hidden
        self.layers = layers
        self._nbr_cache = {}

    @classmethod
    def create(cls, hidden, layers, seed):
        rng = stream(seed, DOMAIN_INIT, 1)
        params, state = {}, {}
        for j in range(layers):
            p = f"l{j}."
            params[p + "W1a"] = _he(rng, 3, (3, hidden))
            params[p + "b1a"] = np.zeros(hidden)
            params[p + "g1a"] = np.ones(hidden)
            params[p + "be1a"] = np.zeros(hidden)
            params[p + "W1b"] = _he(rng, hidden, (hidden, hidden))
            params[p + "b1b"] = np.zeros(hidden)
            params[p + "g1b"] = np.ones(hidden)
            params[p + "be1b"] = np.zeros(hidden)
            params[p + "W2a"] = _he(rng, hidden + 2, (hidden + 2, hidden))
            params[p + "b2a"] = np.zeros(hidden)
            params[p + "g2a"] = np.ones(hidden)
            params[p + "be2a"] = np.zeros(hidden)
            params[p + "W2b"] = _he(rng, hidden, (hidden, 1))
            params[p + "b2b"] = np.zeros(1)
            for key in ("1a", "1b", "2a"):
                state[p + "mu" + key] = np.zeros(hidden)
                state[p + "va" + key] = np.ones(hidden)
        return cls(params, state, hidden, layers)

    def n_params(self):
        return sum(v.size for v in self.params.values())

    def _nbr(self, K):
        if K not in self._nbr_cache:
            nbr = neighbor_indices(K)
            E = K * (K - 1)
            scatter = np.zeros((E, K))
            if E:
                scatter[np.arange(E), nbr.reshape(-1)] = 1.0
            self._nbr_cache[K] = (nbr, scatter)
        return self._nbr_cache[K]

    def forward_batch(self, mags, weights, train=False):
        """mags (m, K, K), weights (m, K) -> powers (m, K) plus cache."""
        m, K, _ = mags.shape
        h = self.hidden
        nbr, _ = self._nbr(K)
        diag = np.einsum("mkk->mk", mags)
        p = np.ones((m, K))
        caches = []
        if K > 1:
            E = K * (K - 1)
            h_ik = mags[:, nbr, np.arange(K)[:, None]]
            h_ki = mags[:, np.arange(K)[:, None], nbr]
        for j in range(self.layers):
            pf = f"l{j}."
            P = self.params
            if K > 1:
                pi = p[:, nbr]
                X = np.stack([pi, h_ik, h_ki], axis=-1).reshape(m * E, 3)
                Z1 = X @ P[pf + "W1a"] + P[pf + "b1a"]
                A1 = np.maximum(Z1, 0.0)
                B1, c1 = _bn_forward(A1, P[pf + "g1a"], P[pf + "be1a"],
                                     self.state, pf, "1a", train)
                Z2 = B1 @ P[pf + "W1b"] + P[pf + "b1b"]
                A2 = np.maximum(Z2, 0.0)
                B2, c2 = _bn_forward(A2, P[pf + "g1b"], P[pf + "be1b"],
                                     self.state, pf, "1b", train)
                B2v = B2.reshape(m, K, K - 1, h)
                y = B2v.max(axis=2)
                arg = B2v.argmax(axis=2)
            else:
                # empty neighborhood: aggregated message is the zero vector
                X = Z1 = A1 = B1 = Z2 = A2 = c1 = c2 = arg = None
                y = np.zeros((m, 1, h))
            U = np.concatenate([y, weights[..., None], diag[..., None]],
                               axis=-1).reshape(m * K, h + 2)
            Z3 = U @ P[pf + "W2a"] + P[pf + "b2a"]
            A3 = np.maximum(Z3, 0.0)
            B3, c3 = _bn_forward(A3, P[pf + "g2a"], P[pf + "be2a"],
                                 self.state, pf, "2a", train)
            Z4 = (B3 @ P[pf + "W2b"] + P[pf + "b2b"]).reshape(m, K)
            pnew = _sigmoid(Z4)
            caches.append((X, Z1, A1, B1, c1, Z2, A2, c2, arg, U, Z3, c3, B3, pnew))
            p = pnew
        return p, caches

    def backward_batch(self, mags, caches, dP, train=False):
        """Gradients of sum(dP * P) w.r.t. every parameter."""
        m, K, _ = mags.shape
        h = self.hidden
        nbr, scatter = self._nbr(K)
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        for j in range(self.layers - 1, -1, -1):
            pf = f"l{j}."
            P = self.params
            X, Z1, A1, B1, c1, Z2, A2, c2, arg, U, Z3, c3, B3, pnew = caches[j]
            dZ4 = (dP * pnew * (1.0 - pnew)).reshape(m * K, 1)
            grads[pf + "W2b"] += B3.T @ dZ4
            grads[pf + "b2b"] += dZ4.sum(axis=0)
            dB3 = dZ4 @ P[pf + "W2b"].T
            dA3, dg, dbe = _bn_backward(dB3, P[pf + "g2a"], c3, train)
            grads[pf + "g2a"] += dg
            grads[pf + "be2a"] += dbe
            dZ3 = dA3 * (Z3 > 0)
            grads[pf + "W2a"] += U.T @ dZ3
            grads[pf + "b2a"] += dZ3.sum(axis=0)
            if K == 1:
                dP = np.zeros((m, K))
                continue
            E = K * (K - 1)
            dU = dZ3 @ P[pf + "W2a"].T
            dy = dU[:, :h].reshape(m, K, h)
            # MAX routes gradient to the first-attained argmax neighbor
            dB2 = np.zeros((m, K, K - 1, h))
            np.put_along_axis(dB2, arg[:, :, None, :], dy[:, :, None, :], axis=2)
            dB2 = dB2.reshape(m * E, h)
            dA2, dg, dbe = _bn_backward(dB2, P[pf + "g1b"], c2, train)
            grads[pf + "g1b"] += dg
            grads[pf + "be1b"] += dbe
            dZ2 = dA2 * (Z2 > 0)
            grads[pf + "W1b"] += B1.T @ dZ2
            grads[pf + "b1b"] += dZ2.sum(axis=0)
            dB1 = dZ2 @ P[pf + "W1b"].T
            dA1, dg, dbe = _bn_backward(dB1, P[pf + "g1a"], c1, train)
            grads[pf + "g1a"] += dg
            grads[pf + "be1a"] += dbe
            dZ1 = dA1 * (Z1 > 0)
            grads[pf + "W1a"] += X.T @ dZ1
            grads[pf + "b1a"] += dZ1.sum(axis=0)
            dX = dZ1 @ P[pf + "W1a"].T
            dP = dX[:, 0].reshape(m, E) @ scatter
        return grads


# ---------------------------------------------------------------------------
# PowerMlp

class PowerMlp:
    """Flat baseline: (|H| row-major, w) -> K powers through two
    Linear -> ReLU -> BatchNorm blocks and a sigmoid output layer."""

    kind = "power-mlp"

    def __init__(self, params, state, dims):
        self.params = params
        self.state = state
        self.dims = tuple(dims)    # (d_in, h1, h2, ..., K)

    @classmethod
    def create(cls, dims, seed):
        rng = stream(seed, DOMAIN_INIT, 2)
        params, state = {}, {}
        for l in range(len(dims) - 1):
            params[f"W{l}"] = _he(rng, dims[l], (dims[l], dims[l + 1]))
            params[f"b{l}"] = np.zeros(dims[l + 1])
            if l < len(dims) - 2:
                params[f"g{l}"] = np.ones(dims[l + 1])
                params[f"be{l}"] = np.zeros(dims[l + 1])
                state[f"mu{l}"] = np.zeros(dims[l + 1])
                state[f"va{l}"] = np.ones(dims[l + 1])
        return cls(params, state, dims)

    @property
    def hidden(self):
        return self.dims[1]

    def n_params(self):
        return sum(v.size for v in self.params.values())

    def forward_batch(self, X, train=False):
        L = len(self.dims) - 1
        acts, caches = [X], []
        for l in range(L):
            Z = acts[-1] @ self.params[f"W{l}"] + self.params[f"b{l}"]
            if l < L - 1:
                A = np.maximum(Z, 0.0)
                B, c = _bn_forward(A, self.params[f"g{l}"], self.params[f"be{l}"],
                                   self.state, "", f"{l}", train)
                caches.append((Z, c))
                acts.append(B)
            else:
                acts.append(_sigmoid(Z))
        return acts[-1], (acts, caches)

    def backward_batch(self, cache, dP, train=False):
        acts, caches = cache
        L = len(self.dims) - 1
        grads = {}
        P = acts[-1]
        delta = dP * P * (1.0 - P)
        for l in range(L - 1, -1, -1):
            grads[f"W{l}"] = acts[l].T @ delta
            grads[f"b{l}"] = delta.sum(axis=0)
            if l > 0:
                dB = delta @ self.params[f"W{l}"].T
                Z, c = caches[l - 1]
                dA, dg, dbe = _bn_backward(dB, self.params[f"g{l-1}"], c, train)
                grads[f"g{l-1}"] = dg
                grads[f"be{l-1}"] = dbe
                delta = dA * (Z > 0)
        return grads


# ---------------------------------------------------------------------------
# functional API

def init_net(arch, dims, width, seed, layers=2):
    """Construct a network.

    arch 'two-layer': dims = input dimension, width = r (Gaussian N(0,1)
    first layer, frozen +-1 signs, 1/sqrt(r) output scale).
    arch 'wcgcn': width = hidden size; dims is ignored (weight tying makes
    the net K-independent).
    arch 'power-mlp': dims = (d_in, K); width = hidden size or tuple.
    """
    widths = (width,) if np.isscalar(width) else tuple(width)
    if not widths or any(w < 1 for w in widths):
        raise ValueError("width must be >= 1")
    if arch == "two-layer":
        rng = stream(seed, DOMAIN_INIT, 0)
        W = rng.standard_normal((width, dims))
        a = rng.choice([-1.0, 1.0], size=width)
        return TwoLayerNet(W, a)
    if arch == "wcgcn":
        return WcgcnNet.create(width, layers, seed)
    if arch == "power-mlp":
        d_in, K = dims
        hs = (width, width) if np.isscalar(width) else tuple(width)
        return PowerMlp.create((d_in, *hs, K), seed)
    raise ValueError(f"unknown architecture {arch!r}")


def forward_mlp(net, x):
    """Scalar output of a TwoLayerNet on one flat sample or node set."""
    out = net.forward(np.asarray(x, dtype=float))
    return float(out[0]) if out.shape == (1,) else out


def forward_wcgcn(net, inst):
    """Power allocation for one instance (evaluation mode)."""
    mags = np.abs(inst.H)[None]
    p, _ = net.forward_batch(mags, inst.w[None], train=False)
    return PowerAllocation(p[0])


def sum_rate_loss_grad(mags, sigma2s, weights, P):
    """Mean negative weighted sum rate over the batch and its gradient in P."""
    m, K, _ = mags.shape
    G = mags ** 2
    signal = np.einsum("mkk,mk->mk", G, P)
    denom = np.einsum("mki,mi->mk", G, P) - signal + sigma2s
    s = signal / denom
    rates = np.einsum("mk,mk->m", weights, np.log2(1.0 + s))
    loss = -float(rates.mean())
    coef = weights / (np.log(2.0) * (1.0 + s))          # (m, K)
    gkk = np.einsum("mkk->mk", G)
    own = coef * gkk / denom
    w2 = coef * signal / denom ** 2
    cross = np.einsum("mk,mki->mi", w2, G) - w2 * gkk
    dP = -(own - cross) / m
    return loss, dP


def _batch_features(net, batch):
    if isinstance(net, TwoLayerNet):
        X = batch.flat_features if batch.flat_features.shape[1] == net.d \
            else batch.node_features
        if X.shape[-1] != net.d:
            raise ValueError("dataset features do not match net input dimension")
        return X
    if isinstance(net, PowerMlp):
        if batch.flat_features.shape[1] != net.dims[0]:
            raise ValueError("dataset features do not match net input dimension")
        return batch.flat_features
    return None


def sample_chunks(batch, chunk):
    """Consecutive sample slices of a dataset, each at most ``chunk`` wide."""
    for lo in range(0, batch.m, chunk):
        yield batch.subset(np.arange(lo, min(lo + chunk, batch.m)))


def loss_value(net, batch, loss_spec, train=False, chunk=None):
    """Loss of a net on a batch (Dataset).  'squared' is the summed
    0.5 * ||u - y||^2 of the NTK analysis; 'negative-sum-rate' is the mean
    negative weighted sum rate.

    ``chunk`` bounds how many samples are materialized at once (the graph
    net's layer activations grow with batch * K^2, so full-dataset passes at
    K=20 would otherwise exhaust memory).  Chunked evaluation is only defined
    in evaluation mode: batch statistics need the whole batch.
    """
    if batch.m == 0:
        raise ValueError("batch must be nonempty")
    if chunk is not None and batch.m > chunk:
        if train:
            raise ValueError("chunked evaluation requires train=False")
        total = 0.0
        for sub in sample_chunks(batch, chunk):
            part = loss_value(net, sub, loss_spec, train=False)
            if loss_spec == "negative-sum-rate":
                part *= sub.m / batch.m
            total += part
        return total
    if loss_spec == "squared":
        if isinstance(net, TwoLayerNet):
            u = net.forward(_batch_features(net, batch))
        else:
            u, _ = _power_forward(net, batch, train)
        y = batch.labels
        if y is None:
            raise ValueError("squared loss requires labels")
        return 0.5 * float(np.sum((u - y) ** 2))
    if loss_spec == "negative-sum-rate":
        P, _ = _power_forward(net, batch, train)
        loss, _ = sum_rate_loss_grad(batch.mags, batch.sigma2s, batch.weights, P)
        return loss
    raise ValueError(f"unknown loss {loss_spec!r}")


def _power_forward(net, batch, train):
    if isinstance(net, WcgcnNet):
        return net.forward_batch(batch.mags, batch.weights, train=train)
    if isinstance(net, PowerMlp):
        return net.forward_batch(_batch_features(net, batch), train=train)
    raise ValueError(f"{type(net).__name__} does not produce power vectors")


def _check_finite_per_sample(values, what):
    bad = ~np.isfinite(np.atleast_1d(values))
    if bad.any():
        idx = int(np.argwhere(bad)[0][0])
        raise NumericFailureError(f"non-finite {what} at sample {idx}", sample_index=idx)


def gradients(net, batch, loss_spec, train=False, chunk=None):
    """Exact parameter gradients of the batch loss.  Returns (grads, loss).

    ``chunk`` splits the pass over sample slices exactly as in
    :func:`loss_value`; gradients of the mean (or summed) loss accumulate
    across slices with the matching weights.
    """
    if batch.m == 0:
        raise ValueError("batch must be nonempty")
    if chunk is not None and batch.m > chunk:
        if train:
            raise ValueError("chunked evaluation requires train=False")
        acc = None
        total = 0.0
        for sub in sample_chunks(batch, chunk):
            g, part = gradients(net, sub, loss_spec, train=False)
            w = sub.m / batch.m if loss_spec == "negative-sum-rate" else 1.0
            total += part * w
            if acc is None:
                acc = {key: w * val for key, val in g.items()}
            else:
                for key, val in g.items():
                    acc[key] += w * val
        return acc, total
    if loss_spec == "squared":
        y = batch.labels
        if y is None:
            raise ValueError("squared loss requires labels")
        if isinstance(net, TwoLayerNet):
            X = _batch_features(net, batch)
            u = net.forward(X)
            _check_finite_per_sample(u, "output")
            resid = u - y
            return {"W": net.grad_W(X, resid)}, 0.5 * float(np.sum(resid ** 2))
        P, cache = _power_forward(net, batch, train)
        _check_finite_per_sample(P.sum(axis=1), "output")
        resid = P - y
        grads = _power_backward(net, batch, cache, resid, train)
        return grads, 0.5 * float(np.sum(resid ** 2))
    if loss_spec == "negative-sum-rate":
        P, cache = _power_forward(net, batch, train)
        per_rate = sum_rate_batch(batch.mags, batch.sigma2s, batch.weights, P)
        _check_finite_per_sample(per_rate, "sum rate")
        loss, dP = sum_rate_loss_grad(batch.mags, batch.sigma2s, batch.weights, P)
        grads = _power_backward(net, batch, cache, dP, train)
        return grads, loss
    raise ValueError(f"unknown loss {loss_spec!r}")


def _power_backward(net, batch, cache, dP, train):
    if isinstance(net, WcgcnNet):
        return net.backward_batch(batch.mags, cache, dP, train=train)
    return net.backward_batch(cache, dP, train=train)


def output_jacobians(net, X):
    """Explicit per-output parameter Jacobian (outputs x n_params), used by
    the generic empirical-kernel path.  Multi-output nets are flattened over
    (sample, output); evaluation-mode statistics are used so the net is a
    deterministic per-sample function."""
    if isinstance(net, TwoLayerNet):
        X = np.asarray(X, dtype=float)
        rows = []
        for i in range(X.shape[0]):
            g = net.grad_W(X[i][None], np.ones(1))
            rows.append(g.reshape(-1))
        return np.asarray(rows)
    if isinstance(net, WcgcnNet):
        mags = np.asarray(X, dtype=float)
        m, K, _ = mags.shape
        weights = np.ones((m, K))
        P, cache = net.forward_batch(mags, weights, train=False)
        keys = sorted(net.params)
        rows = []
        for i in range(m):
            for k in range(K):
                dP = np.zeros((m, K))
                dP[i, k] = 1.0
                g = net.backward_batch(mags, cache, dP, train=False)
                rows.append(np.concatenate([g[key].reshape(-1) for key in keys]))
        return np.asarray(rows)
    raise ValueError(f"no Jacobian path for {type(net).__name__}")
