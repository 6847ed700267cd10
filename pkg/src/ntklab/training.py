"""Seeded training loops, traces, evaluation, and plain-text checkpoints.

The trainer owns the only mutable copy of a network; forward/gradient
evaluation never mutates parameters.  Traces record a row at epoch 0 (the
initialized network) and every ``eval_every`` epochs thereafter; recorded
losses and gradient norms are full-dataset quantities in evaluation mode, so
a trace is a deterministic function of (net init, datasets, config).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .netsim import sum_rate_batch
from .nets import (PowerMlp, TwoLayerNet, WcgcnNet, gradients, loss_value,
                   sample_chunks, _power_forward)
from .rng import DOMAIN_TRAIN, stream
from .wmmse import wmmse_batch

__all__ = [
    "TrainConfig",
    "TraceRow",
    "TrainTrace",
    "train",
    "evaluate",
    "epochs_to_threshold",
    "write_trace_csv",
    "read_trace_csv",
    "save_checkpoint",
    "load_checkpoint",
]

DIVERGENCE_LIMIT = 1e6

# Full-dataset passes (trace snapshots, final metrics) are evaluated this many
# samples at a time; the graph net's activations scale with batch * K^2 and a
# one-shot pass at K=20, m=20000 would need several GB.
SNAPSHOT_CHUNK = 256

LOSSES = ("squared", "negative-sum-rate")
OPTIMIZERS = ("gd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    epochs: int = 100
    loss: str = "negative-sum-rate"
    seed: int = 0
    eval_every: int = 1
    batch_size: int | None = None    # None = full batch

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.lr < 0 or not np.isfinite(self.lr):
            raise ValueError("lr must be finite and nonnegative")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    train_loss: float
    test_loss: float
    grad_norm: float


@dataclass
class TrainTrace:
    rows: list
    config: TrainConfig
    n_params: int
    final_metrics: dict = field(default_factory=dict)

    @property
    def final_train_loss(self):
        return self.rows[-1].train_loss

    @property
    def final_test_loss(self):
        return self.rows[-1].test_loss


class _Adam:
    """Standard adaptive-moment estimation (b1=0.9, b2=0.999, eps=1e-8)."""

    def __init__(self, lr):
        self.lr = lr
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + eps)


class _Gd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= self.lr * g


def _grad_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def train(net, train_ds, test_ds, cfg):
    """Train ``net`` in place; returns the TrainTrace.

    Losses recorded in the trace are full-dataset values in evaluation mode
    (batch-normalization running statistics, no updates), so rows are
    comparable across batch sizes.  Aborts with DivergenceError — carrying
    the partial trace — if any step loss exceeds 1e6 or goes non-finite.
    """
    if train_ds.m == 0 or test_ds.m == 0:
        raise ValueError("datasets must be nonempty")
    if cfg.loss == "squared" and train_ds.labels is None:
        raise ValueError("squared loss requires labels")
    opt = _Adam(cfg.lr) if cfg.optimizer == "adam" else _Gd(cfg.lr)
    rows = []
    n_params = int(sum(v.size for v in net.params.values()))
    trace = TrainTrace(rows=rows, config=cfg, n_params=n_params)

    def snapshot(epoch):
        g, train_loss = gradients(net, train_ds, cfg.loss, train=False,
                                  chunk=SNAPSHOT_CHUNK)
        test_loss = loss_value(net, test_ds, cfg.loss, train=False,
                               chunk=SNAPSHOT_CHUNK)
        rows.append(TraceRow(epoch, float(train_loss), float(test_loss),
                             _grad_norm(g)))
        if not (np.isfinite(train_loss) and np.isfinite(test_loss)):
            raise DivergenceError(f"non-finite loss at epoch {epoch}", trace=trace)

    snapshot(0)
    m = train_ds.m
    bs = cfg.batch_size or m
    for epoch in range(1, cfg.epochs + 1):
        if bs >= m:
            order = np.arange(m)
        else:
            order = stream(cfg.seed, DOMAIN_TRAIN, epoch).permutation(m)
        for start in range(0, m, bs):
            batch = train_ds.subset(order[start:start + bs])
            grads, batch_loss = gradients(net, batch, cfg.loss, train=True)
            if not np.isfinite(batch_loss) or batch_loss > DIVERGENCE_LIMIT:
                raise DivergenceError(
                    f"loss diverged at epoch {epoch} ({batch_loss:.3g})",
                    trace=trace)
            opt.step(net.params, grads)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            snapshot(epoch)
    return trace


def progress_level(trace, fraction=0.2):
    """The train-loss level at which a run has covered (1 - fraction) of its
    total decrease.

    For a positive loss decaying toward zero this is the classic "loss fell
    to ``fraction`` of its initial value" level; phrasing it in terms of the
    covered decrease keeps it meaningful for losses that start or end
    negative (the sum-rate objective).
    """
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must be in [0, 1]")
    rows = trace.rows if hasattr(trace, "rows") else list(trace)
    start = rows[0].train_loss
    best = min(r.train_loss for r in rows)
    return best + fraction * (start - best)


def epochs_to_level(trace, level):
    """First recorded epoch whose train loss is at or below ``level``; None
    if the run never gets there."""
    rows = trace.rows if hasattr(trace, "rows") else list(trace)
    for r in rows:
        if r.train_loss <= level:
            return r.epoch
    return None


def epochs_to_threshold(trace, fraction=0.2):
    """First recorded epoch at or below the run's own progress level; see
    progress_level.  Always defined (the best epoch qualifies)."""
    return epochs_to_level(trace, progress_level(trace, fraction))


def evaluate(net, test_ds, loss="negative-sum-rate", train_ds=None,
             activation="relu"):
    """Test-set metrics: mean loss, ratio-to-WMMSE (sum-rate tasks), and an
    excess-risk estimate vs the task oracle.

    The oracle is WMMSE for the sum-rate task and the exact kernel-regression
    predictor (analytic kernel over ``train_ds``) for the supervised task.
    Excess risk is the mean per-sample loss difference net - oracle; learned
    policies can beat the locally optimal WMMSE, so small negative values are
    legitimate.
    """
    if test_ds.m == 0:
        raise ValueError("test set must be nonempty")
    metrics = {}
    if loss == "negative-sum-rate":
        P = np.concatenate([_power_forward(net, sub, train=False)[0]
                            for sub in sample_chunks(test_ds, SNAPSHOT_CHUNK)])
        rates = sum_rate_batch(test_ds.mags, test_ds.sigma2s, test_ds.weights, P)
        p_star = wmmse_batch(test_ds.mags, test_ds.sigma2s, test_ds.weights)
        oracle_rates = sum_rate_batch(test_ds.mags, test_ds.sigma2s,
                                      test_ds.weights, p_star)
        metrics["mean_loss"] = -float(rates.mean())
        metrics["mean_sum_rate"] = float(rates.mean())
        metrics["oracle_sum_rate"] = float(oracle_rates.mean())
        metrics["ratio_to_wmmse"] = float(rates.mean() / oracle_rates.mean())
        metrics["e_gen"] = float(np.mean(-rates - (-oracle_rates)))
        return metrics
    if loss == "squared":
        if test_ds.labels is None:
            raise ValueError("squared loss requires labels")
        if isinstance(net, TwoLayerNet):
            X = test_ds.flat_features if test_ds.flat_features.shape[1] == net.d \
                else test_ds.node_features
            u = net.forward(X)
        else:
            u, _ = _power_forward(net, test_ds, train=False)
        err = np.asarray(u) - test_ds.labels
        metrics["mean_loss"] = float(np.mean(err ** 2))
        metrics["ratio_to_wmmse"] = None
        if train_ds is not None:
            from .kernels import gnn_kernel_function, mlp_kernel_function
            if test_ds.node_features.shape[1] == 1:
                Xtr = train_ds.flat_features
                Xte = test_ds.flat_features
                Ktr = mlp_kernel_function(Xtr, Xtr, activation)
                Kte = mlp_kernel_function(Xte, Xtr, activation)
            else:
                Xtr = train_ds.node_features
                Xte = test_ds.node_features
                Ktr = gnn_kernel_function(Xtr, Xtr, activation)
                Kte = gnn_kernel_function(Xte, Xtr, activation)
            coef = np.linalg.pinv(Ktr, rcond=1e-12) @ train_ds.labels
            oracle_err = Kte @ coef - test_ds.labels
            metrics["oracle_loss"] = float(np.mean(oracle_err ** 2))
            metrics["e_gen"] = float(np.mean(err ** 2 - oracle_err ** 2))
        return metrics
    raise ValueError(f"unknown loss {loss!r}")


# ---------------------------------------------------------------------------
# trace CSV

def write_trace_csv(trace, path):
    rows = trace.rows if hasattr(trace, "rows") else trace
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,test_loss,grad_norm\n")
        for r in rows:
            fh.write(f"{r.epoch},{r.train_loss:.17g},{r.test_loss:.17g},"
                     f"{r.grad_norm:.17g}\n")


def read_trace_csv(path):
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "epoch,train_loss,test_loss,grad_norm":
            raise ValueError(f"unrecognized trace header: {header!r}")
        for line in fh:
            e, tr, te, gn = line.strip().split(",")
            rows.append(TraceRow(int(e), float(tr), float(te), float(gn)))
    return rows


# ---------------------------------------------------------------------------
# checkpoints: sectioned text, one line per tensor (name, shape, 17-digit
# values)

def _write_tensor_line(fh, name, arr):
    shape = "x".join(str(s) for s in arr.shape) if arr.ndim else "scalar"
    values = " ".join(f"{v:.17g}" for v in np.asarray(arr, dtype=float).reshape(-1))
    fh.write(f"{name} {shape} {values}\n")


def _read_tensor_line(line):
    parts = line.split()
    name, shape = parts[0], parts[1]
    values = np.array([float(v) for v in parts[2:]])
    if shape != "scalar":
        values = values.reshape(tuple(int(s) for s in shape.split("x")))
    return name, values


def save_checkpoint(net, path):
    with open(path, "w") as fh:
        fh.write("[architecture]\n")
        fh.write(f"kind = {net.kind}\n")
        if isinstance(net, TwoLayerNet):
            fh.write(f"activation = {net.activation}\n")
            fh.write(f"width = {net.width}\n")
            fh.write(f"input_dim = {net.d}\n")
        elif isinstance(net, WcgcnNet):
            fh.write(f"hidden = {net.hidden}\n")
            fh.write(f"layers = {net.layers}\n")
        elif isinstance(net, PowerMlp):
            fh.write(f"dims = {','.join(str(d) for d in net.dims)}\n")
        else:
            raise ValueError(f"cannot checkpoint {type(net).__name__}")
        fh.write("[parameters]\n")
        for name in sorted(net.params):
            _write_tensor_line(fh, name, net.params[name])
        fh.write("[state]\n")
        if isinstance(net, TwoLayerNet):
            _write_tensor_line(fh, "a", net.a)
        else:
            for name in sorted(net.state):
                _write_tensor_line(fh, name, net.state[name])


def load_checkpoint(path):
    arch, params, state = {}, {}, {}
    section = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("["):
                section = line.strip("[]")
                continue
            if section == "architecture":
                key, _, value = line.partition("=")
                arch[key.strip()] = value.strip()
            elif section == "parameters":
                name, arr = _read_tensor_line(line)
                params[name] = arr
            elif section == "state":
                name, arr = _read_tensor_line(line)
                state[name] = arr
            else:
                raise ValueError(f"line outside any section: {line!r}")
    kind = arch.get("kind")
    if kind == "two-layer":
        net = TwoLayerNet(params["W"], state["a"], activation=arch["activation"])
        return net
    if kind == "wcgcn":
        return WcgcnNet(params, state, int(arch["hidden"]), int(arch["layers"]))
    if kind == "power-mlp":
        dims = tuple(int(d) for d in arch["dims"].split(","))
        return PowerMlp(params, state, dims)
    raise ValueError(f"unknown checkpoint kind {kind!r}")
