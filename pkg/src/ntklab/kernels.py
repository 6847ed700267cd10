"""Neural tangent kernels three ways: closed form, Monte Carlo, empirical.

All kernels correspond to the two-layer parameterization
f(x) = (1/sqrt(r)) * sum_r a_r * sigma(w_r . x), with w_r ~ N(0, I), signs
a_r in {-1, +1} fixed, and only the first layer trained.  The closed forms
are the infinite-width limits:

    relu:       H(x, z) = (x . z) * (pi - arccos(rho)) / (2 pi),
                rho = (x . z)/(|x||z|) clamped to [-1, 1]
    quadratic:  sigma(u) = u^2, so sigma'(u) = 2u and
                H(x, z) = (x . z) * 4 E[(w.x)(w.z)] = 4 (x . z)^2

The permutation-invariant (GNN) kernel is the same base network applied per
node with a sum readout, giving the pairwise sum over node pairs.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError
from .rng import DOMAIN_MC, stream

__all__ = [
    "KernelMatrix",
    "ArchSpec",
    "analytic_ntk_mlp",
    "analytic_ntk_gnn",
    "mc_ntk",
    "empirical_ntk",
    "mlp_kernel_function",
    "gnn_kernel_function",
    "save_kernel_csv",
    "load_kernel_csv",
    "save_kernel_ntk1",
    "load_kernel_ntk1",
]

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8


@dataclass(frozen=True)
class ArchSpec:
    """Which infinite-width architecture a kernel refers to."""

    family: str                 # 'flat-mlp' | 'perminv-gnn'
    activation: str = "relu"    # 'relu' | 'quadratic'
    input_dim: int = 0

    def __post_init__(self):
        if self.family not in ("flat-mlp", "perminv-gnn"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.activation not in ("relu", "quadratic"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.input_dim < 0:
            raise ValueError("input_dim must be positive")


@dataclass(frozen=True)
class KernelMatrix:
    """m x m symmetric PSD Gram matrix with provenance metadata."""

    entries: np.ndarray
    provenance: str             # analytic-mlp | analytic-gnn | monte-carlo | empirical
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        H = np.asarray(self.entries, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("kernel must be square")
        if not np.all(np.isfinite(H)):
            raise ValueError("kernel contains non-finite entries")
        asym = np.abs(H - H.T)
        scale = np.maximum(1.0, np.abs(H))
        if np.any(asym > SYMMETRY_TOL * scale):
            raise ValueError("kernel is not symmetric within tolerance")
        object.__setattr__(self, "entries", H)

    @property
    def m(self):
        return self.entries.shape[0]

    def check_psd(self):
        """Raise if lambda_min < -PSD_TOL * lambda_max."""
        vals = np.linalg.eigvalsh((self.entries + self.entries.T) / 2.0)
        lo, hi = vals[0], max(vals[-1], 0.0)
        if lo < -PSD_TOL * max(hi, 1e-300):
            raise ValueError(f"kernel is not PSD within tolerance: lambda_min={lo}")
        return self


def _check_samples(X):
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("samples contain non-finite entries")
    norms = np.linalg.norm(X, axis=-1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("zero sample vector: kernel angle undefined")
    return X, norms


def mlp_kernel_function(X, Z=None, activation="relu"):
    """Base-kernel values between two sample sets (plain ndarray)."""
    X, nx = _check_samples(np.atleast_2d(X))
    if Z is None:
        Z, nz = X, nx
    else:
        Z, nz = _check_samples(np.atleast_2d(Z))
    G = X @ Z.T
    if activation == "relu":
        rho = np.clip(G / np.outer(nx, nz), -1.0, 1.0)
        return G * (np.pi - np.arccos(rho)) / (2.0 * np.pi)
    if activation == "quadratic":
        return 4.0 * G ** 2
    raise ValueError(f"unknown activation {activation!r}")


def gnn_kernel_function(nodes_a, nodes_b=None, activation="relu"):
    """Pairwise-sum kernel between node-feature sets.

    Accepts (m, n, d) arrays or lists of (n_i, d) arrays (node counts may
    vary).  H[a, b] = sum over node pairs of the base kernel.
    """
    if nodes_b is None:
        nodes_b = nodes_a
    if isinstance(nodes_a, np.ndarray) and nodes_a.ndim == 3 \
            and isinstance(nodes_b, np.ndarray) and nodes_b.ndim == 3:
        ma, na, d = nodes_a.shape
        mb, nb, _ = nodes_b.shape
        flat_b = nodes_b.reshape(mb * nb, d)
        # slab over samples of A so the base-kernel intermediate stays small
        step = max(1, int(4e7 / max(na * mb * nb, 1)))
        out = np.empty((ma, mb))
        for lo in range(0, ma, step):
            hi = min(lo + step, ma)
            base = mlp_kernel_function(
                nodes_a[lo:hi].reshape((hi - lo) * na, d), flat_b, activation
            )
            out[lo:hi] = base.reshape(hi - lo, na, mb, nb).sum(axis=(1, 3))
        return out
    rows = []
    for ga in nodes_a:
        rows.append([mlp_kernel_function(ga, gb, activation).sum() for gb in nodes_b])
    return np.asarray(rows)


def analytic_ntk_mlp(X, activation="relu"):
    """Closed-form infinite-width kernel of the flat two-layer net."""
    H = mlp_kernel_function(X, None, activation)
    H = (H + H.T) / 2.0
    return KernelMatrix(H, "analytic-mlp", {"activation": activation})


def analytic_ntk_gnn(nodes, activation="relu"):
    """Closed-form kernel of the shared-per-node net with sum readout.

    Reduces entrywise to analytic_ntk_mlp when every graph has one node.
    """
    H = gnn_kernel_function(nodes, None, activation)
    H = (H + H.T) / 2.0
    return KernelMatrix(H, "analytic-gnn", {"activation": activation})


def _sigma_prime(Z, activation):
    if activation == "relu":
        return (Z > 0).astype(float)
    if activation == "quadratic":
        return 2.0 * Z
    raise ValueError(f"unknown activation {activation!r}")


def mc_ntk(arch, X, draws, width_per_draw, seed):
    """Monte-Carlo estimate of the NTK: average of per-draw Gram matrices
    over Gaussian first layers.  Unbiased for the analytic kernel; exactly
    symmetric PSD by construction; deterministic given seed (each draw has
    its own counter stream, so the draw schedule is irrelevant).
    """
    if draws < 1 or width_per_draw < 1:
        raise ValueError("draws and width_per_draw must be >= 1")
    X = np.asarray(X, dtype=float)
    flat = arch.family == "flat-mlp"
    if flat:
        Xv, _ = _check_samples(X)
        m, d = Xv.shape
        G = Xv @ Xv.T
    else:
        if X.ndim != 3:
            raise ValueError("perminv-gnn expects (m, n, d) node features")
        m, n, d = X.shape
        nodes = X.reshape(m * n, d)
    acc = np.zeros((m, m))
    for t in range(draws):
        W = stream(seed, DOMAIN_MC, t).standard_normal((width_per_draw, d))
        if flat:
            D = _sigma_prime(Xv @ W.T, arch.activation)        # (m, r)
            acc += G * (D @ D.T) / width_per_draw
        else:
            D = _sigma_prime(nodes @ W.T, arch.activation)     # (m*n, r)
            T = np.einsum("mnr,mnd->mrd",
                          D.reshape(m, n, width_per_draw),
                          X, optimize=True)
            acc += np.einsum("ird,jrd->ij", T, T, optimize=True) / width_per_draw
    H = acc / draws
    H = (H + H.T) / 2.0
    return KernelMatrix(
        H, "monte-carlo",
        {"draws": draws, "width_per_draw": width_per_draw, "family": arch.family,
         "activation": arch.activation, "seed": seed},
    )


def empirical_ntk(net, X):
    """Gram matrix of per-sample parameter gradients at the net's current
    parameters (the finite-width, time-t kernel).

    For a TwoLayerNet this uses the closed-form contraction over the first
    layer; flat (m, d) inputs give the plain kernel, (m, n, d) node sets the
    sum-readout kernel.  Other nets fall back to explicit per-output
    gradients (one backward pass per output), flattening multi-output nets
    over (sample, output).
    """
    from . import nets as _nets

    X = np.asarray(X, dtype=float) if isinstance(X, (np.ndarray, list)) else X
    if isinstance(net, _nets.TwoLayerNet):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            m, d = X.shape
            Xn = X
            G = X @ X.T
            D = _sigma_prime(Xn @ net.W.T, net.activation)
            H = G * (D @ D.T) / net.width
        elif X.ndim == 3:
            m, n, d = X.shape
            nodes = X.reshape(m * n, d)
            D = _sigma_prime(nodes @ net.W.T, net.activation).reshape(m, n, net.width)
            T = np.einsum("mnr,mnd->mrd", D, X, optimize=True)
            H = np.einsum("ird,jrd->ij", T, T, optimize=True) / net.width
        else:
            raise ValueError("TwoLayerNet expects (m, d) or (m, n, d) inputs")
        width = net.width
    else:
        J = _nets.output_jacobians(net, X)      # (outputs, params)
        H = J @ J.T
        width = getattr(net, "hidden", None)
    H = (H + H.T) / 2.0
    return KernelMatrix(H, "empirical", {"width": width, "net": type(net).__name__})


# ---------------------------------------------------------------------------
# persistence

def save_kernel_csv(kernel, path):
    """Text export: first line m, then m comma-separated rows of m values."""
    H = kernel.entries
    with open(path, "w") as fh:
        fh.write(f"{H.shape[0]}\n")
        for row in H:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_kernel_csv(path, provenance="analytic-mlp"):
    with open(path) as fh:
        m = int(fh.readline())
        H = np.loadtxt(fh, delimiter=",", ndmin=2)
    if H.shape != (m, m):
        raise ValueError(f"expected {m}x{m} kernel, got {H.shape}")
    return KernelMatrix(H, provenance, {"source": str(path)})


MAGIC = b"NTK1"


def save_kernel_ntk1(kernel, path):
    """Binary export: magic 'NTK1', little-endian u64 m, m*m little-endian
    f64 entries in row-major order."""
    H = np.ascontiguousarray(kernel.entries, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", H.shape[0]))
        fh.write(H.tobytes())


def load_kernel_ntk1(path, provenance="analytic-mlp"):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        (m,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(8 * m * m), dtype="<f8").reshape(m, m)
    return KernelMatrix(data.astype(float), provenance, {"source": str(path)})
