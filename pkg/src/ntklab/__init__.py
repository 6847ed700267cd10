"""ntklab: an executable comparison of permutation-invariant and flat
architectures on interference-channel power control, through the lens of
their neural tangent kernels.

Submodules:

* netsim   — channel instances, SINR/sum-rate, permutations, featurization
* wmmse    — the weighted-MMSE baseline power-control solver
* kernels  — analytic / Monte Carlo / empirical tangent kernels
* spectral — eigenanalysis, kernel gradient-flow dynamics, theorem bounds
* nets     — finite-width trainable networks with exact gradients
* training — seeded training loops, traces, evaluation, checkpoints
* experiments, config, cli — reproducible artifact generation
"""

from .errors import (DegenerateInputError, DivergenceError,
                     NumericFailureError, RangeViolationError,
                     SingularKernelError, UnsupportedConstantError)
from .netsim import (Dataset, FlatSample, GraphSample, NetworkInstance,
                     Permutation, PowerAllocation, apply_permutation,
                     featurize, gaussian_node_dataset, generate_instances,
                     sinr, synthetic_labels, weighted_sum_rate)
from .wmmse import wmmse, wmmse_batch
from .kernels import (ArchSpec, KernelMatrix, analytic_ntk_gnn,
                      analytic_ntk_mlp, empirical_ntk, load_kernel_csv,
                      load_kernel_ntk1, mc_ntk, save_kernel_csv,
                      save_kernel_ntk1)
from .spectral import (BoundReport, DynamicsResult, LandscapeTable,
                       SpectralReport, activation_constant,
                       condition_landscape, eig_sym, generalization_bound,
                       kernel_dynamics, thm2_rate_bound, thm3_bounds)
from .nets import (PowerMlp, TwoLayerNet, WcgcnNet, forward_mlp,
                   forward_wcgcn, gradients, init_net, loss_value,
                   output_jacobians)
from .training import (TrainConfig, TrainTrace, epochs_to_level,
                       epochs_to_threshold, evaluate, load_checkpoint,
                       progress_level, save_checkpoint, train,
                       write_trace_csv)

__version__ = "0.1.0"
