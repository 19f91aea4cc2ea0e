"""uqkit: surrogate-based Monte Carlo uncertainty propagation.

Pipeline: sample inputs and run the full-order model to build a training
set; reduce the high-dimensional outputs to a low-dimensional latent
coordinate (PCA or kernel PCA); fit cheap response surfaces from inputs to
the latent coordinate (separated response surface, ordinary kriging, or a
quadratic polynomial); then propagate large Monte Carlo samples through
surrogate + backward map and compare the resulting distributions with
KL-divergence machinery.
"""

__version__ = "0.1.0"

from ._backend import BACKEND as kernel_backend  # noqa: F401
from .dataset import (InputDistribution, TrainingSet,  # noqa: F401
                      assemble_training_set, derive_seed, qoi_average,
                      sample_inputs)
from .dimred import (KpcaModel, PcaModel, energy_fraction,  # noqa: F401
                     fit_kpca, fit_pca, gaussian_kernel)
from .errors import ConfigError, NumericalError, UqkitError  # noqa: F401
from .surrogates import (OkModel, PrsModel, SrsModel, fit_ok,  # noqa: F401
                         fit_prs, fit_srs, quadrature_weights,
                         spherical_variogram)
from .synthetic import SyntheticModelSpec, synthetic_crash  # noqa: F401
from .uq import (ConvergenceReport, Histogram, StatsSummary,  # noqa: F401
                 build_histogram, converge_sampling, kl_divergence,
                 kl_reference, mc_propagate, screen_inputs, spearman,
                 summary_stats)
