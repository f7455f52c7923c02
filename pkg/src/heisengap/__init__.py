"""Numerical verification of Dirichlet/Neumann eigenvalue comparisons for the
Heisenberg sub-Laplacian and planar magnetic (Landau) operators."""

__version__ = "0.1.0"

from .errors import (BudgetExceeded, DefectTooLarge, DimensionTooSmall,
                     DisconnectedDomain, EmptyDomain, FieldRangeError,
                     HeisengapError, IndexOutOfRange, LengthMismatch,
                     NoConvergence, NotEnoughTrials, SigmaMeanPositive,
                     TopologyMismatch, ZeroVector)
from .geometry import (GridDomain2D, GridDomain3D, boundary_quadrature,
                       extrude, load_domain, make_shape, save_domain)
from .special import (KernelValue, LandauParams, QuadRule, gauge, kernel,
                      kernel_product, laguerre, quad_grid)
from .averaging import (DeficitMap, TrialFunction, deficit_scan,
                        lemma_integrals, lemma_residual,
                        robin_boundary_average, select_trials)
from .operators import (FiberFamily, HermitianOperator, assemble_heisenberg,
                        assemble_landau2d, assemble_landau3d, fiber_reduce,
                        rayleigh, read_operator, write_operator)
from .eigen import (Spectrum, count_below, dense_spectrum, load_spectrum,
                    lowest, multiplicity_cluster)
from .harness import (ExperimentConfig, InequalityReport, emit_report,
                      replay_proof, richardson, run_fiber_check,
                      run_identity_suite, run_inequality_2d,
                      run_inequality_heisenberg, run_robin)
