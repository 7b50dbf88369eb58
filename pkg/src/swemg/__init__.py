"""Steady-state shallow water solver.

Well-balanced finite volumes with hydrostatic reconstruction and dry
areas, a residual-regularized Newton outer iteration, and a geometric
multigrid inner solver smoothed by block symmetric Gauss-Seidel, plus
the spectral analysis behind the convergence studies.
"""

from .analysis import (RateFit, SpectralReport, build_iteration_matrix,
                       error_norms, exact_subcritical_1d,
                       exact_transcritical_1d, fit_rate_law,
                       lake_at_rest_exact, spectrum)
from .assembly import (BlockSparseMatrix, ResidualVector, assemble_residual,
                       assemble_regularized_system, jacobian_block_fd, matvec)
from .driver import (ConvergenceHistory, SolveResult, SolverConfig,
                     blusgs_nonlinear_step, initialize_cascade, newton_mg_step,
                     run_blusgs_baseline, run_newton_mg, write_solution)
from .mesh import (ChannelSpec, MeshHierarchy, MeshLevel, build_channel_2d,
                   build_hierarchy, build_uniform_1d, coarsen)
from .multigrid import (CycleConfig, LinearLevel, block_sgs_sweep,
                        build_linear_levels, galerkin_coarsen, mg_cycle,
                        prolongate_correct, restrict_residual, solve_coarsest)
from .physics import (BoundarySpec, ReconstructedPair, flux_hll, flux_hllc,
                      flux_llf, flux_roe, ghost_state, hydrostatic_reconstruct,
                      interface_source, physical_flux_normal,
                      total_interface_flux)
from .problems import ProblemSpec, catalog, cosine_throat, load_custom

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
