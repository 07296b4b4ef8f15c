"""Measurement-altered criticality in blockaded Rydberg chains.

Set ``RYDCRIT_THREADS`` before import to cap BLAS/OpenMP threads.
"""
import os as _os

_threads = _os.environ.get("RYDCRIT_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .basis import (HARD, OPEN, PENALTY, PERIODIC, BlockadedBasis, CapacityError,  # noqa: E402
                    ChainGeometry, ConstraintError, enumerate_basis, expected_dimension)
from .hamiltonian import (HamiltonianParams, build_hamiltonian, build_mpo,  # noqa: E402
                          critical_preset)
from .solvers import (ConvergenceError, DegenerateGroundStateError, DenseState,  # noqa: E402
                      SolverError, ground_state, ground_state_dense, ground_state_lanczos,
                      load_state, mps_to_dense, save_state)
from .mps import MatrixProductOperator, MatrixProductState  # noqa: E402
from .dmrg import DmrgConfig, DmrgResult, dmrg_ground_state  # noqa: E402
from .measurement import (OutcomeSector, PatternError, ZeroProbabilityError,  # noqa: E402
                          classify_sector, conditional_probabilities, enumerate_sector_probabilities,
                          expand_pattern, generalized_measure, parse_pattern, project,
                          sector_from_sites, sector_probability, weak_measure)
from .observables import (CorrelatorSeries, DiagonalObservable, bond_observables,  # noqa: E402
                          build_epsilon_n, build_epsilon_z2, build_sigma_n, connected_correlator,
                          expectation, half_chain_entropy, one_point_profile)
from .scaling import (CrossingError, FitError, FitResult, chord_distance,  # noqa: E402
                      find_curve_crossing, fit_obc_derivative, fit_obc_sine, fit_power_law,
                      fit_probability_decay, scan_detuning, sweep_theta, to_chord,
                      two_cell_average)
from .sampling import (ShotSet, estimate_connected, estimate_observable,  # noqa: E402
                       filter_sector, sample_shots)
