"""Certification toolkit for switched Markov jump linear systems.

Builds and solves the path-dependent matrix inequality families that
characterize uniform exponential mean-square stability and uniform
mean-square strict contractiveness, and independently validates every
certificate with exact moment propagation, backward Riccati recursions,
and Monte Carlo simulation.
"""

__version__ = "0.1.0"

from .analysis import (
    DecayFit,
    GainEstimate,
    SecondMomentTable,
    Trajectory,
    adversarial_windows,
    brute_force_second_moment,
    decay_constants,
    estimate_decay,
    estimate_gain,
    exact_second_moment,
    forward_state_moments,
    simulate,
)
from .lmi import (
    AllInfeasible,
    Certificate,
    Feasible,
    GainResult,
    Infeasible,
    LmiProblem,
    PositivityError,
    SolverFailure,
    VerificationReport,
    build_brl_lmi,
    build_stability_lmi,
    certify,
    gain_bisection,
    load_certificate,
    save_certificate,
    solve_feasibility,
    verify_certificate,
)
from .model import (
    Finding,
    ModeMatrices,
    SystemDef,
    SystemFormatError,
    TransitionMatrixSet,
    ValidationReport,
    load_system,
    parse_system,
    serialize_system,
    validate_system,
)
from .operators import NotContractiveAtHorizon, blend, op_B, op_F, op_L, op_M, op_R, op_S, op_W
from .riccati import (
    DissipationReport,
    RiccatiSolution,
    StorageFamily,
    check_dissipation,
    finite_memory_storage,
    riccati_backward,
    shift_invariance_check,
    storage_family,
)
from .switching import (
    AllSequences,
    EventuallyPeriodic,
    Graph,
    SwitchingError,
    Word,
    WordSplit,
    enumerate_words,
    is_admissible,
    random_window,
    split_word,
)

__all__ = [name for name in dir() if not name.startswith("_")]
