"""Interior-point solver for the SDPs and SOCPs used by the optimizers."""

from .cones import ConeDims
from .linalg import ContractViolation, check_hermitian, hermitian_eig, rank_eps
from .sdp import (
    SdpConstraint,
    SdpProblem,
    SdpSolution,
    constraint_values,
    embed_hermitian,
    primal_violation,
    read_sdpa,
    solve_sdp,
    write_sdpa,
)
from .socp import (
    ComplexSoc,
    PowerGroup,
    PowerMarginResult,
    SocpFeasibilityProblem,
    compile_socs,
    solve_power_margin,
    solve_socp_feasibility,
)
from .solver import ConeSolution, Status, Tolerances, solve_conic

__all__ = [
    "ComplexSoc", "PowerGroup", "PowerMarginResult", "SocpFeasibilityProblem", "ConeDims", "ConeSolution", "ContractViolation", "SdpConstraint", "SdpProblem",
    "SdpSolution", "Status", "Tolerances", "check_hermitian", "compile_socs", "constraint_values",
    "embed_hermitian", "hermitian_eig", "primal_violation", "rank_eps", "read_sdpa",
    "solve_conic", "solve_power_margin", "solve_sdp", "solve_socp_feasibility", "write_sdpa",
]
