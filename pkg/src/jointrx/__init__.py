"""jointrx: link-level simulation of joint MIMO detection and LDPC
decoding via semidefinite relaxation, with baseline receivers and a
Monte Carlo BER/BLER harness."""

__version__ = "0.1.0"

from .ldpc import (LLR_MAX, FsConstraint, TannerGraph, check_parity,
                   code_dimension, encode, enumerate_even_subsets,
                   fs_constraints, generate_regular_code, info_positions,
                   parse_alist, spa_decode, uncoded_graph, write_alist)
from .mimo import (ComplexChannelBlock, FrameModel, RealChannelBlock,
                   complex_to_real, demap_qpsk, map_qpsk, mmse_detect,
                   noise_variance, simulate_frame)
from .sdp import (Coupling, SdpProblem, SdpSolution, SolveStatus,
                  extract_soft_bits, make_workspace, solve)
from .receivers import (DetectionResult, build_cost_matrix,
                        build_joint_problem, disjoint_sdr_detect, f_to_llr,
                        joint_sdr_detect, ml_bruteforce, round_block)
from .iterative import IterConfig, IterTrace, iterative_sdr
from .sim import SimConfig, SimSummary, run_trials, write_csv

__all__ = [
    "LLR_MAX", "FsConstraint", "TannerGraph", "check_parity",
    "code_dimension", "encode", "enumerate_even_subsets", "fs_constraints",
    "generate_regular_code", "info_positions", "parse_alist", "spa_decode",
    "uncoded_graph", "write_alist",
    "ComplexChannelBlock", "FrameModel", "RealChannelBlock",
    "complex_to_real", "demap_qpsk", "map_qpsk", "mmse_detect",
    "noise_variance", "simulate_frame",
    "Coupling", "SdpProblem", "SdpSolution", "SolveStatus",
    "extract_soft_bits", "make_workspace", "solve",
    "DetectionResult", "build_cost_matrix", "build_joint_problem",
    "disjoint_sdr_detect", "f_to_llr", "joint_sdr_detect", "ml_bruteforce",
    "round_block",
    "IterConfig", "IterTrace", "iterative_sdr",
    "SimConfig", "SimSummary", "run_trials", "write_csv",
]
