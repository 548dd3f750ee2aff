"""Delay-constrained linear transmission of composite Gaussian sources over fading channels."""

__version__ = "0.1.0"

from .model import (CompositeSource, ConfigError, DiscreteChannel, RayleighChannel, build_partition,
                    classify, reference_discrete_channel, reference_rayleigh_channel, reference_source, sample_step)
from .waterfill import (NumericalFailure, ergodic_capacity, mmse_gain, reverse_waterfill,
                        strict_delay_optimal)
from .parallel import ParallelProblem, evaluate_fixed_mapping, ordered_limit, solve_parallel
from .bounds import BoundCapWarning, BoundResult, llb, tlb
from .nocsi import CounterexampleSpec, PsiCurve, counterexample, no_csi_strict, tlb_no_csi
from .strategies import (BlockSimResult, BufferState, StrategyConfig, asymptotic_matched, calibrate_mu,
                         run_block, select_measurement)
from .sim import EstimatePoint, PointSpec, SweepSpec, compare_modes, run_point, run_sweep
from .kernels import BACKEND
