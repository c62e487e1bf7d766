"""Evolutionary dynamics in a four-strategy game whose unique correlated
equilibrium is eliminated: games, LP probes of the CE polytope, dynamics,
integrators and trajectory analysis."""

from .analysis import (
    basin_fraction,
    bnn_lyapunov_derivative,
    characteristic_matrix,
    conservation_check,
    elimination_status,
    hofbauer_certificate,
    improvement_check,
    lyapunov_values,
    switching_gaps,
    vertex_inequality_check,
)
from .dynamics import DynamicsSpec, FCatalog, best_responses, excess_payoffs, field, growth_rates
from .equilibria import ce_mass_bounds, ce_polytope, nash_report, strategies_used_in_ce
from .game import (
    ExtendedGame,
    Game,
    build_g0,
    build_rps4,
    extend_with_mixed,
    induce_distribution,
    induce_strategy,
    perturb,
)
from .integrate import BRTrajectory, Trajectory, integrate_br, integrate_smooth
from .lp import LinearProgram, LPStatus, solve

__version__ = "0.1.0"
