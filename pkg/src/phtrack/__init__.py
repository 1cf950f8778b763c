"""Position-only, saturated passivity-based trajectory tracking for port-Hamiltonian arms."""

from .controller import (ControllerState, ControlOutput, SaturatedGains, UnsaturatedGains, control,
                         control_saturated, control_unsaturated, controller_rhs, controller_rhs_saturated,
                         controller_rhs_unsaturated, desired_momentum, feedforward, gain_profile,
                         saturation_budget)
from .mech import (PERA_TORQUE_LIMITS, MechModel, ModelError, PeraParams, PhState, fd_gradient, hamiltonian,
                   open_loop_rhs, pera_model)
from .plvcc import (FactorizationError, PlvccFrame, factorize, gyroscopic_matrix, gyroscopic_matrix_desired,
                    lie_bracket, transform_momentum, transformed_rhs, untransform_momentum)
from .simulation import (Metrics, SimConfig, SimTrace, dissipation_check, lyapunov_quadratic, lyapunov_saturated,
                         metrics, simulate, simulate_open_loop, step, write_trace_csv)
from .trajectory import TrajectorySample, approach_blend, circle_trajectory, constant_setpoint

__version__ = "0.1.0"
