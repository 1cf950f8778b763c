"""Is the reference an exact solution of the arm's dynamics?

The feedforward torque u_d is built so that, started from the reference's
own position and momentum, the open-loop arm follows q_d exactly. We check
that numerically, then remove the gyroscopic term from u_d and watch the
arm drift away.

Along the circle the first joint stays at zero, where the mass matrix does
not vary, so the gyroscopic term vanishes there. The fault only shows up
on a reference that moves the first joint, hence the blended approach from
an offset configuration.

    python3 demos/02_feasibility.py
"""

from phtrack.trajectory import approach_blend, circle_trajectory
from phtrack.verify import feasibility_residual

circle = circle_trajectory()
approach = approach_blend(circle, 5.0, [0.6, -0.3, 0.4])

print("open loop under u_d, sup |q - q_d| in rad")
print(f"  circle, one period, dt = 1e-3     : {feasibility_residual(circle, circle.T, 1e-3):.2e}")
print(f"  approach, 6 s, dt = 1e-3          : {feasibility_residual(approach, 6.0, 1e-3):.2e}")
print(f"  approach without gyroscopic term  : "
      f"{feasibility_residual(approach, 6.0, 1e-3, faults={'drop_gyro_ff'}):.2e}")
print(f"  circle without gyroscopic term    : "
      f"{feasibility_residual(circle, circle.T, 1e-3, faults={'drop_gyro_ff'}):.2e}")
