"""Search saturated gains that respect the motor limits.

Each candidate gets an a priori torque budget: the sup of the feedforward,
plus the sup of gravity over a joint box, plus alpha. A candidate is
feasible when the budget fits under the motor limits on every axis. The
feasible ones are ranked by their settled tracking error.

Over the full joint range the gravity sup on axis 2 is about 1.57 N m,
so alpha_2 = 1.7 already exceeds the 3.32 N m limit. Restricting gravity
to the box the arm actually visits makes the reference gains feasible.

    python3 demos/03_gain_sweep.py
"""

from phtrack.config import parse_sweep, preset_data
from phtrack.sweep import run_sweep, write_leaderboard

base = preset_data("pera-sim")
base["sim"]["t_end"] = 12.0
base["t_settle"] = 8.0

spec = {
    "base": base,
    "grid": {"alpha": [[11.0, 1.7, 6.0], [9.0, 1.4, 5.0], [11.0, 3.2, 6.0]],
             "beta": [[40.0, 30.0, 30.0], [60.0, 45.0, 45.0]]},
}

print("global joint box:")
print(" ", run_sweep(parse_sweep(spec), seed=0).diagnosis())

spec["q_box"] = [[-0.2, 0.2], [-0.6, 0.6], [0.5, 2.2]]
result = run_sweep(parse_sweep(spec), seed=0)
print("\njoint box around the circle:")
for r in result.rows:
    print(f"  #{r['rank']}  alpha={r['alpha']}  beta={r['beta']}  feasible={r['feasible']}  "
          f"settled={r.get('settled_error', float('nan')):.2e}")
write_leaderboard(result, "leaderboard.csv")
print("\nwrote leaderboard.csv")
