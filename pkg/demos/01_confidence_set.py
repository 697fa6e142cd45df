"""
Loss-based confidence sets in two dimensions
============================================

Collect logistic observations, fit the norm-constrained MLE, and look at the
set of parameters whose loss is within the radius of the minimum. The set
shrinks as data accumulates and keeps the true parameter inside.
"""
import numpy as np

from logitbandits.confidence import boundary_trace_2d, build_spec, polygon_contains, radius_logistic
from logitbandits.env import benchmark_instance, sample_reward, stream, uniform_ball
from logitbandits.history import LogisticHistory
from logitbandits.optim import grid_oracle_ucb, ucb_max

env = benchmark_instance(5)
arm_rng, reward_rng = stream(0, "arms"), stream(0, "rewards")
history = LogisticHistory(2)

for n in (0, 50, 500, 2000):
    while len(history) < n:
        x = uniform_ball(arm_rng, 1, 2)[0]
        history.append(x, sample_reward(env, x, reward_rng))
    spec = build_spec(history, env.S, radius_logistic(2, env.S, n + 1, 0.05))
    poly = boundary_trace_2d(spec, 256)
    # shoelace area of the traced boundary
    area = 0.5 * abs(np.dot(poly[:, 0], np.roll(poly[:, 1], -1)) - np.dot(poly[:, 1], np.roll(poly[:, 0], -1)))
    inside = polygon_contains(poly, env.theta_star)[0]
    print(f"n={n:5d}  radius^2={spec.radius_sq:7.2f}  center={np.round(spec.center, 3)}  "
          f"area={area:6.2f}  theta_star inside={inside}")

# optimistic value of one arm, checked against brute force on a grid
x = np.array([0.6, -0.3])
res = ucb_max(spec, x)
print(f"\nmax <x, theta> over the set: {res.value:.5f} (grid, 801 points per axis: "
      f"{grid_oracle_ucb(spec, x):.5f})")
