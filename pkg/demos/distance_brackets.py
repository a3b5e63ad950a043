"""How tight are computable brackets on the Kobayashi distance?

On the unit ball the distance has a closed form, so every bound can be
checked.  The upper bound is the length of an optimised polyline under
the pinched metric |v| / delta(z; v); the lower bounds come from
supporting half-spaces, from the c-convex quarter metric and from the
factor-two pinch of convex domains.
"""
import numpy as np

from kobalab.domains import ellipsoid, unit_ball
from kobalab.metric import ball_oracle_distance, distance_bracket, oracle_distance

ball = unit_ball()
print("unit ball: bracket versus closed form")
print(f"{'p':>12} {'q':>12} {'lower':>9} {'oracle':>9} {'upper':>9}  method")
pairs = [([0, 0], [0.5, 0]), ([-0.5, 0], [0.5, 0]), ([0.9, 0], [0.9, 0.3j]), ([0.2, 0.7], [-0.6, 0.1j])]
for p, q in pairs:
    est = distance_bracket(ball, p, q)
    k = ball_oracle_distance(p, q)
    print(f"{str(p):>12} {str(q):>12} {est.lower:9.5f} {k:9.5f} {est.upper:9.5f}  {est.lower_method}")

# The path bound integrates |v| / delta(z; v), which is up to twice the
# metric, so it overshoots in every direction; the lower side is sharper.
p = np.array([0.95, 0])
for label, q in (("normal", [0.5, 0]), ("complex tangent", [0.95, 0.2])):
    est = distance_bracket(ball, p, q)
    print(f"{label:>16}: upper/oracle = {est.upper / ball_oracle_distance(p, q):.3f}")

# An ellipsoid is a linear image of the ball, which gives a second oracle.
E = ellipsoid((2.0, 1.0))
est = distance_bracket(E, [0, 0], [1.8, 0])
print(f"ellipsoid (2,1), 0 -> (1.8,0): [{est.lower:.5f}, {est.upper:.5f}], "
      f"oracle {oracle_distance(E, [0, 0], [1.8, 0]):.5f}")
