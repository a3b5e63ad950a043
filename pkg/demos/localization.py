"""Cutting a domain by a window near a boundary point.

Intersecting the ball with a window U = B_0.9((1,0)) can only increase
distances.  Near (1,0) the increase stays bounded: the gap between the
windowed and the full distance has no upward trend as pairs approach the
boundary.  Without the Nikolov estimate on the smaller window V the path
upper bound alone is too loose to see this.
"""
from kobalab.domains import ball_window, unit_ball
from kobalab.experiments import localization_distance_experiment

U, V = ball_window([1, 0], 0.9), ball_window([1, 0], 0.45)
for nikolov in (True, False):
    rep = localization_distance_experiment(unit_ball(), U, V, pairs=40, use_nikolov=nikolov)
    s = rep.stats
    print(f"nikolov={nikolov!s:5}: {rep.verdict:4} gap slope {s['slope']:+.3f} +- {s['slope_se']:.3f}, "
          f"K_hat {s['K_hat']:.3f}, monotone on {100 * s['monotone_fraction']:.0f}% of consistent pairs")
