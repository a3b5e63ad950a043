"""Do near-geodesics bend into the interior?

For points approaching two boundary points, the deepest point m of a
near-geodesic between them should stay away from the boundary.  On the
ball it does.  On the bidisc, two points of the same flat face are joined
by a geodesic that slides along the face, and m shrinks in proportion to
the sample depth.  The trial counts here are small; the scenario files
run 200 trials.
"""
from kobalab.domains import bidisc, unit_ball
from kobalab.experiments import visibility_experiment

for name, domain, xi, xi2 in (("ball", unit_ball(), [1, 0], [-1, 0]),
                              ("bidisc, same face", bidisc(), [1, 0.5], [1, -0.5])):
    rep = visibility_experiment(domain, xi, xi2, 0.3, trials=40, node_budget=500)
    s = rep.stats
    print(f"{name:>18}: {rep.verdict:5} log-log slope of m against delta {s['slope']:.2f}, "
          f"smallest m {s['m_min']:.2e}")
