"""Gromov products at the boundary.

Sequences converging to one boundary point have Gromov products that blow
up, like (1/2) log(2 / delta) on the ball.  Sequences to different points
keep them bounded.  Holomorphic maps transport the products, which is how
boundary extension of maps is detected.
"""
import numpy as np

from kobalab.domains import unit_ball
from kobalab.experiments import BoundarySequenceSpec, extension_probe, four_point_check, same_point_blowup_probe

levels = tuple(10.0 ** -k for k in range(1, 7))
ball = unit_ball()
seq = BoundarySequenceSpec([1, 0], levels)

rep = same_point_blowup_probe(ball, seq, [0, 0])
for r in rep.records:
    print(f"delta {r['level']:.0e}: product >= {r['product'][0]:.4f}, (1/2)log(2/delta) = {r['reference']:.4f}")

rep = same_point_blowup_probe(ball, seq, [0, 0], seq2=BoundarySequenceSpec([-1, 0], levels))
print(f"antipodal anchors: largest product {rep.stats['max_upper']:.3g}")

rep = four_point_check(ball, tuples=200)
print(f"four-point condition on 200 tuples: delta_hat = {rep.stats['delta_hat']:.4f} (log 3 = {np.log(3):.4f})")

seqs = [seq, BoundarySequenceSpec([1, 0], levels, tilt=30.0), BoundarySequenceSpec([0, 1], levels)]
rep = extension_probe("ball-to-ellipsoid", [1, 0], seqs)
for key, c in rep.stats["clusters"].items():
    anchor = [float(x) for x in c["anchor"]]
    diams = " ".join(f"{d:.1e}" for d in c["diameters"])
    print(f"{len(c['members'])} sequence(s) to {anchor}: image diameters {diams}")
