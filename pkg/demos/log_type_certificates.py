"""Which domains are log-type convex?

Near the boundary the complex-line gap delta(z; v) must decay like
C / |log delta(z)|^(1 + nu).  For the ball it decays like sqrt(delta),
which is far faster.  For the flat models Re z1 > exp(-1/|z2|^alpha) the
axis family has gap |log delta|^(-1/alpha) exactly, so the fitted
exponent is 1/alpha and the inequality holds for nu up to 1/alpha - 1.
"""
from kobalab.domains import exp_model, unit_ball
from kobalab.experiments import certificate_experiment

levels = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)

rep = certificate_experiment(unit_ball(), levels, nu=1.0)
print(f"unit ball, nu=1: {rep.verdict}, C={rep.stats['C']:.3g}, samples={rep.stats['sample_count']}")

for alpha in (0.5, 1.0, 2.0):
    for nu in (0.5, 1.0):
        rep = certificate_experiment(exp_model(alpha), levels, nu=nu, anchor=[0, 0], samples=2)
        print(f"exp-model alpha={alpha}: nu={nu} {rep.verdict:4}  lambda_hat={rep.stats['lambda_hat']:.3f}"
              f"  (1/alpha = {1 / alpha:.3f})")

print("alpha=2 fits lambda_hat = 1/2 < 1 + nu, so it is not log-type convex for any nu > 0.")
