"""Tour of the holographic forward model.

Builds the measurement operator for a small sample-plus-reference scene,
checks its algebraic identities, and simulates photon counts at the
photon-scale factors used throughout the demos.
"""

import numpy as np

from hpr.harness import build_instance, operator_alpha, synth_image
from hpr.imageio import write_pgm
from hpr.model import make_operator, make_reference, simulate_measurements

rng = np.random.default_rng(0)
n = 16

print("== operator anatomy ==")
r = make_reference(n, rng)
op = make_operator(n, 1.0, 2, r)
print(f"sample {n}x{n}, oversample 2 -> padded plane {op.rows}x{op.cols}, M = {op.m}")
print(f"spectral norm {op.spec_norm:.6f} (isometry times alpha)")
print(f"infinity norm {op.inf_norm:.6f} = alpha*n^2/sqrt(P)")

x = synth_image("blobs", n, rng)
field = op.forward(x)
strip = np.concatenate([x, np.zeros((n, n)), r], axis=1)
print(f"Parseval: |field| = {np.linalg.norm(field):.6f}, |strip| = {np.linalg.norm(strip):.6f}")

f = rng.standard_normal(op.m) + 1j * rng.standard_normal(op.m)
lhs = np.vdot(op.apply_linear(x), f).real
rhs = np.vdot(x, op.adjoint(f)).real
print(f"adjoint identity: <Lx, f> = {lhs:.6f}, <x, L'f> = {rhs:.6f}")

print("\n== photon counting ==")
for alpha in (0.02, 0.035):
    inst = build_instance(n=n, alpha=alpha, sigma=1.0, image="blobs", seed=1)
    u = inst.op.intensity(inst.x_true) + inst.meas.b_bar
    print(f"alpha = {alpha}: operator alpha {operator_alpha(alpha):.2f}, "
          f"mean counts {u.mean():.1f}, peak {u.max():.0f}, "
          f"negative measurements {(inst.meas.y < 0).mean() * 100:.1f}%")

inst = build_instance(n=64, alpha=0.02, sigma=1.0, image="blobs", seed=1)
write_pgm("demo_truth.pgm", inst.x_true)
logspec = np.log1p(inst.op.intensity(inst.x_true).reshape(inst.op.rows, inst.op.cols))
write_pgm("demo_spectrum.pgm", logspec / logspec.max())
print("\nwrote demo_truth.pgm and demo_spectrum.pgm (log intensity)")
