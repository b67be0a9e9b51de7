"""Every reconstruction algorithm on one simulated scene.

Simulates a 16x16 holographic instance in the working photon regime,
initializes with the spectral estimate plus a Poisson warm start, and runs
the whole solver zoo, reporting NRMSE/SSIM after sign correction.
"""

import numpy as np

from hpr.gradients import StepPolicy
from hpr.harness import build_instance, default_epsilon, initialize
from hpr.metrics import nrmse, ssim
from hpr.priors import BuiltinDenoiser, GmmScoreProvider, make_geometric_schedule
from hpr.solvers import (
    SolverConfig,
    admm_intensity_split,
    awfs,
    dolph,
    make_ddpm_schedule,
    phase_correct,
    pnp_admm,
    pnp_pgm,
    red_sd,
    spectral_init,
    wf,
    wfsd,
)

inst = build_instance(n=16, alpha=0.02, sigma=1.0, image="gmm-texture", seed=0)
print(f"instance: n=16, alpha=0.02, sigma=1.0, mean counts "
      f"{np.mean(inst.op.intensity(inst.x_true) + inst.meas.b_bar):.1f}")

x_spec = spectral_init(inst.op, inst.meas)
x0 = initialize(inst)
print(f"spectral init NRMSE {nrmse(phase_correct(x_spec, inst.x_true), inst.x_true):.1f}%, "
      f"after Poisson warm start {nrmse(phase_correct(x0, inst.x_true), inst.x_true):.1f}%")

prov = GmmScoreProvider()
den = BuiltinDenoiser("gaussian", width=0.8)
sched = make_geometric_schedule(0.1, 0.005, 20, passes_per_level=5)
eps = default_epsilon(inst)
bt = StepPolicy(kind="backtracking")

runs = {}
runs["wf-gaussian"] = wf(inst.op, inst.meas,
                         SolverConfig(likelihood="gaussian", step=bt, max_iters=50), x0=x0)
runs["wf-poisson"] = wf(inst.op, inst.meas,
                        SolverConfig(likelihood="poisson", step=bt, max_iters=50), x0=x0)
runs["wf-pg"] = wf(inst.op, inst.meas,
                   SolverConfig(likelihood="pg", step=bt, max_iters=50), x0=x0)
score_cfg = SolverConfig(likelihood="pg", schedule=sched, epsilon=eps)
runs["wfsd"] = wfsd(inst.op, inst.meas, score_cfg, prov, x0=x0)
runs["awfs"] = awfs(inst.op, inst.meas, score_cfg, prov, x0=x0)
pnp_cfg = SolverConfig(likelihood="pg", step=bt, rho=5.0, inner_t=2, outer_k=15, beta=0.3)
runs["pnp-admm"] = pnp_admm(inst.op, inst.meas, pnp_cfg, den, x0=x0, strength=0.5)
runs["pnp-pgm"] = pnp_pgm(inst.op, inst.meas, pnp_cfg, den, x0=x0, strength=0.5)
runs["red-sd"] = red_sd(inst.op, inst.meas, pnp_cfg, den, x0=x0, strength=0.5)
runs["admm-split"] = admm_intensity_split(inst.op, inst.meas, pnp_cfg, x0=x0)

mean_p, var_p = 0.5, 0.08
ddpm = make_ddpm_schedule()


def eps_model(x, t, sched_):
    ab = sched_.abar[t - 1]
    return np.sqrt(1 - ab) * (x - np.sqrt(ab) * mean_p) / (ab * var_p + 1 - ab)


runs["dolph"] = dolph(inst.op, inst.meas,
                      SolverConfig(likelihood="pg", step=bt, seed=1), eps_model, ddpm)

print(f"\n{'solver':<12} {'NRMSE %':>8} {'SSIM':>7} {'iters':>6} {'wall s':>7}")
for name, run in runs.items():
    x_hat = phase_correct(run.x, inst.x_true)
    print(f"{name:<12} {nrmse(x_hat, inst.x_true):8.2f} "
          f"{ssim(x_hat, inst.x_true):7.3f} {run.iterations:6d} {run.wall_s:7.2f}")
