"""
Joint power and tilt for SINR
=============================

Max-SINR-PA-VAT on a 7-site deployment. Interference makes some sectors
worth more switched off than on, so the optimized powers split into
full-power, reduced-power and (effectively) inactive BSs.
"""

# %%
import numpy as np

from corridor_opt.objectives import ObjectiveKind, ObjectiveSpec
from corridor_opt.optimizer import OptimizerConfig, run_pa_vat
from corridor_opt.scenario import build_hex_deployment, build_sample_grid, case_study_regions

dep = build_hex_deployment(rings=1)
samples = build_sample_grid(case_study_regions(0.5), ground_step=50.0, corridor_step=20.0)
config = OptimizerConfig(eta0_theta=0.9, eta0_rho=0.9, eps1=1e-6, eps2=1e-6, eps3=1e-5, max_outer=300)


def progress(record):
    if record["outer"] % 10 == 0:
        print(f"outer {record['outer']:3d}: mean SINR {record['objective']:.4f} dB")


run = run_pa_vat(ObjectiveSpec(ObjectiveKind.SINR), samples, dep, config, callback=progress)
print(f"{run.termination} after {run.outer_iterations} outer iterations, mean SINR {run.objective:.3f} dB")

# %% Power structure of the result.
order = np.argsort(-run.powers)
for n in order:
    flag = "" if run.active[n] else "  (inactive)"
    print(f"BS {n + 1:2d}: tilt {run.tilts[n]:6.1f} deg, power {run.powers[n]:7.1f} dBm{flag}")
