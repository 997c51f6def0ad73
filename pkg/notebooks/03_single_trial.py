# One randomized trajectory with its diagnostics.

# %%
from lenscat.lab import ExperimentConfig, run_trial

config = ExperimentConfig(n=2, s=0.2, J=16, dt=1e-3)
out = run_trial(config, seed=7)
rec = out.record
print("valid:", rec["valid"], rec["reason"])
print("K:", rec["K"]["total"])
print("enEST passed:", rec["enest"]["passed"])
print("||r0+||_H1:", rec["r0_plus_norm_H1"])

# %%
# the series: tau, t, E(tau), energy, mass (E is blank where it is undefined)
for row in out.series[::8]:
    print(["-" if v is None else "%.4g" % v for v in row])

# %%
# the same thing straight from the library pieces
from lenscat.hermite import build_basis
from lenscat.sampler import RandomLaw, build_gamma, sample
from lenscat.evolution import EvolutionConfig, evolve
from lenscat.diagnostics import extract_scattering, energy_audit

gamma = build_gamma(build_basis(2, 16), 0.2, 0.05)
u0 = sample(gamma, RandomLaw(), 7).u0
traj = evolve(None, u0, EvolutionConfig(n=2, dt=1e-3, formulation="remainder_v"))
print("scattering state norm:", extract_scattering(traj).h1_norm)
print("energy audit:", energy_audit(traj).passed)
