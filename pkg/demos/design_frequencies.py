"""
Driving frequencies for the four BB84 phases
============================================

A pulse that crosses an acousto-optic modulator twice, separated by a
fiber delay, picks up a phase proportional to the drive frequency. This
script turns the four target phases into drive frequencies.
"""

import math

from sagnac_qkd.cli import design_table
from sagnac_qkd.optics import ModulatorConfig, phase_shift

# %%
# The default modulator: effective index 1.468, 700 m of delay, one AOM.
mod = ModulatorConfig()
print(f"phase slope: {mod.radians_per_hertz:.6e} rad/Hz")
print(f"one full cycle every {mod.hertz_per_cycle:.2f} Hz")

# %%
# Frequency plan. Drivers are set in 1 Hz steps, so each phase carries a
# small residual error.
for row in design_table(mod):
    print(f"{row['phase_rad'] / math.pi:4.1f} pi  ->  {row['quantized_hz']:.0f} Hz"
          f"  (residual {row['residual_phase_rad']:+.2e} rad)")

# %%
# With an up-shifting and a down-shifting AOM the phase per hertz doubles,
# so every frequency step halves.
paired = ModulatorConfig(paired_aoms=True)
steps = [r["frequency_hz"] - design_table(paired)[0]["frequency_hz"] for r in design_table(paired)]
print("paired steps (Hz):", [round(s, 2) for s in steps])

# %%
# The phase is periodic in frequency, so the plan repeats every cycle.
f = mod.base_frequency + mod.hertz_per_cycle
print("phase one cycle above f0:", phase_shift(f, mod) - phase_shift(mod.base_frequency, mod))
