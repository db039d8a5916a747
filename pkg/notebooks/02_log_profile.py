# %% [markdown]
# # Potential of a static point
# The potential of Lebesgue measure on a fixed point equals
# `E1(r^2 / 4 tau) / 4 pi`. Near the point it grows like `log(1/r) / 2 pi`
# with a constant offset, so the normalized ratio approaches 1 slowly.

# %%
import numpy as np
from scipy.special import exp1

from mcflab.kernel import (HeatKernelModel, MeasureSamples, SingularCurve,
                           backward_v, singular_potential_U)

plane = HeatKernelModel("plane")
curve = SingularCurve.static([0.0, 0.0], -5, 5)
nu = MeasureSamples.lebesgue(-5, 5)

# %%
for r in (1e-1, 1e-3, 1e-6, 1e-12):
    U = singular_potential_U(plane, curve, nu, [r, 0.0], 1.0, 0.0)
    print("r = %.0e  U = %.6f  exact = %.6f  ratio = %.4f"
          % (r, U, exp1(r * r / 4) / (4 * np.pi), U * 2 * np.pi / np.log(1 / r)))

# %% [markdown]
# Rescaling the potential gives a backward solution with the two-sided log
# bound on the validation annulus.

# %%
bv = backward_v(plane, curve, (0.0, 1.0), 0.75)
print("scale %.4f, lower margin %.4f" % (bv.scale, bv.lower_margin))
