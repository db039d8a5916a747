"""Heat kernels, singular potentials along curves and log-profile functionals."""

from .curves import LipschitzError, MeasureSamples, SingularCurve
from .cutoffs import Cutoffs, cutoffs, smooth_step, step_primitive
from .functionals import (CachedField, DominationResult, LogProfile,
                          RecoveryResult, ResolutionError, SandwichViolation,
                          annulus_integrals, domination_check, i_functional,
                          measure_recovery, richardson_log)
from .models import (HeatKernelModel, ParametrixDomainError, TruncationError,
                     parametrix_eval, spectral_kernel, sphere_u0, sphere_u1)
from .potential import (BackwardV, QuadratureError, SandwichError, backward_v,
                        singular_potential_U)

__all__ = [
    "BackwardV", "CachedField", "Cutoffs", "DominationResult", "HeatKernelModel",
    "LipschitzError", "LogProfile", "MeasureSamples", "ParametrixDomainError",
    "QuadratureError", "RecoveryResult", "ResolutionError", "SandwichError",
    "SandwichViolation", "SingularCurve", "TruncationError", "annulus_integrals",
    "backward_v", "cutoffs", "domination_check", "i_functional",
    "measure_recovery", "parametrix_eval", "richardson_log",
    "singular_potential_U", "smooth_step", "spectral_kernel", "sphere_u0",
    "sphere_u1", "step_primitive",
]
