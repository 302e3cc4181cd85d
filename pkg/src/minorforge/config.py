"""Shared numerical defaults.

Every rank decision in the package reads ``RANK_TAU``; pass ``tau=`` to
override per call.
"""

RANK_TAU = 1e-10
RECONSTRUCT_TOL = 1e-8
GAP_TOL = 1e3
LM_LAMBDA0 = 1e-3
LM_MAX_ITER = 200
LM_STEP_TOL = 1e-12
