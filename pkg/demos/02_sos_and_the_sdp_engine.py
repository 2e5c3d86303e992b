"""Sum-of-squares certificates through the embedded interior-point solver.

A polynomial is certified nonnegative on a box by writing it as
z(x)' Q z(x) plus multiplier-weighted box terms with Q >= 0.  The compiler
emits coefficient-matching equalities and PSD blocks; the solver eliminates
the equalities structurally and runs a Nesterov-Todd predictor-corrector.
"""

import numpy as np

from certnet.poly import Polynomial
from certnet.sdp import psd_check, solve
from certnet.sos import (
    ParamPoly,
    ProblemBuilder,
    SetSpec,
    box_to_polys,
    recover_witness,
    scalar_sos,
)

x = Polynomial.variable(1, 0)

# x^4 - 2 x^2 + 2 = (x^2 - 1)^2 + 1 is a global SOS
p = x * x * x * x - 2.0 * (x * x) + 2.0
builder = ProblemBuilder()
frag = scalar_sos(builder, ParamPoly.from_poly(p), [])
sol = solve(builder.build())
wit = recover_witness(sol.y, frag)
print("x^4 - 2x^2 + 2:", sol.status)
print("Gram matrix on basis {1, x, x^2}:\n", np.round(wit.Q, 6))
print("coefficient residual:", wit.residual, " lambda_min:", wit.lambda_min)

# -x^2 is not: the solver reports an infeasibility certificate
builder = ProblemBuilder()
scalar_sos(builder, ParamPoly.from_poly(-(x * x)), [])
print("\n-x^2:", solve(builder.build()).status)

# x >= 0 certified on [0, 1] only, via the S-procedure with g = x(1 - x)
g = box_to_polys(SetSpec.box("state", [0.0], [1.0]))[0]
builder = ProblemBuilder()
frag = scalar_sos(builder, ParamPoly.from_poly(x), g, mult_deg=0)
sol = solve(builder.build())
print("\nx on [0,1]:", sol.status)
print("multiplier value:", frag.multipliers[0].value(sol.y, 1))

# the PSD checker itself
ok, lmin = psd_check(np.array([[2.0, -1.0], [-1.0, 2.0]]))
print("\npsd_check([[2,-1],[-1,2]]):", ok, "lambda_min =", lmin)
