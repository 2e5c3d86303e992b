"""Polynomials, monomial dictionaries, and the state factorization.

Every object downstream (dictionaries, certificates, SOS constraints) is
built from sparse multivariate polynomials.  This walk-through builds the
degree-2 dictionary used by the Lorenz-family benchmarks and shows the
factorization M(x) = Upsilon(x) x that turns monomial dynamics into a
state-linear form.
"""

import numpy as np

from certnet.dictionary import build_dictionary, contains, factorize
from certnet.poly import Monomial, Polynomial, PolyMatrix

# -- polynomial arithmetic is exact on coefficients ------------------------
x1 = Polynomial.variable(2, 0)
x2 = Polynomial.variable(2, 1)
p = (x1 + x2) * (x1 - x2)
print("(x1 + x2)(x1 - x2) =", p)
print("evaluated at (3, 2):", p.eval(np.array([3.0, 2.0])))

# -- the degree-2 dictionary on three states --------------------------------
d = build_dictionary(3, 2)
print(f"\ndegree-2 dictionary on 3 states has {d.size} entries:")
print("  ", ", ".join(str(m) for m in d.monomials))

# it covers the true Lorenz monomials {x1, x2, x3, x1*x3, x1*x2}
lorenz_terms = [
    Monomial((1, 0, 0)), Monomial((0, 1, 0)), Monomial((0, 0, 1)),
    Monomial((1, 0, 1)), Monomial((1, 1, 0)),
]
print("covers the Lorenz terms:", contains(d, lorenz_terms))

# -- factorization: M(x) = Upsilon(x) x -------------------------------------
tr = factorize(d)
print(f"\nUpsilon(x) has shape {tr.upsilon.shape}; row k holds m_k / x_j in")
print("the column of the smallest variable dividing m_k.")
residual = tr.upsilon @ PolyMatrix.state_vector(3)
worst = max(
    (residual[k, 0] - Polynomial.from_monomial(m)).max_coeff_diff(
        Polynomial.zero(3)
    )
    for k, m in enumerate(d.monomials)
)
print("symbolic residual of Upsilon(x) x - M(x):", worst)
