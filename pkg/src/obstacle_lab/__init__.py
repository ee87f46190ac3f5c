"""Numerical laboratory for the variable-coefficient obstacle problem.

Solves div(A grad u) = f chi_{u>0} with u >= 0 by projected SOR on
divergence-form finite differences, and verifies quantitative free-boundary
theory at desk scale: Weiss and Monneau quasi-monotonicity, blow-up
classification into half-space and quadratic profiles, nondegeneracy, decay
of rescalings, and the epiperimetric inequality.
"""

__version__ = "0.1.0"
