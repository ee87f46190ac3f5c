"""Figures from obstacle-lab report directories.

Renders the six standard figure kinds (phi, adjusted, monneau, decay,
convergence, boundary) from the CSV/JSON files a run or suite writes.
Strictly a consumer: every number drawn or annotated exists in an input
file; nothing is re-solved or re-integrated.
"""

__version__ = "0.1.0"
