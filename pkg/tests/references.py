"""Reference eigenvalues shared by the convergence tests.

Oracle values come from ``tests/oracles/derive_references.py`` (uniform
square-cell refinement to 613k / 432k free DOFs, extrapolated) and are frozen
here.  Published values are kept separately for the comparisons that quote
them.
"""
import math

# oracle: uniform squares on the L-shape, res 10, seven levels up to N = 613120
L_SHAPE_LAMBDA1 = 5.9024189
# independent cross-check: 4x the first nonzero Neumann eigenvalue of the
# L-shape with unit legs (scaling of the tabulated 1.4756218241 value)
L_SHAPE_LAMBDA1_LITERATURE = 4 * 1.4756218241
# oracle: uniform squares on the H-shape, six levels up to N = 432416
H_SHAPE_LAMBDA3 = 1.2058514

# published reference values
L_SHAPE_PUBLISHED = 5.9017
H_SHAPE_PUBLISHED = 1.2040

SQUARE_LAMBDA1 = math.pi**2

# published first adaptive step on the L-shape (245 DOFs, triangles)
L_SHAPE_PUBLISHED_STEP0 = 5.6831
L_SHAPE_PUBLISHED_THETA_SQ = 9.4718e-03
L_SHAPE_PUBLISHED_JUMP_SQ = 1.3226e-01
L_SHAPE_PUBLISHED_ETA_SQ = 1.4174e-01
L_SHAPE_PUBLISHED_EFFECTIVITY = 1.5429
