"""
The special functions behind the closed forms
=============================================

``erfi(x) = -i erf(ix)`` grows like ``exp(x^2)``; it is evaluated with its
Maclaurin series for moderate arguments and an asymptotic expansion beyond.
``2F2(1, 1; 3/2, 2; z)`` is summed term by term with a relative stopping rule.
"""
import math

from dealermodel.core import NumericalError
from dealermodel.specfun import SeriesTolerance, erf, erfi, hyp2f2_1_1_32_2

for x in (0.5, 1.0, 3.0, 6.0, 10.0, 20.0):
    print(f"erfi({x:5}) = {erfi(x):.15e}")

print("erf(1) + erfc(1) - 1 =", erf(1.0) + math.erfc(1.0) - 1.0)

for z in (-10.0, -1.0, -0.25, 0.0, 0.5, 5.0):
    print(f"2F2(1,1;3/2,2;{z:6}) = {hyp2f2_1_1_32_2(z):.15f}")

# A tighter tolerance only adds a few terms.
print("2F2(-1) with rel_tol 1e-15:", hyp2f2_1_1_32_2(-1.0, SeriesTolerance(rel_tol=1e-15)))

# For large negative z the alternating terms cancel; rather than return a
# sum with no correct digits the series refuses.  Likewise erfi overflows.
for bad in (lambda: hyp2f2_1_1_32_2(-60.0), lambda: erfi(28.0)):
    try:
        bad()
    except (NumericalError, OverflowError) as exc:
        print(type(exc).__name__ + ":", exc)
