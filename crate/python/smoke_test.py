"""Smoke test for the coagrecon Python bindings.

Build and install first:
    pip install --no-build-isolation -e crates/python
"""

import math
import os
import sys
import tempfile

import coagrecon


def check(cond, msg):
    if not cond:
        sys.exit(f"FAIL: {msg}")
    print(f"ok: {msg}")


def main():
    basis = coagrecon.Basis(20)
    gram = basis.gram()
    dev = max(abs(gram[i][j] - (i == j)) for i in range(basis.size) for j in range(basis.size))
    check(dev < 1e-10, f"Gram matrix is the identity ({dev:.1e})")
    check(abs(basis.stiffness(0, 1) - 4 * math.sqrt(3)) < 1e-10, "s01 = 4 sqrt(3)")

    series = [basis.psi(3, t) for t in basis.t]
    coeffs = basis.project(series)
    check(max(abs(c - (m == 3)) for m, c in enumerate(coeffs)) < 1e-4, "Psi_3 projects to e_3")

    data = coagrecon.generate_data(test=2, noise=0.05, seed=1)
    check(len(data) == 301 and all(x == 0.0 for x in data.phi0), "boundary data has 301 nodes and phi0 = 0")

    rec = coagrecon.reconstruct(data, test=2)
    print(rec)
    check(len(rec.consec_errors) == 9, "nine Picard steps")
    check(rec.empirical_rho < 1.0, "consecutive errors contract")
    check(rec.rel_l2 is not None and math.isfinite(rec.rel_l2), "relative L2 error reported")

    zero = coagrecon.reconstruct(coagrecon.BoundaryData.zeros())
    check(all(x == 0.0 for x in zero.f0_rec) and zero.rel_l2 is None, "zero data gives zero density")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "bd.csv")
        data.write_csv(path)
        back = coagrecon.BoundaryData.read_csv(path)
        check(back.phiL == data.phiL and back.psiL == data.psiL, "CSV round trip is exact")

    phi = coagrecon.phi_of_n(coagrecon.generate_data(test=1), [15, 20, 30])
    check(phi[1] <= 0.02, f"phi(20) = {phi[1]:.2e}")
    check(coagrecon.carleman_min_ratio(4.0) > 0.0, "Carleman ratio positive at lambda 4")

    try:
        coagrecon.generate_data(bogus=1)
    except ValueError as e:
        check("bogus" in str(e), "unknown setting raises ValueError")
    else:
        sys.exit("FAIL: unknown setting accepted")

    try:
        coagrecon.reconstruct(data, **{"lambda": 400})
    except ArithmeticError:
        check(True, "overflowing Carleman weight raises ArithmeticError")
    else:
        sys.exit("FAIL: lambda=400 did not fail")

    print("smoke test passed")


if __name__ == "__main__":
    main()
