"""Regenerates data/greek_tractors.csv.

The public greek_tractors series (log10 of tractors registered in Greece,
1961-2006) is not redistributed here. This script writes a stand-in with the
same design: 46 annual points whose nonlinear least-squares Logistic fit is
exactly f(t) = 3.605 + 1.844 / (1 + 1.398 exp(-0.104 t)), with smooth,
serially correlated departures from that curve and a residual variance of
0.0003 after removing the two linear coefficients.
"""

import numpy as np

CONSTANT, SCALE, PHI, RHO = 3.605, 1.844, 1.398, 0.104
SIGMA2 = 0.0003
N = 46


def main(path="greek_tractors.csv"):
    t = np.arange(N, dtype=float)
    e = np.exp(-RHO * t)
    g = 1.0 / (1.0 + PHI * e)
    f = CONSTANT + SCALE * g
    # Jacobian of f with respect to (constant, scale, phi, rho).
    d_phi = -SCALE * e / (1.0 + PHI * e) ** 2
    d_rho = SCALE * PHI * t * e / (1.0 + PHI * e) ** 2
    jac = np.column_stack([np.ones(N), g, d_phi, d_rho])

    rng = np.random.default_rng(1961)
    dev = np.cumsum(np.cumsum(rng.standard_normal(N)))
    # Remove the part the Logistic fit can absorb, so (CONSTANT, SCALE, PHI, RHO)
    # stays a stationary point of the least-squares criterion.
    q, _ = np.linalg.qr(jac)
    dev = dev - q @ (q.T @ dev)
    dev *= np.sqrt(SIGMA2 * (N - 2) / np.sum(dev**2))

    y = f + dev
    with open(path, "w") as out:
        out.write("group,replicate,time,value\n")
        for ti, yi in zip(t, y):
            out.write(f"greece,1,{int(ti)},{yi:.6f}\n")


if __name__ == "__main__":
    main()
