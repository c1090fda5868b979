"""Regenerate the frozen oracle values in ``values.json``.

Every value here is computed without importing ``unroll``.  Energies are
area integrals of 2 H^2 over the flat region, with H the mean curvature of
the surface each preset wraps onto, evaluated in mpmath at 30 digits.  The
library instead integrates along the boundary, so agreement between the two
is a genuine two-route check.

Run from the repository root:  python3 tests/oracles/generate.py
"""
import json
import os

import mpmath as mp

mp.mp.dps = 30


def area_energy(H, x_range, y_range):
    """Energy 2 * integral of H^2 over a region given in iterated form."""
    return 2 * mp.quad(lambda x: mp.quad(lambda y: H(x, y) ** 2, y_range(x)), x_range)


def cylinder(L=2, W=1, R=mp.mpf("0.5")):
    return area_energy(lambda x, y: 1 / (2 * R), [0, L], lambda x: [0, W])


def cone(gamma=mp.pi / 6, rho0=1, rho1=2, theta=1):
    # a point at slant distance rho from the apex lies on a parallel circle of
    # radius rho sin(gamma), whose normal curvature is cot(gamma) / rho
    H = lambda rho: mp.cot(gamma) / (2 * rho)
    return 2 * mp.quad(lambda rho: mp.quad(lambda t: H(rho) ** 2 * rho, [0, theta]), [rho0, rho1])


def two_cylinder(a=1, b=1, R1=mp.mpf("0.5"), R2=mp.mpf("0.25")):
    left = area_energy(lambda x, y: 1 / (2 * R1), [0, a], lambda x: [0, a])
    right = area_energy(lambda x, y: 1 / (2 * R2), [a, a + b], lambda x: [0, b])
    return left + right


def stadium(r=mp.mpf("0.5"), s=1, R=1):
    half = lambda x: s / 2 + mp.sqrt(r ** 2 - x ** 2)
    return area_energy(lambda x, y: 1 / (2 * R), [-r, r], lambda x: [-half(x), half(x)])


def disk(rho=mp.mpf("0.5"), R=1):
    half = lambda x: mp.sqrt(rho ** 2 - x ** 2)
    return area_energy(lambda x, y: 1 / (2 * R), [-rho, rho], lambda x: [-half(x), half(x)])


def ramp(a=mp.mpf("0.5"), b=1, W=1, rate=1):
    # profile curvature rate * x on x > 0, zero on the flat part
    H = lambda x, y: rate * x / 2 if x > 0 else mp.mpf(0)
    return area_energy(H, [-a, 0, b], lambda x: [0, W])


def spring_optimum(L=2, W=1, spring=1, rest=1):
    """Stationary radius of L W / (2 R^2) + spring (R - rest)^2."""
    f = lambda R: -L * W / R ** 3 + 2 * spring * (R - rest)
    return mp.findroot(f, 1.4)


def main():
    values = {
        "energy": {
            "plane_identity": 0.0,
            "cylinder_wrap": float(cylinder()),
            "cone_sector": float(cone()),
            "two_cylinder": float(two_cylinder()),
            "stadium_roll": float(stadium()),
            "disk_roll": float(disk()),
            "ramp_roll": float(ramp()),
        },
        "cylinder_radius_optimum": float(spring_optimum()),
        "precision_digits": mp.mp.dps,
    }
    path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "values.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(values, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(values, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
