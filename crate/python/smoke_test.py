#!/usr/bin/env python3
"""End-to-end smoke test for the Python bindings.

Exercises the oracle, the sampler, every estimator family, CSV round
trips, and the Fock-space calibration. Exits nonzero on the first
failure. Run after `pip install -e crates/python --no-build-isolation`.
"""

import math
import sys

import stokesfit as sf

CHECKS = 0


def check(name, ok, detail=""):
    global CHECKS
    CHECKS += 1
    if not ok:
        print(f"FAIL  {name}  {detail}")
        sys.exit(1)
    print(f"ok    {name}")


def rel(got, want):
    return abs(got - want) / max(abs(want), 1.0)


def main():
    signal = sf.GaussianParams.from_eigen(237.0, 86.0, 0.7, 158.0, 0.2)
    reference = sf.ReferenceSpec.from_ner(1.0, 10.0, 1.0)

    check(
        "state parametrization",
        rel(signal.b, 237.0) < 1e-12
        and rel(signal.c, 86.0) < 1e-12
        and rel(signal.total_second_moment(), 88529.0) < 1e-12
        and signal.is_physical(),
    )

    # Analytic moments invert exactly through both estimator routes.
    ms = sf.moment_set(signal, reference)
    for est in (sf.estimate_general(ms, reference), sf.estimate_cosine_fit(ms, reference)):
        check(
            f"round trip ({est.feasibility})",
            est.feasibility == "full"
            and rel(est.b, 237.0) < 1e-9
            and rel(est.c, 86.0) < 1e-9
            and rel(est.alpha, 0.7) < 1e-9
            and rel(est.d, 158.0) < 1e-9
            and rel(est.beta, 0.2) < 1e-9
            and est.physical,
        )

    # Scalar oracles agree with the set.
    row = ms.row(0.0)
    check(
        "scalar oracles",
        row["mean_s2"] == sf.mean_s2(signal, reference, 0.0)
        and row["second_s2"] == sf.second_s2(signal, reference, 0.0)
        and ms.mean_s0 == sf.mean_s0(signal, reference),
    )

    # CSV round trip preserves every number bit for bit.
    back = sf.StokesMomentSet.from_csv(ms.to_csv())
    check(
        "csv round trip",
        back.mean_s0 == ms.mean_s0
        and back.second_s0 == ms.second_s0
        and all(back.row(p) == ms.row(p) for p in ms.angles),
    )

    # Sampling is reproducible and converges to the oracle.
    emp = sf.sample_moments(signal, reference, 200_000, seed=7)
    again = sf.sample_moments(signal, reference, 200_000, seed=7)
    check("sampler reproducibility", emp.to_csv() == again.to_csv())
    est = sf.estimate_general(emp, reference)
    pulls = [
        (est.b - 237.0) / est.se["b"],
        (est.c - 86.0) / est.se["c"],
        (est.alpha - 0.7) / est.se["alpha"],
        (est.d - 158.0) / est.se["d"],
        (est.beta - 0.2) / est.se["beta"],
    ]
    check(
        "sampled estimate within 4 standard errors",
        all(abs(z) < 4.0 for z in pulls),
        f"pulls = {[round(z, 2) for z in pulls]}",
    )

    # A thermal reference degrades to the exact energy.
    thermal = sf.ReferenceSpec.thermal(2.0)
    est = sf.estimate_general(sf.moment_set(signal, thermal), thermal)
    check(
        "thermal degradation",
        est.feasibility == "energy-only"
        and est.b is None
        and rel(est.energy, 88529.0) < 1e-9,
    )

    # Special-case estimators under a squeezed-only reference.
    squeezed_ref = sf.ReferenceSpec.from_ner(1.0, 10.0, 0.0)
    dark = sf.GaussianParams.from_eigen(237.0, 86.0, 0.7)
    est = sf.estimate_squeezed_signal(sf.moment_set(dark, squeezed_ref), squeezed_ref)
    check(
        "squeezed-only estimator",
        rel(est.b, 237.0) < 1e-9 and rel(est.c, 86.0) < 1e-9 and rel(est.alpha, 0.7) < 1e-9,
    )
    bright = sf.GaussianParams.from_eigen(86.0, 86.0, 0.0, 158.0, 0.2)
    est = sf.estimate_displaced_symmetric(sf.moment_set(bright, squeezed_ref), squeezed_ref)
    beta_err = abs(
        math.remainder(est.beta - 0.2, est.beta_period)
    )
    check(
        "displaced-symmetric estimator",
        rel(est.d, 158.0) < 1e-9 and beta_err < 1e-9,
    )

    # Magnitudes from the sum observable under a Gaussian assumption.
    est = sf.estimate_gaussian_s02(
        sf.moment_set(sf.GaussianParams.from_eigen(2.0, 1.2, 0.9), thermal),
        thermal,
        "squeezed",
    )
    check(
        "gaussian sum-observable magnitudes",
        rel(est.b, 2.0) < 1e-9 and rel(est.c, 1.2) < 1e-9 and est.alpha is None,
    )

    # The general path refuses a thermal reference's mean parameters only
    # through feasibility, but an unknown sampler mode is a hard error.
    try:
        sf.sample_moments(signal, reference, 100, mode="bogus")
        check("mode validation", False)
    except ValueError:
        check("mode validation", True)

    # Fock-space calibration reproduces the ordering constants.
    report = sf.calibrate_ordering(40)
    check(
        "ordering calibration",
        abs(report.kappa2 + 0.5) < 1e-6 and report.matches_verified(1e-6),
        f"kappa2 = {report.kappa2}, residual = {report.kappa2_residual:.2e}",
    )

    print(f"smoke test passed ({CHECKS} checks)")


if __name__ == "__main__":
    main()
