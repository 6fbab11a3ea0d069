"""Smoke test for the `sil` extension module.

Build and install first:  maturin develop -m crates/py/Cargo.toml
"""

import math

import sil


def main():
    assert sil.primes(30) == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert sil.factor(12, 1) == [(12, [(2, 2), (3, 1)])]

    mu = sil.MultFn("moebius")
    assert mu.name == "moebius"
    assert mu.value(7, 1) == -1 and mu.value(7, 2) == 0
    assert [round(v.real) for v in mu.values(2, 5)] == [-1, -1, 0, -1, 1]

    nit = sil.MultFn("nit(5)")
    res = sil.pretend(nit, 10**4)
    assert abs(res["t_star"] - 5) < 1e-3, res
    assert res["m_value"] < 1e-3

    p = sil.DirPoly.dyadic(mu, 1000)
    assert (p.lo, p.hi) == (1001, 2000)
    ms = p.mean_square(0.0, 100.0)
    assert 0.5 < ms / (200 * p.weighted_l2(0.0)) < 1.5

    chk = sil.sieve_check(sil.MultFn("two_squares"), 10**5)
    assert chk["violations"] == 0 and chk["sums"]["s1_le_b1"]

    k = sil.NumberField("x^2+5")
    rows = {n: (d, g) for n, d, g in k.indicators(2, 20)}
    assert rows[6] == (True, True) and rows[3] == (True, False)

    sys_ = sil.interval_system(10**5, pairs=[(2, 10), (10, 100), (100, 1000)])
    assert 0 < sys_["density"]["in_s"] < 1

    g = sil.gaps("two_squares", 10**4, [1.0, 1.25])
    assert all(r > 0 for r in g["ratios"].values())

    s = sil.scan(mu, 10**5, 100)
    assert len(s["rows"]) > 0

    b = sil.bound("grkoma", {"X": [1e4, 2e4, 4e4]})
    assert b["checks"]["le_10"]

    r = sil.run_config('experiment = "gaps"\nfunction = "two_squares"\nX = 10000\n')
    assert math.isclose(r["ratios"]["1"], r["moment_sums"]["1"] / r["normalizers"]["1"])

    print("smoke ok")


if __name__ == "__main__":
    main()
