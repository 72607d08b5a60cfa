"""Independent reference values frozen into the test suite.

Uses exact rationals and mpmath only; nothing from kaczmarz_approx is
imported.  Run with ``python tools/derive_oracles.py`` and paste the output
into the tests if a value ever needs to change.
"""
from fractions import Fraction

import mpmath

mpmath.mp.dps = 50


def hilbert_q(n):
    return [[Fraction(1, i + j + 1) for j in range(n)] for i in range(n)]


def frobenius_h2():
    H = hilbert_q(2)
    return mpmath.sqrt(mpmath.mpf(sum(v * v for row in H for v in row).numerator)
                       / sum(v * v for row in H for v in row).denominator)


def hilbert_singular_values(n):
    """Roots of the characteristic polynomial of H^T H = H^2, then square roots."""
    H = mpmath.matrix([[mpmath.mpf(v.numerator) / v.denominator for v in row] for row in hilbert_q(n)])
    G = H.T * H
    # Faddeev-LeVerrier: coefficients of det(t I - G)
    coeffs = [mpmath.mpf(1)]
    M = mpmath.zeros(n)
    for k in range(1, n + 1):
        M = G * M + coeffs[-1] * mpmath.eye(n)
        GM = G * M
        c = -sum(GM[i, i] for i in range(n)) / k
        coeffs.append(c)
    roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=200)
    return sorted((mpmath.sqrt(mpmath.re(r)) for r in roots), reverse=True)


def hilbert3_row_probabilities():
    H = hilbert_q(3)
    w = [sum(v * v for v in row) for row in H]
    total = sum(w)
    return [x / total for x in w]


def hilbert_ones_residual(n):
    """||H_n 1||: row i of H_n 1 is H_{i+n} - H_i (harmonic numbers)."""
    s = mpmath.mpf(0)
    for i in range(n):
        r = mpmath.harmonic(i + n) - mpmath.harmonic(i)
        s += r * r
    return mpmath.sqrt(s)


def theorem1_example():
    # ||A|| = 1, ||A||_F^2 = 2, eps = 0.1
    return mpmath.ceil(2 * mpmath.log(10) * 2 / mpmath.mpf("0.01"))


if __name__ == "__main__":
    print("frobenius(H_2) =", mpmath.nstr(frobenius_h2(), 20))
    print("sigma(H_3) =", [mpmath.nstr(s, 20) for s in hilbert_singular_values(3)])
    print("sigma(H_4) =", [mpmath.nstr(s, 20) for s in hilbert_singular_values(4)])
    print("p(H_3 rows) =", hilbert3_row_probabilities())
    print("||H_1000 1|| =", mpmath.nstr(hilbert_ones_residual(1000), 20))
    print("theorem1 example k =", theorem1_example())
