#!/usr/bin/env python3
"""High-precision oracle for the quartic toy partition function.

A(z) = (2*pi)^(-1/2) * Integral e^{-z x^4 - x^2/2} dx over the real line.

Prints reference values used as frozen regression constants in the C++
tests, plus the exact small-order series coefficients a_m = (-1)^m (4m-1)!!/m!
computed in integer arithmetic as a cross-check of the C++ derivation.
"""
import mpmath as mp
from fractions import Fraction

mp.mp.dps = 40


def toy(z):
    f = lambda x: mp.exp(-z * x**4 - x**2 / 2)
    v = mp.quad(f, [-mp.inf, 0, mp.inf])
    return v / mp.sqrt(2 * mp.pi)


def double_factorial(n):
    r = 1
    while n > 1:
        r *= n
        n -= 2
    return r


def factorial(n):
    r = 1
    for i in range(2, n + 1):
        r *= i
    return r


if __name__ == "__main__":
    for z in ["0.02", "0.05", "0.1", "0.2", "0.5", "1.0"]:
        print(f"A({z}) = {mp.nstr(toy(mp.mpf(z)), 22)}")
    print()
    for m in range(0, 11):
        a = Fraction((-1) ** m * double_factorial(4 * m - 1), factorial(m))
        print(f"a_{m} = {a.numerator}/{a.denominator} = {float(a):.17g}")
