"""Analytic test functions and their input distributions.

Functions take an ``(N, d)`` array of physical inputs (or one point) and
return an ``(N,)`` array (or a float).

``python3 -m gpsobol.functions NAME`` evaluates a built-in on CSV points read
from stdin and prints one value per line, the protocol of command functions.
"""
import sys

import numpy as np

from .design import InputDistribution
from .errors import InputError

ISHIGAMI_INDICES = (0.314, 0.442, 0.0)

ISHIGAMI = InputDistribution((-np.pi,) * 3, (np.pi,) * 3, ("x1", "x2", "x3"))

TANK = InputDistribution(
    (30.0, 1500.0, 300.0, 100.0, 63.0, 189.0, 200.0, 400.0),
    (50.0, 2500.0, 500.0, 300.0, 77.0, 231.0, 300.0, 800.0),
    ("P", "R_int", "T_shell", "T_cap", "E_shell", "E_cap", "sigma_y_shell", "sigma_y_cap"),
)

TANK_RHO = 0.92


def _points(x, d):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != d:
        raise InputError(f"expected {d} inputs per point, got {x.shape[1]}")
    return x, single


def _out(values, single):
    return float(values[0]) if single else values


def ishigami(x, a=7.0, b=0.1):
    """``sin x1 + a sin^2 x2 + b x3^4 sin x1`` on ``[-pi, pi]^3``."""
    x, single = _points(x, 3)
    s1 = np.sin(x[:, 0])
    return _out(s1 + a * np.sin(x[:, 1]) ** 2 + b * x[:, 2] ** 4 * s1, single)


def ishigami_indices(a=7.0, b=0.1):
    """Exact first-order indices of :func:`ishigami`."""
    v1 = 0.5 * (1 + b * np.pi**4 / 5) ** 2
    v2 = a * a / 8
    v13 = b * b * np.pi**8 * (1 / 18 - 1 / 50)
    total = v1 + v2 + v13
    return (v1 / total, v2 / total, 0.0)


def tank_cheap(x):
    """Thin-shell peak stress ``1.5 (R+T)^3 / ((R+T)^3 - R^3) * P`` (MPa).

    Only ``P``, ``R_int`` and ``T_shell`` (the first three inputs) enter.
    """
    x, single = _points(x, 8)
    P, R, T = x[:, 0], x[:, 1], x[:, 2]
    outer = (R + T) ** 3
    return _out(1.5 * outer / (outer - R**3) * P, single)


def tank_bias(x):
    """Smooth cap-driven discrepancy of the expensive stand-in (MPa).

    ``57.6 + 30 h + 10 h^2 + 8 (E_cap - 210) / 21`` with
    ``h = (200 - T_cap) / 100``: thinner or softer caps add stress.
    """
    x, single = _points(x, 8)
    h = (200.0 - x[:, 3]) / 100.0
    return _out(57.6 + 30.0 * h + 10.0 * h * h + 8.0 * (x[:, 5] - 210.0) / 21.0, single)


def tank_expensive_stub(x, rho=TANK_RHO, bias_scale=1.0):
    """Stand-in for the high-fidelity tank code: ``rho * tank_cheap + bias_scale * tank_bias``."""
    x, single = _points(x, 8)
    return _out(rho * tank_cheap(x) + bias_scale * tank_bias(x), single)


BUILTINS = {
    "ishigami": (ishigami, ISHIGAMI),
    "tank_cheap": (tank_cheap, TANK),
    "tank_expensive_stub": (tank_expensive_stub, TANK),
}


def builtin(name):
    """``(function, InputDistribution)`` for a built-in test function."""
    try:
        return BUILTINS[name]
    except KeyError:
        raise InputError(f"unknown builtin function {name!r}; expected one of {sorted(BUILTINS)}") from None


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print(f"usage: python3 -m gpsobol.functions {{{'|'.join(sorted(BUILTINS))}}}", file=sys.stderr)
        return 2
    try:
        f, dist = builtin(argv[0])
    except InputError as exc:
        print(exc, file=sys.stderr)
        return 2
    rows = [ln for ln in sys.stdin.read().splitlines() if ln.strip()]
    X = np.array([[float(v) for v in ln.split(",")] for ln in rows]).reshape(-1, dist.dim)
    sys.stdout.write("".join(repr(float(v)) + "\n" for v in f(X)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
