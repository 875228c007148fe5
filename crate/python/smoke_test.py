#!/usr/bin/env python3
"""Smoke test for the emlab_py extension module.

Build the module first:

    cargo build --release -p emlab-py

then run this script from the repository root (or pass the target dir):

    python3 python/smoke_test.py [target-dir]
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path


def locate_library(target_dir: Path) -> Path:
    names = ["libemlab_py.so", "libemlab_py.dylib", "emlab_py.dll"]
    for profile in ("release", "debug"):
        for name in names:
            candidate = target_dir / profile / name
            if candidate.exists():
                return candidate
    raise SystemExit(
        f"no built extension under {target_dir}; run `cargo build --release -p emlab-py`"
    )


def import_module(lib: Path):
    staging = Path(tempfile.mkdtemp(prefix="emlab_py_"))
    shutil.copy(lib, staging / "emlab_py.so")
    sys.path.insert(0, str(staging))
    import emlab_py  # noqa: E402

    return emlab_py


def main() -> None:
    root = Path(__file__).resolve().parent.parent
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "target"
    em = import_module(locate_library(target))

    # characteristic cubic and its root triple
    assert em.eval_cubic(0.0, 2.0) == 4.0
    assert abs(em.eval_cubic(-1.0, 2.0) + 1.0) < 1e-12
    t = em.solve_characteristic(1.0)
    assert abs(t.sigma + 0.56984) < 1e-4
    assert abs(t.beta + 0.21508) < 1e-4
    assert abs(t.omega - 1.30714) < 1e-4
    assert t.residual() < 1e-14
    assert -(t.sigma + 1.0) / 2.0 == t.beta
    assert em.sigma_derivative(1.0) < 0.0

    # dissipation weight and the density nonlinearity
    assert abs(em.dissipation_weight(1.0) - 0.25) < 1e-15
    assert abs(em.dissipation_weight(3.0) - 0.09) < 1e-15
    assert em.phi_sigma(0.0, 5.0 / 3.0) == 0.0
    assert abs(em.phi_sigma(0.4, 2.0) - 0.4**2 / 4.0) < 1e-14

    # derivative-count helper, both branches
    assert em.decay_index(2.0, 2.0, 2.0) == 2
    assert em.decay_index(0.0, 1.0, 2.0) == 2
    assert em.decay_index(1.0, 1.0, math.inf) == 5

    # a compatible transverse mode: E along y, B along z, k along x
    k = (0.7, 0.0, 0.0)
    state = [0j, 0j, 0.2 + 0.1j, 0j, 0j, 0.5 - 0.3j, 0j, 0j, 0j, 1.0 + 0j]
    gauss, divb = em.compat_residual(k, state)
    assert gauss < 1e-15 and divb < 1e-15

    # t = 0 is the identity; the propagator matches the integrator later on
    out0 = em.propagate(0.0, k, state)
    assert max(abs(a - b) for a, b in zip(out0, state)) < 1e-10
    out = em.propagate(2.5, k, state)
    ref = em.integrate_linear(2.5, k, state, tol=1e-11)
    assert max(abs(a - b) for a, b in zip(out, ref)) < 1e-8

    # Lyapunov functional: zero state has zero energy, kappa = 0 is the base
    zero = [0j] * 10
    assert em.lyapunov_value(k, zero) == 0.0
    base = em.lyapunov_value(k, state, kappa=(0.0, 0.0, 0.0), gamma=1.0)
    expect = sum(abs(c) ** 2 for c in state)
    assert abs(base - expect) < 1e-12

    # slope fitting round trip on a synthetic power law
    times = [1.0 * 1.2**i for i in range(40)]
    norms = [2.0 * (1.0 + t) ** -0.75 for t in times]
    exponent, r2, is_super = em.fit_slope(times, norms, (5.0, 500.0))
    assert abs(exponent + 0.75) < 1e-3 and r2 > 0.999999 and not is_super

    print("emlab_py smoke test: OK")


if __name__ == "__main__":
    main()
