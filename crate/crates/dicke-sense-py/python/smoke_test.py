"""Smoke test of the Python bindings.

Uses an installed `dicke_sense_py` when available. Otherwise loads the shared
library built by `cargo build --release -p dicke-sense-py`.
"""

import importlib.util
import math
import os
import shutil
import sys
import tempfile


def load():
    try:
        import dicke_sense_py

        return dicke_sense_py
    except ImportError:
        pass
    root = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "..", ".."))
    for profile in ("release", "debug"):
        lib = os.path.join(root, "target", profile, "libdicke_sense_py.so")
        if os.path.exists(lib):
            break
    else:
        sys.exit("build the extension first: cargo build --release -p dicke-sense-py")
    tmp = tempfile.mkdtemp()
    dst = os.path.join(tmp, "dicke_sense_py.so")
    shutil.copy(lib, dst)
    spec = importlib.util.spec_from_file_location("dicke_sense_py", dst)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    ds = load()
    print("dicke_sense_py", ds.__version__)

    assert ds.omega_c(10) == 5.0

    m = ds.steady_moments(6, 2.0)
    assert abs(m["sx"]) < 1e-9
    assert m["i_inc"] > 0.0
    m_loc = ds.steady_moments(4, 1.0, 0.1)
    assert m_loc["spm"] >= 0.0

    c = ds.correlation(6, 2.0, [0.0, 0.5])
    assert abs(c[0][0] - m["spm"]) < 1e-8

    f1 = ds.qfi_one_bin(6, 0.5)
    assert abs(f1 - 4.0) < 0.4, f1

    f2 = ds.qfi_two_bin(6, 2.0, [0.0, 0.5, 1.0])
    assert len(f2) == 3 and all(v > 0.0 for v in f2)

    e = ds.estimation_errors(6, 2.0, [0.5, 1.0])
    assert set(e) == {"Nd", "N4", "N5"}
    assert all(v is None or (v > 0.0 and math.isfinite(v)) for vs in e.values() for v in vs)

    out = tempfile.mkdtemp()
    assert ds.run_cli(["qfi1", "--n", "4", "--omega-ratio", "0.5", "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "qfi1.csv"))
    assert ds.run_cli(["qfi1", "--set", "bogus=1", "--out", out]) == 1

    try:
        ds.qfi_one_bin(0, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("N = 0 should raise")
    print("smoke test passed")


if __name__ == "__main__":
    main()
