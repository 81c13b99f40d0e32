"""Smoke test for the glsc_py extension module.

Build the module and run this script from the repository root:

    cargo build --release -p glsc-py --features extension-module
    cp target/release/libglsc_py.so python/glsc_py.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import glsc_py  # noqa: E402


def main():
    assert abs(glsc_py.critical_current() - 2.0 / (3.0 * math.sqrt(3.0))) < 1e-15

    beta_c = glsc_py.stability_threshold(1.0)
    assert abs(beta_c - 1.0 / math.sqrt(3.0)) < 1e-10, beta_c
    mode = glsc_py.stability_mode(0.5, 1.0, 0.3)
    assert mode["discriminant"] >= 0.0 and mode["lambda_plus"] > mode["lambda_minus"]

    prof = glsc_py.inner_profile(-0.2, 0.0, 0.0, 100.0, eta_max=25.0, spacing=0.01)
    assert len(prof["tau"]) == len(prof["rho"]) > 10
    assert all(0.0 < r <= 1.0 for r in prof["rho"])
    assert abs(prof["rho"][-1] - prof["rho_j"]) < 1e-3

    config = """
epsilon = 0.05
[stability]
beta = 0.65
sigma = 1.0
l = 1.0
n_max = 4
"""
    with tempfile.TemporaryDirectory() as out:
        manifest = json.loads(glsc_py.run(config, out))
        stab = manifest["stages"]["stability"]
        assert stab["status"] == "ok"
        assert stab["scalars"]["stable"] is False
        assert sorted(manifest["artifacts"]) == ["stability.json", "stability_modes.csv"]

    try:
        glsc_py.run("epsilon = -1", ".")
    except ValueError as e:
        assert "epsilon" in str(e)
    else:
        raise AssertionError("negative epsilon accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
