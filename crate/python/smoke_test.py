"""Smoke test for the Python extension.

Build and install first:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import math
import os
import tempfile

import numpy as np

import dmri_noise_py as dn


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    if not ok:
        raise SystemExit(1)


def main():
    rng = np.random.default_rng(0)
    # Rayleigh noise: N = 1, sigma_g = 3.
    samples = np.hypot(rng.normal(0, 3, 50_000), rng.normal(0, 3, 50_000))
    for method in ("moments", "ml"):
        r = dn.estimate(samples.tolist(), method)
        check(f"estimate[{method}]", abs(r.sigma_g / 3 - 1) < 0.02 and abs(r.n_dof - 1) < 0.05, repr(r))

    ph = dn.simulate([32, 32, 8], 20, snr=30.0, n_dof=4.0, seed=3)
    check("simulate", ph.noisy.dims == [32, 32, 8, 20], f"sigma_g={ph.sigma_g:.4f}")
    again = dn.simulate([32, 32, 8], 20, snr=30.0, n_dof=4.0, seed=3)
    check("simulate is deterministic", again.noisy.data() == ph.noisy.data())

    slices, mask = dn.identify(ph.noisy, method="ml")
    sigmas = [s.sigma_g for s in slices if s.sigma_g is not None]
    median = float(np.median(sigmas))
    check("identify", len(sigmas) == 8 and abs(median / ph.sigma_g - 1) < 0.03, f"median sigma {median:.4f}")
    check("identify mask", len(mask) == 32 * 32 * 8 and any(mask))

    noise = dn.simulate([10, 10, 10], 12, n_dof=2.0, signal="uniform", intensity=0.0, noise_sigma=5.0, seed=1)
    sigma_map, n_map = dn.estimate_field(noise.noisy, [3, 3, 3])
    check("estimate_field", abs(np.nanmedian(sigma_map) / 5 - 1) < 0.03 and abs(np.nanmedian(n_map) / 2 - 1) < 0.1)

    eta = dn.correct_eta(dn.ncchi_mean(40.0, 10.0, 4.0), 10.0, 4.0)
    check("correct_eta round trip", abs(eta - 40.0) < 0.04, f"eta={eta:.6f}")
    check("xi(0|1,1)", abs(dn.xi(0.0, 1.0, 1.0) - (2 - math.pi / 2)) < 1e-10)
    lo, hi = dn.selection_bounds(65, 1.0)
    check("selection_bounds", lo < 65 < hi, f"({lo:.3f}, {hi:.3f})")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "v.nii.gz")
        ph.noisy.write(path, "f64")
        back = dn.Volume.read(path)
        check("volume round trip", back.dims == ph.noisy.dims and back.data() == ph.noisy.data())
        try:
            dn.Volume.read(os.path.join(d, "missing.nii"))
        except OSError as e:
            check("missing file raises OSError", "missing.nii" in str(e))
        else:
            check("missing file raises OSError", False)

    try:
        dn.estimate([1.0, 1.0, 1.0])
    except ValueError as e:
        check("degenerate sample raises ValueError", True, str(e))
    else:
        check("degenerate sample raises ValueError", False)
    print("python smoke test passed")


if __name__ == "__main__":
    main()
