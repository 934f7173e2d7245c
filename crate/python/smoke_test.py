"""Builds the extension module and exercises it end to end.

    python3 python/smoke_test.py [--release]
"""

import importlib.util
import json
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def build(release: bool) -> pathlib.Path:
    cmd = ["cargo", "build", "-p", "photonstat-py", "--features", "extension-module"]
    if release:
        cmd.append("--release")
    subprocess.run(cmd, cwd=ROOT, check=True)
    target = ROOT / "target" / ("release" if release else "debug")
    for name in ("libphotonstat_py.so", "libphotonstat_py.dylib", "photonstat_py.dll"):
        if (target / name).exists():
            return target / name
    sys.exit(f"extension library not found in {target}")


def load(lib: pathlib.Path, tmp: pathlib.Path):
    ext = ".pyd" if lib.suffix == ".dll" else ".so"
    dest = tmp / f"photonstat{ext}"
    shutil.copy(lib, dest)
    spec = importlib.util.spec_from_file_location("photonstat", dest)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main() -> None:
    release = "--release" in sys.argv
    with tempfile.TemporaryDirectory() as tmp:
        ps = load(build(release), pathlib.Path(tmp))

        sys2 = ps.LevelSystem.two_level(1e8, 1 / 3.5e-9)
        assert sys2.n_states == 2
        assert abs(sum(sys2.steady_state()) - 1) < 1e-12
        assert abs(sys2.g2([0.0])[0]) < 1e-9
        again = ps.LevelSystem.from_json(sys2.to_json())
        assert again.rate(1, 0) == sys2.rate(1, 0)

        out = ps.simulate(sys2, 0.2, 7, ideal_detectors=True)
        h = ps.correlate(out["a"], out["b"], 256, 50_000)
        fit = h.fit()
        print(f"g2(0) = {fit['fit']['parameters'][0]['value']:.3f}, single photon: {fit['single_photon']}")
        assert fit["single_photon"]

        pulsed = ps.simulate(sys2, 0.1, 3, pump_rate=1e11, pulsed=True, ideal_detectors=True)
        lt = ps.lifetime(pulsed["a"], pulsed["sync"], 64, 1000.0)
        tau = lt["fit"]["parameters"][0]["value"]
        print(f"tau = {tau:.0f} ps")
        assert abs(tau - 3500) < 0.05 * 3500

        temps = [300, 400, 500, 600, 700, 800]
        kb = 8.617333e-5
        ints = [1000 / (1 + 206 * math.exp(-0.25 / (kb * t))) for t in temps]
        q = ps.fit_quenching(temps, ints)
        e = next(p["value"] for p in q["parameters"] if p["name"] == "E_eV")
        assert abs(e - 0.25) < 1e-4, e

        assert abs(ps.huang_rhys(math.exp(-0.5), 1 - math.exp(-0.5)) - 0.5) < 1e-12
        rho = ps.rho_from_sb(4, 1)
        assert abs(ps.correct_background(1 - rho**2, rho)) < 1e-12

        grid = [1.9 + 0.0005 * i for i in range(400)]
        counts = [10 + 1000 / (1 + ((x - 2.0) / 0.01) ** 2) for x in grid]
        z = ps.fit_zpl(grid, counts)
        assert abs(z["center_ev"] - 2.0) < 1e-6, z
        try:
            ps.simulate(sys2, 0.0, 1)
        except ValueError:
            pass
        else:
            raise AssertionError("zero duration accepted")
        print(json.dumps({"version": ps.__version__, "ok": True}))


if __name__ == "__main__":
    main()
