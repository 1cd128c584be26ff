"""Smoke test for the nta extension module.

Build and install first:  pip install ./crates/py  (or `maturin develop -m crates/py/Cargo.toml`)
"""

import json
import math
import sys

import nta


def main() -> int:
    names = nta.experiments()
    assert "hardy" in names and len(names) == 9, names

    cfg = nta.Config.parse('[domain]\ndim = 2\ntruncation = 4.0\nmesh_h = 0.05\n')
    assert cfg.dim == 2 and cfg.aperture == 2.0

    try:
        nta.Config.parse("[sweep]\np_grid = [4.0, 3.0]\n")
    except ValueError as e:
        assert "grid not increasing" in str(e)
    else:
        raise AssertionError("decreasing grid accepted")

    dom = nta.Domain.sawtooth(0.5)
    x = [0.2, dom.psi([0.2]) + 0.3]
    assert dom.distance_to_boundary(x) <= dom.vertical_gap(x) + 1e-12

    result = nta.run(cfg, "hardy")
    assert result.passed
    for r in result.reports:
        s = json.loads(r.context_json)["s"]
        assert math.isclose(r.ratio, 1.0 / s**2, rel_tol=0.02), r
        print(r)
    manifest = json.loads(result.manifest_json)
    assert len(manifest["checks"]) == 4
    print("smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
