"""Smoke test for the cbi_lab extension module."""

import json
import math
import pathlib
import sys
import tempfile

import cbi_lab

ROOT = pathlib.Path(__file__).resolve().parents[1]

CIR = json.dumps({"c": [1.0], "beta": [1.0], "B": [[-1.0]], "mu": [{"kind": "zero"}]})


def main():
    print("cbi_lab", cbi_lab.__version__)

    report = json.loads(cbi_lab.validate(CIR))
    assert report["ok"], report

    cert = json.loads(cbi_lab.certify(CIR))
    assert cert["I"] == [1] and cert["alpha"] == [2.0], cert

    closed = cbi_lab.laplace_cir(1.0, 1.0, -1.0, 1.0, 1.0, 1.0)
    ode = cbi_lab.laplace_cbi_1d(CIR, 1.0, 1.0, 1.0, 1e-11)
    assert abs(closed - ode) < 1e-8, (closed, ode)

    xs = cbi_lab.simulate(CIR, [1.0], 1.0, 1e-2, 4000, 1)
    mc = sum(math.exp(-x[0]) for x in xs) / len(xs)
    assert abs(mc - closed) < 0.02, (mc, closed)

    assert cbi_lab.kappa_preset("general", 2) == [0.75, 0.75]
    a, mean = cbi_lab.anisotropy([1.5, 1.6])
    assert abs(sum(a) - 2.0) < 1e-12

    try:
        cbi_lab.validate("{}")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed params accepted")

    with tempfile.TemporaryDirectory() as out:
        code, artifacts, summary = cbi_lab.run("check", ROOT / "configs" / "stable_pure_jump.toml", out)
        assert code == 2, summary
        code, artifacts, summary = cbi_lab.run("certify", ROOT / "configs" / "cir.toml", out)
        assert code == 0 and artifacts, summary

    print("ok")


if __name__ == "__main__":
    sys.exit(main())
