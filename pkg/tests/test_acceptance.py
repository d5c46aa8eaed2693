"""Acceptance gate: each test checks one criterion at its stated tolerance and runtime budget."""

from __future__ import annotations

import time

import numpy as np
import pytest

from gsa_kernel.cli import main
from gsa_kernel.groups import parse_designation
from gsa_kernel.harness import Suite, merge_suite_config, network_config, run_suite
from gsa_kernel.network import build
from gsa_kernel.tensor import load_gsat


def audit(claims):
    timings: dict = {}
    reps = {r.claim: r for r in run_suite(claims=claims, timings=timings)}
    return reps, sum(timings.values())


def describe(record_property, reps, seconds):
    parts = [f"{cid} r={r.residual:.1e}" for cid, r in sorted(reps.items())]
    record_property("detail", ", ".join(parts) + f"; {seconds:.2f}s")


@pytest.mark.criterion(1, "group axioms and matrix Cayley tables")
def test_criterion_01_group_algebra(record_property):
    reps, secs = audit(["G1-axioms"])
    describe(record_property, reps, secs)
    rep = reps["G1-axioms"]
    for name in ("Z2", "R4", "R8", "R12", "R16", "R4M", "R8M", "S2"):
        assert name in rep.instance
    assert rep.residual == 0.0
    assert secs < 1.0


@pytest.mark.criterion(2, "permutation equivariance of global attention, local breaking witness")
def test_criterion_02_permutations(record_property):
    reps, secs = audit(["C1"])
    describe(record_property, reps, secs)
    assert reps["C1-permutation-global"].residual <= 1e-10
    assert reps["C1-local-breaking"].residual >= 1e-3
    assert secs < 5.0


@pytest.mark.criterion(3, "absolute encodings break translation and permutation equivariance")
def test_criterion_03_absolute(record_property):
    reps, secs = audit(["C2"])
    describe(record_property, reps, secs)
    for which in ("translation", "permutation"):
        rep = reps[f"C2-absolute-{which}"]
        assert rep.residual >= 1e-3
        assert rep.witness is not None
    again, _ = audit(["C2"])
    assert all(again[c].residual == reps[c].residual for c in reps)
    assert secs < 5.0


@pytest.mark.criterion(4, "relative encodings give translation equivariance on an 8x8 grid")
def test_criterion_04_relative(record_property):
    reps, secs = audit(["C3"])
    describe(record_property, reps, secs)
    assert reps["C3-relative-translation-local"].residual <= 1e-10
    assert reps["C3-relative-translation-global"].residual <= 1e-10
    assert secs < 10.0


@pytest.mark.criterion(5, "lifting equivariance for Z4, D4 grids and Z8, Z12 point sets")
def test_criterion_05_lifting(record_property):
    reps, secs = audit(["C4"])
    describe(record_property, reps, secs)
    assert reps["C4-lifting-Z4-grid"].residual <= 1e-10
    assert reps["C4-lifting-D4-grid"].residual <= 1e-10
    assert reps["C4-lifting-Z8-points"].residual <= 1e-8
    assert reps["C4-lifting-Z12-points"].residual <= 1e-8
    assert secs < 30.0


@pytest.mark.criterion(6, "group self-attention equivariance with Cayley stabilizer shifts")
def test_criterion_06_group_attention(record_property):
    reps, secs = audit(["C5"])
    describe(record_property, reps, secs)
    assert reps["C5-group-Z4-grid"].residual <= 1e-10
    assert reps["C5-group-D4-grid"].residual <= 1e-10
    assert reps["C5-group-Z8-points"].residual <= 1e-8
    assert reps["C5-group-Z12-points"].residual <= 1e-8
    assert all("mismatch" not in r.instance for r in reps.values())
    assert secs < 60.0


@pytest.mark.criterion(7, "dilation equivariance needs Haar weights")
def test_criterion_07_haar(record_property):
    reps, secs = audit(["H-haar"])
    describe(record_property, reps, secs)
    assert reps["H-haar-lift"].residual <= 1e-8
    assert reps["H-haar-group"].residual <= 1e-8
    assert reps["H-haar-lift-unweighted"].residual >= 1e-2
    assert reps["H-haar-group-unweighted"].residual >= 1e-2
    assert secs < 30.0


@pytest.mark.criterion(8, "attention reproduces 3x3 convolutions")
def test_criterion_08_convolution(record_property):
    reps, secs = audit(["X-express-conv"])
    describe(record_property, reps, secs)
    assert reps["X-express-conv"].residual <= 1e-6
    assert secs < 10.0


@pytest.mark.criterion(9, "fast lifting path matches naive (bench observation non-gating)")
def test_criterion_09_fast_path(record_property, tmp_path):
    reps, secs = audit(["F-fast-path"])
    assert reps["F-fast-path"].residual <= 1e-12
    code = main(["bench", "--group", "R4", "--set", "bench.grid=[12,12]", "--set", "bench.sizes=[3,5,7]",
                 "--set", "bench.repeats=2", "--output-dir", str(tmp_path)])
    assert code == 0
    observed = (tmp_path / "bench_observations.txt").read_text().splitlines()[-1]
    record_property("detail", f"F-fast-path r={reps['F-fast-path'].residual:.1e}; bench: {observed}")


@pytest.mark.criterion(10, "2-block R4 network invariance and tap equivariance")
def test_criterion_10_network(record_property):
    reps, secs = audit(["N-invariance", "N-taps"])
    describe(record_property, reps, secs)
    assert reps["N-invariance-R4"].residual <= 1e-8
    assert reps["N-taps-R4"].residual <= 1e-8
    assert secs < 60.0


@pytest.mark.criterion(11, "parameter count unchanged across Z2/R4/R8/R12/R16")
def test_criterion_11_parameter_count(record_property):
    s = Suite(merge_suite_config({}))
    counts = {n: build(network_config(s, parse_designation(n))).num_parameters for n in ("Z2", "R4", "R8", "R12", "R16")}
    record_property("detail", ", ".join(f"{k}={v}" for k, v in counts.items()))
    assert len(set(counts.values())) == 1
    reps, _ = audit(["P-param-count"])
    assert reps["P-param-count"].passed


@pytest.mark.criterion(12, "demo: rotated lifting equals rotated, shifted original")
def test_criterion_12_demo(record_property, tmp_path):
    t0 = time.perf_counter()
    assert main(["demo", "--group", "R4", "--output-dir", str(tmp_path)]) == 0
    rotated = load_gsat(tmp_path / "lift_rotated.gsat")
    aligned = load_gsat(tmp_path / "lift_original_aligned.gsat")
    original = load_gsat(tmp_path / "lift_original.gsat")
    residual = float(np.abs(rotated - aligned).max()) / (1.0 + float(np.abs(original).max()))
    record_property("detail", f"alignment residual={residual:.1e}; {time.perf_counter() - t0:.2f}s")
    assert residual <= 1e-10
    # the rotation is not trivial: without the alignment the slices differ
    assert float(np.abs(rotated - original).max()) > 1e-3
    for name in ("input.gsat", "input_rotated.gsat", "summary.txt", "lift_original_slice0.csv"):
        assert (tmp_path / name).exists()
