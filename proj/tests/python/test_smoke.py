"""Smoke tests for the python bindings.

The module is located either on sys.path (installed wheel) or in the CMake
build tree via the DJET_MODULE_DIR environment variable.
"""

import math
import os
import sys

import numpy as np
import pytest

_mod_dir = os.environ.get("DJET_MODULE_DIR")
if _mod_dir:
    sys.path.insert(0, _mod_dir)

try:
    import _djet as dj
except ImportError:  # installed package layout
    import djet as dj


def test_input_corpus():
    names = dj.input_names()
    assert "fat-cantor-indicator" in names
    assert "cantor-function" in names
    u = dj.input_field("sin", 243)
    assert u.shape == (243,)
    assert abs(float(u.max()) - 1.0) < 1e-4
    k = dj.input_field("fat-cantor-indicator", 6561)
    meas = float(k.sum()) / 6561.0
    assert 1.0 / 12.0 <= meas <= 1.0 / 3.0


def test_chordal_distance():
    zero = np.array([0.0])
    one = np.array([1.0])
    assert dj.chordal_distance(zero, None) == 2.0
    assert abs(dj.chordal_distance(zero, one) - math.sqrt(2.0)) < 1e-12
    assert dj.chordal_distance(one, one) == 0.0


def test_estimate_and_infinity_mass():
    cells = 6561
    u = dj.input_field("fat-cantor-indicator", cells)
    est = dj.estimate_diffuse_jet(u, cells, h0_cells=81, steps=3)
    assert len(est["rho_trace"]) == 2
    inf_mass = est["inf_mass"]
    assert inf_mass.shape == (cells,)
    assert inf_mass.max() == 1.0  # jump cells escape to the infinity bin
    assert inf_mass.mean() < 0.2


def test_mollify_bounds():
    cells = 6561
    u = dj.input_field("sin", cells)
    out = dj.mollify(u, cells, eps=0.1, h_cells=9, lr=2.0)
    assert out["pass"]
    assert out["sup_u"] <= 0.1
    assert out["sup_jet"] <= 0.1
    assert out["measure_E"] <= 0.1
    assert out["lr"] <= 0.1
    # serialized patchwork evaluates consistently
    xs = np.linspace(0.1, 0.9, 7)
    vals = dj.evaluate_mollified(out["json"], xs, 0)
    assert np.allclose(vals, np.sin(np.pi * xs), atol=0.1)


def test_check_dsolution():
    cells = 19683
    cantor = dj.input_field("cantor-function", cells)
    res = dj.check_dsolution(cantor, "derivative-zero", cells, h0_cells=27)
    assert res["pass"]

    sin = dj.input_field("sin", cells)
    res2 = dj.check_dsolution(sin, "eikonal", cells, h0_cells=27)
    assert not res2["pass"]


def test_run_approximation_diagnostics():
    cells = 2187
    u = dj.input_field("sin", cells)
    run = dj.run_approximation(u, "derivative-zero", cells, h0_cells=243,
                               decay=0.5, nu_max=3)
    assert "mode_3_31b" in run["run_json"]
    assert len(run["field_l1"]) == 3
