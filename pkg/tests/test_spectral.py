import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdtdsens.constants import C0, EPS0, MU0
from fdtdsens.engine import ProbeSpec, SimulationConfig, SourceSpec, gaussian, run
from fdtdsens.grid import YeeGrid
from fdtdsens.spectral import (SpectralLeakageWarning, Spectrum, TransferFunction, check_decay, dft, dft_matrix,
                               dft_records, dft_settled, settled_level, step_tail, tail_ratio, frequency_grid, propagate, ratio, self_transfer_function,
                               transfer_function, valid_band)

DT = 0.441e-12
FREQS = frequency_grid(1e9, 25e9)


def test_frequency_grid():
    f = frequency_grid(1e9, 25e9)
    assert len(f) == 401 and f[0] == 1e9 and f[-1] == 25e9
    assert np.allclose(np.diff(f), 60e6)


def test_impulse_is_flat():
    x = np.zeros(64)
    x[0] = 1.0
    np.testing.assert_allclose(dft(x, DT, FREQS).values, DT, rtol=1e-15)


def test_cosine_peak():
    dt, n = 1e-12, 5000
    f0 = 10e9  # 50 full periods
    x = np.cos(2 * np.pi * f0 * np.arange(n) * dt)
    assert abs(dft(x, dt, [f0]).values[0]) == pytest.approx(n * dt / 2, rel=1e-9)


def test_zero_series():
    assert not dft(np.zeros(100), DT, FREQS).values.any()


def test_fast_transform_matches_matrix():
    rng = np.random.default_rng(1)
    for n in (1, 7, 100, 4097):
        x = rng.standard_normal((n, 3))
        np.testing.assert_allclose(dft_records(x, DT, FREQS), dft_matrix(n, DT, FREQS).T @ x, rtol=1e-12,
                                   atol=1e-12 * np.abs(x).sum() * DT)


def test_nyquist_guard():
    with pytest.raises(ValueError):
        dft(np.ones(4), 1e-9, [0.6e9])
    with pytest.raises(ValueError):
        dft(np.ones(4), 1e-9, [0.0])


@settings(deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31))
def test_dft_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 300))
    lhs = dft(a * x + b * y, DT, FREQS).values
    rhs = a * dft(x, DT, FREQS).values + b * dft(y, DT, FREQS).values
    scale = (abs(a) + abs(b) + 1) * np.abs(dft(x, DT, FREQS).values).max()
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * scale)


def test_identity_and_zero_transfer():
    g = gaussian(np.arange(2000) * DT, 120e-12, 20e-12)
    tf = transfer_function(g, g, DT, FREQS)
    np.testing.assert_allclose(tf.spectrum.values[tf.spectrum.valid], 1.0, rtol=1e-13)
    zero = transfer_function(np.zeros_like(g), g, DT, FREQS)
    assert not zero.spectrum.values.any()
    with pytest.raises(ValueError, match="empty"):
        self_transfer_function(g, np.zeros_like(g), DT, FREQS)


def test_valid_band_gaussian():
    ts = 20e-12
    freqs = frequency_grid(0.1e9, 60e9)
    g = gaussian(np.arange(4000) * DT, 6 * ts, ts)
    band = valid_band(dft(g, DT, freqs).values)
    edge = math.sqrt(math.log(1e3)) / (math.pi * ts)  # exp(-(pi f Ts)^2) = 1e-3
    assert band[0] and band.any()
    assert np.all(band[freqs < edge - 0.2e9]) and not np.any(band[freqs > edge + 0.2e9])
    assert abs(freqs[band][-1] - edge) < 0.3e9


def test_ratio_marks_out_of_band():
    vals, valid = ratio(np.ones(3), np.array([1.0, 1e-4, 0.5]))
    assert valid.tolist() == [True, False, True]
    assert np.isnan(vals[1]) and vals[2] == 2.0


def _vacuum_line(n, courant=1.0):
    dz = 1e-3
    g = YeeGrid.uniform(1, 1, n, dz, dz, dz)
    return g, courant * dz * math.sqrt(EPS0 * MU0)


def test_pure_delay_transfer():
    g, dt = _vacuum_line(400)
    nsteps = 700
    wf = gaussian(np.arange(nsteps) * dt, 60 * dt, 10 * dt)
    rec = run(g, SimulationConfig(dt, nsteps), [SourceSpec("E", 0, [(100,)], wf)],
              [ProbeSpec("a", "E", 0, [(150,)]), ProbeSpec("b", "E", 0, [(170,)])])
    freqs = frequency_grid(1e9, 25e9)
    tf = transfer_function(rec["b"], rec["a"], dt, freqs)
    v = tf.spectrum.valid
    assert v.sum() > 300
    np.testing.assert_allclose(tf.spectrum.values[v], np.exp(-2j * np.pi * freqs[v] * 20 * dt), rtol=0, atol=1e-6)


def test_transfer_composable():
    g, dt = _vacuum_line(1200, courant=0.7)
    nsteps = 1400
    wf = gaussian(np.arange(nsteps) * dt, 60 * dt, 12 * dt)
    probes = [ProbeSpec(n, "E", 0, [(k,)]) for n, k in (("a", 300), ("b", 360), ("c", 430))]
    rec = run(g, SimulationConfig(dt, nsteps), [SourceSpec("E", 0, [(250,)], wf)], probes)
    freqs = frequency_grid(1e9, 25e9)
    # gate: waves are purely forward within the record, ends are 800 cells away
    ab = transfer_function(rec["b"], rec["a"], dt, freqs).spectrum
    bc = transfer_function(rec["c"], rec["b"], dt, freqs).spectrum
    ac = transfer_function(rec["c"], rec["a"], dt, freqs).spectrum
    v = ab.valid & bc.valid & ac.valid
    assert np.max(np.abs((ab * bc).values[v] - ac.values[v]) / np.abs(ac.values[v])) < 1e-3


def _self_tf(wall):
    g, dt = _vacuum_line(600, courant=0.99)
    nsteps = 1100
    wf = gaussian(np.arange(nsteps) * dt, 60 * dt, 12 * dt)
    src = [SourceSpec("E", 0, [(200,)], wf)]
    probe = [ProbeSpec("p", "E", 0, [(200,)])]
    big, _ = _vacuum_line(3000, courant=0.99)
    inc = run(big, SimulationConfig(dt, nsteps), [SourceSpec("E", 0, [(1500,)], wf)],
              [ProbeSpec("p", "E", 0, [(1500,)])])["p"]
    if wall is not None:
        pec = [m.copy() for m in g.pec]
        pec[0][0, 0, 200 + wall] = True
        g = g.replace(pec=tuple(pec))
    tot = run(g, SimulationConfig(dt, nsteps), src, probe)["p"]
    freqs = frequency_grid(1e9, 25e9)
    return freqs, dt, self_transfer_function(tot, inc, dt, freqs).spectrum


def test_self_transfer_vacuum_is_one():
    freqs, _, h = _self_tf(None)
    assert np.max(np.abs(h.values[h.valid] - 1)) < 0.02


def test_self_transfer_pec_image():
    cells = 40
    freqs, dt, h = _self_tf(cells)
    lag = 2 * cells * 1e-3 / C0
    expect = 1 - np.exp(-2j * np.pi * freqs * lag)
    assert np.max(np.abs(h.values[h.valid] - expect[h.valid])) < 0.02


def test_propagate_examples():
    f = FREQS
    j = Spectrum(f, np.linspace(1, 2, f.size) * (1 + 1j))
    one = TransferFunction("p", "a", Spectrum(f, np.ones(f.size)))
    np.testing.assert_array_equal(propagate({"p": one}, {"p": j}).values, j.values)
    h = Spectrum(f, np.exp(-1j * f / 1e10))
    out = propagate({1: TransferFunction(1, "a", h), 2: TransferFunction(2, "a", h)}, {1: j, 2: j})
    np.testing.assert_allclose(out.values, 2 * h.values * j.values, rtol=1e-15)
    with pytest.raises(KeyError):
        propagate({}, {"x": j})
    assert not propagate({}, {"x": Spectrum(f, np.zeros(f.size))}).values.any()


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_propagate_linear(a, b):
    rng = np.random.default_rng(0)
    f = FREQS[:50]
    tf = {k: TransferFunction(k, "a", Spectrum(f, rng.standard_normal(50) + 1j * rng.standard_normal(50)))
          for k in range(3)}
    x = {k: Spectrum(f, rng.standard_normal(50) + 0j) for k in range(3)}
    y = {k: Spectrum(f, rng.standard_normal(50) + 0j) for k in range(3)}
    mix = {k: x[k] * a + y[k] * b for k in range(3)}
    lhs = propagate(tf, mix).values
    rhs = a * propagate(tf, x).values + b * propagate(tf, y).values
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * (1 + abs(a) + abs(b)) * 10)


def test_spectra_on_different_grids_rejected():
    with pytest.raises(ValueError):
        Spectrum(FREQS, np.ones(401)) + Spectrum(FREQS * 2, np.ones(401))


def test_decay_warning():
    ringing = np.cos(0.3 * np.arange(400.0)) * np.exp(-np.arange(400.0) / 1000)
    with pytest.warns(SpectralLeakageWarning):
        assert check_decay(ringing, "ringing") is not None
    assert check_decay(np.ones(100), "settled") is None
    assert check_decay(gaussian(np.arange(400.0), 100, 10), "pulse") is None


def test_settled_record_transform():
    # running sum of a pulse settles to a constant; its full transform is G / (1 - z^-1)
    g = gaussian(np.arange(3000) * DT, 120e-12, 20e-12)
    step = np.cumsum(g)
    zinv = np.exp(-2j * np.pi * FREQS * DT)
    expect = dft(g, DT, FREQS).values / (1 - zinv)
    np.testing.assert_allclose(dft_settled(step, DT, FREQS), expect, rtol=1e-9)
    assert settled_level(step) == pytest.approx(g.sum(), rel=1e-12)
    assert tail_ratio(step) < 1e-12
    # decayed records are unchanged
    np.testing.assert_allclose(dft_settled(g, DT, FREQS), dft_records(g, DT, FREQS), rtol=0, atol=1e-25)
    assert step_tail(np.zeros(2), 10, DT, FREQS).shape == (401, 2)
