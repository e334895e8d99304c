import math
import os
import pathlib

import numpy as np
import pytest

import otfs_radar as orad

CONFIG_DIR = pathlib.Path(os.environ.get("OTFS_RADAR_CONFIG_DIR",
                                         pathlib.Path(__file__).resolve().parents[2] / "configs"))


def small_config(n_a=8, sigma_w2=0.0):
    cfg = orad.make_system_config(10, 16, 75e6, 60e9, n_a)
    cfg.sigma_w2 = sigma_w2
    return cfg


def test_isfft_matches_numpy():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((6, 10)) + 1j * rng.standard_normal((6, 10))
    N, M = x.shape
    # X[n, m] = sum_k sum_l x[k, l] exp(j2pi(nk/N - ml/M))
    ref = np.fft.fft(np.fft.ifft(x, axis=0) * N, axis=1)
    X = orad.isfft(x)
    assert X.shape == (N, M)
    assert np.max(np.abs(X - ref)) < 1e-12
    assert np.max(np.abs(orad.sfft(X) - x)) < 1e-12


def test_symbols_power():
    cfg = small_config()
    cfg.P_avg = 2.0
    X = orad.isfft(orad.generate_symbols(cfg, 4))
    assert np.mean(np.abs(X) ** 2) == pytest.approx(cfg.P_avg / cfg.N_a, rel=1e-10)


def test_steering_and_beam():
    b = orad.steering(math.pi / 6, 4)
    assert np.allclose(b, np.exp(1j * np.pi * 0.5 * np.arange(4)))
    f = orad.sector_beam(small_config())
    assert np.linalg.norm(f) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(orad.DomainError):
        orad.steering(2.0, 4)


def test_resolutions_from_config_file():
    exp = orad.load_config(CONFIG_DIR / "table1.cfg")
    r = orad.resolutions(exp.system(exp.antennas[0]))
    assert f"{r.v_res * 3.6:.4g}" == "421.6"
    assert f"{r.r_res:.4g}" == "0.9993"


def test_config_error_names_line():
    with pytest.raises(orad.ConfigError, match="line 2"):
        orad.parse_config("N = 16\nM = x\n")


def test_noiseless_on_grid_detection():
    cfg = small_config()
    x = orad.generate_symbols(cfg, 1)
    f = orad.sector_beam(cfg)
    k, l, a = 3, 5, len(cfg.omega) // 2
    tau, nu = l * cfg.delay_cell, k * cfg.doppler_cell
    t = orad.Target(orad.range_from_delay(tau), orad.velocity_from_doppler(nu, cfg.f_c),
                    cfg.omega[a], 1.0, 0.7 - 0.2j)
    y = orad.synthesize([t], x, f, cfg, 9)
    assert y.shape == (cfg.N_a, cfg.N, cfg.M)
    out = orad.estimate(y, x, f, cfg)
    assert len(out.candidates) == 1
    c = out.candidates[0]
    assert (c.grid.k, c.grid.l, c.grid.angle_index) == (k, l, a)
    assert abs(c.refined.gain - t.gain) < 1e-8


def test_statistic_bounded_by_energy():
    cfg = small_config(n_a=4, sigma_w2=1.0)
    x = orad.generate_symbols(cfg, 2)
    f = orad.sector_beam(cfg)
    y = orad.synthesize([], x, f, cfg, 5)
    s = orad.statistic(y, 2 * cfg.delay_cell, cfg.doppler_cell, 0.1, f, x, cfg)
    assert 0.0 <= s <= np.sum(np.abs(y) ** 2)


def test_crlb_scales_with_noise():
    cfg = orad.make_system_config(8, 8, 75e6, 60e9, 4)
    x = orad.generate_symbols(cfg, 3)
    f = orad.sector_beam(cfg)
    theta = [orad.TargetParams(1.0, 0.3, 2.2 * cfg.delay_cell, 1.4 * cfg.doppler_cell, 0.05)]
    cfg.sigma_w2 = 1e-2
    lo = np.array(orad.crlb(theta, x, f, cfg))
    cfg.sigma_w2 = 1.0
    hi = np.array(orad.crlb(theta, x, f, cfg))
    assert np.all(lo > 0)
    assert np.allclose(hi / lo, 100.0, rtol=1e-10)
    F = orad.fisher(theta, x, f, cfg)
    assert F.shape == (5, 5)
    assert np.allclose(F, F.T)
    theta[0].A = 0.0
    with pytest.raises(orad.SingularFisherError):
        orad.crlb(theta, x, f, cfg)


def test_sweep_is_thread_invariant():
    exp = orad.load_config(CONFIG_DIR / "desk.cfg")
    exp.scenarios = [s for s in exp.scenarios if s.name == "S_b"]
    exp.snr_db = [25.0]
    exp.trials = 2
    a = orad.run_sweep(exp, 1)
    b = orad.run_sweep(exp, 2)
    assert a.csv() == b.csv()
    assert a.trials_csv() == b.trials_csv()
    assert len(a.groups) == 1 and a.groups[0].trials == 2
    assert a.csv().splitlines()[0].startswith("scenario,")
