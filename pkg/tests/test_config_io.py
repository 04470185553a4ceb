import json

import numpy as np
import pytest

from mqnmr import experiments as ex
from mqnmr import io
from mqnmr.config import (
    DESK_SPACING,
    SCHEMA_VERSION,
    ConfigError,
    list_presets,
    load_config,
    parse_config,
)
from mqnmr.hamiltonians import chain_system

MINIMAL = """
[system]
preset = chain-4
[timing]
loops = 1
[experiment]
kind = oned-z
"""


def test_minimal_config():
    cfg = parse_config(MINIMAL)
    assert cfg.preset == "chain-4" and cfg.kinds == ["oned-z"] and cfg.loops == [1]
    assert cfg.spacing == DESK_SPACING
    assert cfg.system().N == 4


def test_units():
    text = """
[system]
preset = chain-3
spacing = 3A
[timing]
delta = 2us
pulse_width = 500ns
loops = 1
decay_times = 1ms, 0.5ms, 3e-6
[experiment]
kind = oned-z
"""
    cfg = parse_config(text)
    assert cfg.spacing == pytest.approx(3e-10)
    assert cfg.delta == pytest.approx(2e-6) and cfg.pulse_width == pytest.approx(5e-7)
    assert cfg.decay_times == pytest.approx([1e-3, 5e-4, 3e-6])


def test_decay_range_excludes_stop():
    cfg = load_config("fig5")
    assert len(cfg.decay_times) == 40
    assert cfg.decay_times[0] == pytest.approx(2e-6) and cfg.decay_times[-1] == pytest.approx(782e-6)


def test_matrix_preset_hz():
    text = """
[system]
preset = matrix
couplings = 0 1kHz; 1kHz 0
[timing]
tau = 10us
[experiment]
kind = oned-x
"""
    cfg = parse_config(text)
    assert cfg.system().couplings[0, 1] == pytest.approx(2e3 * np.pi)


def test_geometry_preset():
    text = """
[system]
preset = geometry
positions = 0 0 0; 3A 0 0; 0 3A 0
[timing]
loops = 1
[experiment]
kind = oned-z
"""
    s = parse_config(text).system()
    assert s.N == 3 and s.couplings[0, 1] > 0


def test_fine_sampling_accepted():
    cfg = parse_config(MINIMAL + "[sampling]\nk_phi = 64\nn_max = 32\n")
    assert cfg.k_phi == 64 and cfg.n_max == 32


def test_nyquist_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "[sampling]\nk_phi = 6\nn_max = 4\n")
    assert any("Nyquist" in e for e in err.value.errors)


def test_all_errors_collected():
    text = """
[system]
preset = chain-4
colour = red
[timing]
delta = 5 parsecs
loops = 1
[experiment]
kind = oned-q
mode = sideways
[sampling]
k_phi = 3
[extras]
"""
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    msgs = " | ".join(err.value.errors)
    for part in ("system.colour", "[extras]", "timing.delta", "oned-q", "mode", "Nyquist"):
        assert part in msgs


def test_required_fields():
    with pytest.raises(ConfigError) as err:
        parse_config("[timing]\nloops = 1\n")
    assert len(err.value.errors) == 2
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("loops = 1", "tau = 1us\nloops = 1"))
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("chain-4", "chain-14"))


def test_presets_ship_and_parse():
    names = list_presets()
    for fig in ("fig2.cfg", "fig3.cfg", "fig4.cfg", "fig5.cfg"):
        assert fig in names
    for name in names:
        cfg = load_config(name)
        assert cfg.delta == pytest.approx(1.3e-6) and cfg.pulse_width == pytest.approx(0.51e-6)
    assert load_config("fig2").loops == [1, 3, 5]
    with pytest.raises(FileNotFoundError):
        load_config("fig9")


def test_echo_is_complete():
    cfg = load_config("fig4")
    echo = cfg.echo()
    assert echo["schema_version"] == SCHEMA_VERSION
    assert "prefix" not in echo
    for key in ("spacing", "field_axis", "gamma", "dq_scale", "delta", "pulse_width", "loops", "k_phi", "k_beta", "n_max", "seed"):
        assert key in echo


@pytest.fixture(scope="module")
def one_d():
    prep = ex.Preparation.from_loops(chain_system(4, DESK_SPACING), 3)
    res = ex.run_1d(prep, "z", K=16)
    res.fit = ex.gaussian_fit(res.spectrum)
    return res


def test_zero_time_single_row(tmp_path):
    res = ex.run_1d(ex.Preparation(chain_system(3), 0.0), "z")
    csv_path, _ = io.write_spectrum(res, tmp_path / "t0", dense=False)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "order,intensity"
    assert len(lines) == 2 and lines[1].startswith("0,")
    assert float(lines[1].split(",")[1]) == pytest.approx(res.total)


def test_round_trip_exact(tmp_path, one_d):
    io.write_spectrum(one_d, tmp_path / "s", {"a": 1})
    back = io.read_spectrum(tmp_path / "s.csv")
    assert np.array_equal(back["orders"], one_d.spectrum.orders)
    assert np.array_equal(back["intensities"], one_d.spectrum.intensities)
    meta = back["meta"]
    assert meta["schema_version"] == SCHEMA_VERSION
    assert meta["config"] == {"a": 1}
    assert meta["fit"]["sigma"] == one_d.fit.sigma
    assert meta["experiment"]["tau"] == one_d.tau


def test_two_dimensional_dense_rows(tmp_path):
    prep = ex.Preparation.from_loops(chain_system(4, DESK_SPACING), 2)
    res = ex.run_2d(prep, 12, 12, n_max=5)
    csv_path, _ = io.write_spectrum(res, tmp_path / "m.csv")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "x_order,z_order,intensity"
    assert len(lines) - 1 == (2 * 5 + 1) ** 2
    back = io.read_spectrum(csv_path)
    assert np.array_equal(back["intensities"].reshape(11, 11), res.map2d)
    sig = io.write_signal(res, tmp_path / "m_signal.csv")
    assert len(sig.read_text().splitlines()) == 1 + 144


def test_sweep_decay_aht_writers(tmp_path):
    s = chain_system(4, DESK_SPACING)
    sw = ex.spin_count_sweep(s, [1, 2, 3], K=16)
    c, j = io.write_sweep(sw, tmp_path / "sw")
    assert c.read_text().splitlines()[0].startswith("loops,tau,sigma_z,sigma_x,N_z,N_x")
    assert json.loads(j.read_text())["slope"] == sw.slope
    d = ex.run_dipolar_decay(ex.Preparation.from_loops(s, 1), [0.0, 1e-4], 8, 8)
    c, j = io.write_decay(d, tmp_path / "d")
    assert len(c.read_text().splitlines()) == 3
    assert json.loads(j.read_text())["max_marginal_error"] < 1e-10
    a = ex.run_aht_check(s)
    c, _ = io.write_aht(a, tmp_path / "a")
    assert "ideal-16" in c.read_text()


def test_float_format_round_trips():
    for x in (0.1, 1 / 3, 2.0**-40, 6.02214076e23, -0.0):
        assert float(io.fmt(x)) == x
