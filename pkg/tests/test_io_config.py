import math

import numpy as np
import pytest

from cskam import io
from cskam.config import RunConfig, config_from_dict, dump_config, load_config, parse_config
from cskam.errors import ConfigError
from cskam.models import build_model
from cskam.newton import invariance_error, sup_error

from conftest import torus_at


@pytest.mark.parametrize("family, kw", [
    ("conservative_sm", {"epsilon": 0.3}),
    ("dissipative_sm", {"lam": 0.9, "mu": 0.2, "epsilon": 0.1}),
    ("two_harmonic", {"lam": 0.9, "eps1": 0.4, "eps2": 0.1}),
    ("nontwist_sm", {"lam": 0.8, "a": 0.3, "epsilon": 0.1}),
    ("spin_orbit", {"e": 0.0549, "epsilon": 1e-4, "kd": 1e-8}),
    ("two_factor_4d", {"lam1": 0.5, "lam2": 0.9}),
])
def test_model_record_round_trip(family, kw):
    m = build_model(family, **kw)
    back = io.model_from_record(io.model_record(m))
    assert type(back) is type(m) and back.params == m.params


def test_torus_round_trip(tmp_path, trace_09):
    K = torus_at(trace_09, 0.6)
    path = io.write_torus(tmp_path / "t.json", K, {"note": "x"})
    K2, head = io.read_torus(path)
    # coefficients are stored, so they survive bit for bit
    assert np.array_equal(K2.ky.half_coefficients, K.ky.half_coefficients)
    assert np.array_equal(K2.kx_periodic.half_coefficients, K.kx_periodic.half_coefficients)
    assert np.abs(K2.kx_periodic.samples - K.kx_periodic.samples).max() < 1e-15
    assert K2.mu == K.mu and K2.omega.omega == K.omega.omega
    assert head["note"] == "x" and head["family"] == K.model.family
    assert sup_error(invariance_error(K2)) == pytest.approx(head["sup_error"], abs=1e-14)


def test_read_torus_rejects_other_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        io.read_torus(p)


def test_trace_round_trip(tmp_path, trace_09):
    path = io.write_trace(tmp_path / "trace.tsv", trace_09)
    back = io.read_trace(path)
    assert back.failure_reason == trace_09.failure_reason
    assert [r.epsilon for r in back.records] == [r.epsilon for r in trace_09.records]
    assert [r.sobolev for r in back.records] == [r.sobolev for r in trace_09.records]
    assert "wall_time" not in path.read_text().splitlines()[1]


def test_table_and_pgm(tmp_path):
    io.write_table(tmp_path / "t.tsv", ("a", "b", "c"), [[1, 0.1, "x"], [2, 1e-20, "y"]])
    cols, rows = io.read_table(tmp_path / "t.tsv")
    assert cols == ["a", "b", "c"] and rows == [[1, 0.1, "x"], [2, 1e-20, "y"]]
    labels = np.array([[0, 1, -1], [1, 1, 0]])
    io.write_pgm(tmp_path / "b.pgm", labels, [0.0, 3.9])
    img = io.read_pgm(tmp_path / "b.pgm")
    assert img.shape == (2, 3)
    assert img[0, 2] == 0 and img[0, 1] == img[1, 1] == 255
    cols, rows = io.read_table(tmp_path / "b.pgm.legend")
    assert rows[-1][2] == "unresolved" and rows[-1][3] == 1


def test_format_block_full_precision():
    text = io.format_block("x", {"v": 0.1 + 0.2, "flag": True, "l": [1, 2.5], "s": "a"})
    cfg = parse_config(f"[model]\nmu = {0.1 + 0.2!r}\n")
    assert cfg.model.mu == 0.1 + 0.2
    assert "v = 0.30000000000000004" in text and "flag = true" in text


def test_config_defaults_and_aliases():
    cfg = parse_config("command = 'solve'\n[model]\nfamily = 'dissipative_sm'\nlambda = 0.5\neps = 0.2\n")
    assert cfg.model.lam == 0.5 and cfg.model.epsilon == 0.2
    assert cfg.solver.tol == 1e-11 and cfg.continuation.max_step == 0.02
    m = cfg.model.build()
    assert m.params.lam == 0.5 and m.params.epsilon == 0.2


def test_config_round_trip():
    cfg = config_from_dict({"command": "greene", "omega": 1.25,
                            "model": {"family": "two_harmonic", "eps1": 0.4, "eps2": 0.2},
                            "greene": {"eps_grid": [0.5, 0.6], "threshold": 0.3}})
    again = parse_config(dump_config(cfg))
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("text, fragment", [
    ("[model]\nlamda = 0.9\n", "[model] lamda: unknown key"),
    ("[model]\nfamily = 'henon'\n", "unknown family"),
    ("omega = 'bronze'\n", "omega"),
    ("[solver]\nmax_iter = 'many'\n", "[solver] max_iter: expected int"),
    ("[solver]\nn_modes_init = 48\n", "power of two"),
    ("[basins]\nmode = 'spiral'\n", "[basins] mode"),
    ("[model\n", "<string>"),
    ("model = 3\n", "expected a [model] block"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert fragment in str(exc.value)


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.toml")


def test_default_config_valid():
    cfg = RunConfig()
    assert cfg.omega_value().omega == pytest.approx(math.pi * (math.sqrt(5) - 1))
