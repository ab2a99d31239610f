import json
import math

import numpy as np
import pytest

import _statfem as sf


def test_mesh_info():
    info = sf.mesh_info(32)
    assert info["n_nodes"] == 1089
    assert info["n_cells"] == 2 * 32 * 32
    assert info["n_boundary"] == 4 * 32


def test_assemble_dense():
    a, b, g = sf.assemble_dense(4)
    a = np.asarray(a)
    assert a.shape == (25, 25)
    assert np.allclose(a, a.T)
    assert np.all(np.linalg.eigvalsh(a) > 0)
    assert math.isclose(sum(g), 0.05**2, rel_tol=1e-10)
    assert len(b) == 25


def test_sample_theta_field():
    theta = sf.sample_theta_field(8, seed=3)
    assert len(theta) == 81
    assert all(t > 0 for t in theta)
    assert theta == sf.sample_theta_field(8, seed=3)
    assert theta != sf.sample_theta_field(8, seed=4)


def test_sample_conditional_prior():
    u = sf.sample_conditional_prior(8, seed=1, n_draws=16)
    assert u.shape == (16, 81)
    assert np.isfinite(u).all()
    u2 = sf.sample_conditional_prior(8, seed=1, n_draws=16)
    assert np.array_equal(u, u2)


def test_acf_and_ess():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(20000)
    rho = sf.acf(x.tolist(), 5)
    assert rho[0] == pytest.approx(1.0)
    assert all(abs(r) < 0.05 for r in rho[1:])
    assert 0.8 * 20000 < sf.ess(x.tolist()) < 1.2 * 20000


def test_parse_config_normalises():
    rendered = sf.parse_config("experiment = prior\nmesh_n = 16\n")
    assert "mesh_n = 16" in rendered
    assert "sampler = pula" in rendered
    with pytest.raises(Exception):
        sf.parse_config("bogus_key = 1\n")


def test_run_experiment_and_read_chain(tmp_path):
    cfg = (
        "experiment = prior\n"
        "mesh_n = 8\n"
        "sampler = pula\n"
        "n_samples = 100\n"
        "n_warmup = 10\n"
        "seed = 5\n"
    )
    res = sf.run_experiment(cfg, str(tmp_path))
    assert res["exit_status"] == 0
    chain = tmp_path / "chain_0.sfem"
    assert chain.exists()
    out = sf.read_chain(str(chain))
    assert out["samples"].shape == (100, 81)
    assert np.isfinite(out["samples"]).all()
    meta = json.loads(out["metadata"])
    assert meta["chain_index"] == 0
    assert "config" in meta
