import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from rotamix import cli
from rotamix.config import RunConfig
from rotamix.dataio import (
    PanelFormatError,
    default_truth,
    load_panel,
    rank_transform,
    read_csv_panel,
    read_draws,
    read_truth,
    simulate_panel,
    truth_frame,
    write_draws,
    write_panel,
)
from rotamix.mixture import MixtureParams
from rotamix.panel import PanelData
from rotamix.prior import PriorConfig, build_lag_sets
from rotamix.sampler import McmcConfig, run_chain


def raw_frame(t, *cols):
    df = pd.DataFrame({"t": t, "id": np.arange(1, len(t) + 1)})
    for l, c in enumerate(cols, start=1):
        df[f"x{l}"] = c
    return df


# --------------------------------------------------------------------------
# rank transform
# --------------------------------------------------------------------------


def test_rank_transform_examples():
    data = rank_transform(raw_frame([1, 1, 1], [10.0, 5.0, 7.0], [4.0, 4.0, 9.0]))
    np.testing.assert_allclose(data.u[:, 0], [0.75, 0.25, 0.5])
    np.testing.assert_allclose(data.u[:, 1], [0.375, 0.375, 0.75])


def test_rank_transform_scopes():
    df = raw_frame([1, 1, 2, 2], [1.0, 2.0, 3.0, 4.0], [4.0, 3.0, 2.0, 1.0])
    glob = rank_transform(df)
    np.testing.assert_allclose(glob.u[:, 0], [0.2, 0.4, 0.6, 0.8])
    per = rank_transform(df, scope="per-time")
    np.testing.assert_allclose(per.u[:, 0], [1 / 3, 2 / 3, 1 / 3, 2 / 3])
    assert per.T == 2
    with pytest.raises(ValueError):
        rank_transform(df, scope="monthly")


def test_rank_transform_constant_column_named():
    with pytest.raises(ValueError, match="x2"):
        rank_transform(raw_frame([1, 1, 1], [1.0, 2.0, 3.0], [5.0, 5.0, 5.0]))
    with pytest.raises(ValueError, match="t=2"):
        rank_transform(raw_frame([1, 1, 2, 2], [1.0, 2.0, 3.0, 3.0], [1.0, 2.0, 3.0, 4.0]),
                       scope="per-time")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-10**5, 10**5), min_size=3, max_size=40, unique=True),
       st.sampled_from([np.exp, np.arctan, lambda x: x**3 + 2 * x, lambda x: 5 * x - 7]))
def test_rank_transform_monotone_invariance(values, fn):
    # integer grid keeps the transformed values distinct in floating point
    x = np.asarray(values, dtype=float)
    y = x[::-1].copy()
    t = np.ones(x.size, dtype=int)
    a = rank_transform(raw_frame(t, x, y))
    b = rank_transform(raw_frame(t, fn(x / 1e5), y))
    np.testing.assert_array_equal(a.u, b.u)
    assert a.u.min() > 0 and a.u.max() < 1


def test_times_reindexed_contiguously():
    data = rank_transform(raw_frame([3, 3, 7, 7, 9, 9], np.arange(6.0), np.arange(6.0)[::-1]))
    assert data.T == 3
    assert data.t_idx.tolist() == [0, 0, 1, 1, 2, 2]


# --------------------------------------------------------------------------
# panel CSV
# --------------------------------------------------------------------------


def test_panel_round_trip(tmp_path):
    data, _ = simulate_panel(default_truth(4), 15, seed=2)
    write_panel(tmp_path / "p.csv", data)
    back = load_panel(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.u, data.u)
    np.testing.assert_array_equal(back.t_idx, data.t_idx)
    assert back.T == data.T


def test_malformed_csv_diagnostics(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,id,x1,x2\n1,1,0.5,0.3\n1,2,abc,0.4\n")
    with pytest.raises(PanelFormatError, match=r"'x1'.*\[3\]"):
        read_csv_panel(path)
    path.write_text("id,x1,x2\n1,0.5,0.3\n")
    with pytest.raises(PanelFormatError, match="'t'"):
        read_csv_panel(path)
    path.write_text("t,id,x1,x3\n1,1,0.5,0.3\n")
    with pytest.raises(PanelFormatError, match="contiguous"):
        read_csv_panel(path)
    path.write_text("t,id,foo\n1,1,0.5\n")
    with pytest.raises(PanelFormatError):
        read_csv_panel(path)
    path.write_text("")
    with pytest.raises(PanelFormatError):
        read_csv_panel(path)


def test_uniform_columns_must_be_interior(tmp_path):
    path = tmp_path / "u.csv"
    path.write_text("t,id,u1,u2\n1,1,0.5,0.3\n2,1,1.0,0.4\n")
    with pytest.raises(ValueError, match="t=2"):
        load_panel(path)
    # an explicit rank transform repairs boundary values
    data = load_panel(path, rank=True)
    assert data.u.max() < 1


def test_panel_helpers():
    data = PanelData.from_slices([np.full((3, 2), 0.5), np.full((2, 2), 0.25)])
    assert data.n_t.tolist() == [3, 2]
    np.testing.assert_array_equal(data.at(2), np.full((2, 2), 0.25))
    fit, test = data.split_per_time(2)
    assert fit.n_t.tolist() == [2, 2] and test.n_t.tolist() == [1, 0]
    assert data.first_times(1).T == 1
    with pytest.raises(ValueError):
        PanelData(np.full((2, 2), 0.5), np.array([0, 3]), 2)


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------


def test_default_truth_recursion():
    truth = default_truth(20)
    np.testing.assert_allclose(truth[0].weights, [0.4, 0.25, 0.25, 0.1])
    np.testing.assert_allclose(truth[1].weights, [0.38, 0.2625, 0.2575, 0.1], atol=1e-15)
    for p in truth:
        np.testing.assert_allclose(p.thetas, [5, 3, 4, 3])
        assert p.weights[2] == pytest.approx(1 - p.weights[0] - p.weights[1] - p.weights[3])
        assert p.weights.min() > 0


def test_simulate_panel_determinism_and_callable():
    a, ta = simulate_panel(default_truth(3), 20, seed=5)
    b, _ = simulate_panel(default_truth(3), 20, seed=5)
    np.testing.assert_array_equal(a.u, b.u)
    c, tc = simulate_panel(lambda t: default_truth(3)[t - 1], [5, 6, 7], seed=5, T=3)
    assert c.n_t.tolist() == [5, 6, 7] and len(tc) == 3

    def bad(t):
        return MixtureParams([0.5, 0.5, 0.1, 0.0], [1, 1, 1, 1]) if t == 2 else default_truth(1)[0]

    with pytest.raises(ValueError, match="t=2"):
        simulate_panel(bad, 5, seed=0, T=3)


def test_truth_round_trip(tmp_path):
    truth = default_truth(3)
    truth_frame(truth).to_csv(tmp_path / "truth.csv", index=False)
    back = read_truth(tmp_path / "truth.csv")
    for a, b in zip(truth, back):
        np.testing.assert_allclose(a.weights, b.weights)
        np.testing.assert_allclose(a.thetas, b.thetas)


def test_draws_round_trip(tmp_path):
    data, _ = simulate_panel(default_truth(3), 20, seed=1)
    draws = run_chain(data, PriorConfig.constant(2, 3, 3), build_lag_sets(3, q=1),
                      McmcConfig(iterations=120, burn_in=60, chains=2, seed=1))
    write_draws(tmp_path, draws)
    back = read_draws(tmp_path)
    for name in ("pi", "theta", "beta", "omega", "eta", "iteration", "chain"):
        np.testing.assert_array_equal(getattr(back, name), getattr(draws, name))
    head = pd.read_csv(tmp_path / "draws.csv", dtype={"component": str}).head(4)
    assert list(head.columns) == ["iteration", "chain", "t", "component", "pi", "theta"]
    assert head["component"].tolist() == ["00", "10", "01", "11"]
    assert list(pd.read_csv(tmp_path / "diagnostics.csv").columns[:3]) == ["batch", "kappa", "acceptance_rate"]
    assert back.provenance["mcmc"]["chains"] == 2


# --------------------------------------------------------------------------
# config and CLI
# --------------------------------------------------------------------------


def test_run_config_round_trip(tmp_path):
    cfg = RunConfig.from_dict({"m": 2, "prior": {"a_t": 5, "q": 2}, "mcmc": {"seed": 9}})
    assert cfg.prior.a_t == 5 and cfg.mcmc.seed == 9
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"config": cfg.to_dict()}))
    assert RunConfig.load(path).to_dict() == cfg.to_dict()
    with pytest.raises(ValueError):
        RunConfig.from_dict({"prior": {"nope": 1}})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus": 1})
    assert cfg.lag_structure(6).lag_set(6) == {6, 5, 4}
    assert cfg.prior_config(6).a.tolist() == [5] * 6


def _run(argv):
    assert cli.main(argv) == 0


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    _run(["simulate", "--T", "4", "--n-t", "30", "--seed", "3", "--output", str(out)])
    return out


def test_cli_simulate(sim_dir):
    panel = pd.read_csv(sim_dir / "panel.csv")
    assert list(panel.columns) == ["t", "id", "u1", "u2"] and len(panel) == 120
    truth = pd.read_csv(sim_dir / "truth.csv", dtype={"component": str})
    assert truth.shape[0] == 16
    man = json.loads((sim_dir / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["config"]["mcmc"]["seed"] == 3


def test_cli_fit_and_manifest_reproducibility(sim_dir, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    _run(["fit", "--input", str(sim_dir / "panel.csv"), "--at", "3", "--q", "1", "--iters", "200",
          "--burnin", "100", "--seed", "7", "--grid-n", "8", "--output", str(out1)])
    for name in ("draws.csv", "betas.csv", "diagnostics.csv", "summary.csv", "gof.json", "density_grid.csv"):
        assert (out1 / name).exists()
    gof = json.loads((out1 / "gof.json").read_text())
    assert gof["model"] == "M_{3,1,0}" and np.isfinite(gof["lpml"])
    _run(["fit", "--config", str(out1 / "manifest.json"), "--output", str(out2)])
    assert (out1 / "draws.csv").read_bytes() == (out2 / "draws.csv").read_bytes()
    assert (out1 / "betas.csv").read_bytes() == (out2 / "betas.csv").read_bytes()


def test_cli_fit_simple_clayton(sim_dir, tmp_path):
    _run(["fit", "--input", str(sim_dir / "panel.csv"), "--fixed-component", "00", "--iters", "100",
          "--burnin", "50", "--output", str(tmp_path)])
    dr = pd.read_csv(tmp_path / "draws.csv", dtype={"component": str})
    assert np.all(dr.loc[dr.component == "00", "pi"] == 1.0)
    assert json.loads((tmp_path / "gof.json").read_text())["model"] == "simple_clayton"


def test_cli_assess_with_lps(sim_dir, tmp_path):
    _run(["assess", "--input", str(sim_dir / "panel.csv"), "--at", "2", "--q", "1", "--iters", "100",
          "--burnin", "50", "--lps-from", "2", "--output", str(tmp_path)])
    gof = json.loads((tmp_path / "gof.json").read_text())
    assert [row["t"] for row in gof["lps"]] == [3, 4]
    assert all(np.isfinite(row["value"]) for row in gof["lps"])


def test_cli_assess_existing_fit(sim_dir, tmp_path):
    fit = tmp_path / "fit"
    _run(["fit", "--input", str(sim_dir / "panel.csv"), "--iters", "60", "--burnin", "30",
          "--output", str(fit)])
    _run(["assess", "--input", str(sim_dir / "panel.csv"), "--fit-dir", str(fit), "--output", str(tmp_path)])
    a = json.loads((fit / "gof.json").read_text())
    b = json.loads((tmp_path / "gof.json").read_text())
    assert a["lpml"] == pytest.approx(b["lpml"])


def test_cli_predict(sim_dir, tmp_path):
    _run(["predict", "--input", str(sim_dir / "panel.csv"), "--n-fit", "20", "--iters", "100",
          "--burnin", "50", "--output", str(tmp_path)])
    pred = pd.read_csv(tmp_path / "predictions.csv")
    assert len(pred) == 40 and pred["u2_hat"].between(0, 1).all()
    assert 0 < json.loads((tmp_path / "gof.json").read_text())["mse"] < 0.2


def test_cli_raw_input_rank_transformed(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(60, 2))
    df = pd.DataFrame({"t": np.repeat([1, 2, 3], 20), "id": np.tile(np.arange(20), 3),
                       "x1": x[:, 0] * 10, "x2": np.exp(x[:, 1])})
    df.to_csv(tmp_path / "raw.csv", index=False)
    _run(["fit", "--input", str(tmp_path / "raw.csv"), "--iters", "40", "--burnin", "20",
          "--rank-scope", "per-time", "--output", str(tmp_path / "o")])
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["config"]["io"]["rank_scope"] == "per-time"


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,id,x1\n1,1,zz\n")
    assert cli.main(["fit", "--input", str(bad), "--output", str(tmp_path / "o")]) == 2
    assert "non-numeric" in capsys.readouterr().err
    three = tmp_path / "three.csv"
    pd.DataFrame({"t": [1, 1, 1], "id": [1, 2, 3], "u1": [.2, .5, .7], "u2": [.3, .6, .1],
                  "u3": [.4, .5, .6]}).to_csv(three, index=False)
    assert cli.main(["fit", "--input", str(three), "--output", str(tmp_path / "o")]) == 2
    assert "m=3" in capsys.readouterr().err
    assert cli.main(["fit", "--input", str(tmp_path / "missing.csv"), "--output", str(tmp_path / "o")]) == 2


def test_parse_component():
    assert cli._parse_component("10", 2) == 1
    assert cli._parse_component("01", 2) == 2
    assert cli._parse_component("3", 2) == 3
    assert cli._parse_component("none", 2) is None
