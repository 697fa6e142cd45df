import json
import math
from pathlib import Path

import numpy as np
import pytest

from logitbandits import harness
from logitbandits.agents import OFULogPlus
from logitbandits.confidence import polygon_contains
from logitbandits.errors import ConfigurationError, SolverError
from logitbandits.harness import (
    AGG_COLUMNS,
    RUN_COLUMNS,
    ExperimentConfig,
    aggregate,
    config_from_mapping,
    main,
    read_config_file,
    read_csv,
    run_experiment,
    run_single,
)

GOLDEN = Path(__file__).parent / "golden"


def tiny(tmp_path, **kw):
    base = dict(d=2, S=3.0, T=6, arms=4, seeds=2, base_seed=11, out=str(tmp_path))
    base.update(kw)
    return config_from_mapping(base)


class TestConfig:
    def test_file_parsing(self):
        vals = read_config_file(GOLDEN / "tiny.cfg")
        assert vals == {"model": "logistic", "algo": "ofulogplus", "d": 2, "S": 3.0, "T": 6,
                        "arms": 4, "seeds": 2, "base_seed": 11}

    def test_dashes_and_lists(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("snapshot-rounds = 1, 5\nradius-scale=2.5  # inline comment\n\ntiming = yes\n")
        vals = read_config_file(p)
        assert vals == {"snapshot_rounds": (1, 5), "radius_scale": 2.5, "timing": True}

    def test_bad_lines(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("T 10\n")
        with pytest.raises(ConfigurationError):
            read_config_file(p)
        p.write_text("horizon = 10\n")
        with pytest.raises(ConfigurationError):
            read_config_file(p)

    @pytest.mark.parametrize("kw", [{"delta": 0.0}, {"T": 0}, {"seeds": 0}, {"model": "probit"},
                                    {"algo": "mnl_ucb_plus"}, {"snapshot_rounds": (7,)},
                                    {"snapshot_rounds": (1,), "d": 3}, {"S": -1.0}])
    def test_validation(self, kw):
        with pytest.raises(ConfigurationError):
            config_from_mapping({"T": 6, **kw})

    def test_flags_override_file(self, tmp_path):
        parser = harness._build_parser()
        ns = parser.parse_args(["run", "--config", str(GOLDEN / "tiny.cfg"), "--T", "3", "--S", "5"])
        cfg = harness.config_from_args(ns)
        assert cfg.T == 3 and cfg.S == 5.0 and cfg.arms == 4 and cfg.base_seed == 11


class TestRun:
    def test_single_round(self, tmp_path):
        run_experiment(tiny(tmp_path, T=1, seeds=1))
        header, data = read_csv(tmp_path / "run_seed11.csv")
        assert tuple(header) == RUN_COLUMNS
        assert data.shape == (1, len(RUN_COLUMNS))

    def test_golden(self, tmp_path):
        run_experiment(tiny(tmp_path))
        for name in ("run_seed11.csv", "run_seed12.csv", "aggregate.csv"):
            got_h, got = read_csv(tmp_path / name)
            ref_h, ref = read_csv(GOLDEN / name)
            assert got_h == ref_h
            np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-12, equal_nan=True)

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_experiment(tiny(a, snapshot_rounds=(1, 4)))
        run_experiment(tiny(b, snapshot_rounds=(1, 4)))
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        for name in names:
            if name == "run_meta.json":
                ma, mb = (json.loads((d / name).read_text()) for d in (a, b))
                ma["config"].pop("out"), mb["config"].pop("out")
                assert ma == mb
            else:
                assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_rows_and_prefix_sums(self, tmp_path):
        records, agg = run_experiment(tiny(tmp_path, T=20, seeds=3), write=False)
        for rec in records:
            rows = np.array(rec.rows, dtype=float)
            np.testing.assert_array_equal(rows[:, 1], np.arange(1, 21))
            np.testing.assert_allclose(np.cumsum(rows[:, 3]), rows[:, 4], atol=1e-12)
            assert np.all(rows[:, 3] >= 0)
        cum = np.vstack([r.cum_regret for r in records])
        np.testing.assert_allclose([row[1] for row in agg], cum.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose([row[2] for row in agg], cum.std(axis=0, ddof=1) / math.sqrt(3),
                                   atol=1e-12)
        assert np.all(np.diff([row[1] for row in agg]) >= 0)

    def test_aggregate_columns(self, tmp_path):
        run_experiment(tiny(tmp_path))
        header, data = read_csv(tmp_path / "aggregate.csv")
        assert tuple(header) == AGG_COLUMNS
        assert data.shape == (6, 4)

    def test_timing_column(self, tmp_path):
        rec = run_single(tiny(tmp_path, timing=True), 0)
        assert all(r[7] >= 0 for r in rec.rows)
        rec = run_single(tiny(tmp_path), 0)
        assert all(math.isnan(r[7]) for r in rec.rows)

    def test_other_algorithms(self, tmp_path):
        for algo in ("eps_greedy", "radius_scaled", "uniform"):
            recs, _ = run_experiment(tiny(tmp_path, algo=algo, seeds=1), write=False)
            assert len(recs[0].rows) == 6 and not recs[0].failed
        recs, _ = run_experiment(tiny(tmp_path, model="mnl", algo="mnl_ucb_plus", K=2, seeds=1,
                                      kappa=30.0), write=False)
        assert len(recs[0].rows) == 6

    def test_failed_seed_recorded(self, tmp_path, monkeypatch):
        original = OFULogPlus.choose

        def flaky(self, arm_set):
            if self.t == 3 and len(self.history) == 2 and self.history.rewards.sum() >= 0:
                raise SolverError("forced failure")
            return original(self, arm_set)

        monkeypatch.setattr(OFULogPlus, "choose", flaky)
        records, agg = run_experiment(tiny(tmp_path))
        assert all(r.failed and len(r.rows) == 2 for r in records)
        assert agg == []
        meta = json.loads((tmp_path / "run_meta.json").read_text())
        assert meta["failed_seeds"] == [11, 12]


class TestSnapshots:
    def test_round_one_circle_and_schema(self, tmp_path):
        run_experiment(tiny(tmp_path, snapshot_rounds=(1, 6)))
        snap = json.loads((tmp_path / "snapshot_t1.json").read_text())
        assert set(snap) == {"round", "mle", "theta_star", "boundary", "radius_sq"}
        pts = np.array(snap["boundary"])
        assert pts.shape == (256, 2)
        np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 3.0, atol=1e-6)
        assert snap["round"] == 1 and len(snap["mle"]) == 2 and len(snap["theta_star"]) == 2
        assert (tmp_path / "snapshot_t6.json").exists()
        assert not any("seed12" in p.name for p in tmp_path.glob("snapshot*"))

    def test_scaled_snapshot_contains_plain(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_experiment(tiny(a, T=60, seeds=1, snapshot_rounds=(60,), S=5.0, arms=20))
        run_experiment(tiny(b, T=60, seeds=1, snapshot_rounds=(60,), S=5.0, arms=20,
                            algo="radius_scaled"))
        inner = np.array(json.loads((a / "snapshot_t60.json").read_text())["boundary"])
        outer = np.array(json.loads((b / "snapshot_t60.json").read_text())["boundary"])
        # both sets touch the ball; there the outer polygon is inscribed in the circle and a
        # chord of length c sits at most c^2 / (8 S) inside it
        chords = np.linalg.norm(np.roll(outer, -1, axis=0) - outer, axis=1)
        sagitta = chords.max() ** 2 / (8 * 5.0)
        assert polygon_contains(outer, inner, tol=sagitta + 1e-9).all()


class TestCLI:
    def test_run_exit_zero(self, tmp_path, capsys):
        rc = main(["--config", str(GOLDEN / "tiny.cfg"), "--out", str(tmp_path), "--T", "2"])
        assert rc == 0
        assert "final mean cumulative regret" in capsys.readouterr().out
        assert (tmp_path / "run_seed12.csv").exists()

    def test_config_error_exit_two(self, tmp_path, capsys):
        assert main(["run", "--T", "0", "--out", str(tmp_path)]) == 2
        assert "configuration error" in capsys.readouterr().err

    def test_failed_seed_exit_one(self, tmp_path, monkeypatch):
        def broken(self, arm_set):
            raise SolverError("forced failure")

        monkeypatch.setattr(OFULogPlus, "choose", broken)
        assert main(["run", "--config", str(GOLDEN / "tiny.cfg"), "--out", str(tmp_path)]) == 1

    def test_verify(self, tmp_path, capsys):
        out = tmp_path / "v.json"
        rc = main(["verify", "--check", "poly_inequality", "--trials", "200", "--seed", "1",
                   "--out", str(out)])
        assert rc == 0
        assert capsys.readouterr().out.startswith("PASS poly_inequality")
        payload = json.loads(out.read_text())
        assert payload["seed"] == 1 and payload["checks"][0]["name"] == "poly_inequality"

    def test_verify_unknown_check(self, tmp_path):
        assert main(["verify", "--check", "nope", "--out", str(tmp_path / "v.json")]) == 2
