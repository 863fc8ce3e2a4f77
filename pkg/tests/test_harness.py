import subprocess
import sys

import numpy as np
import pytest

from fbq_sim.cli import main
from fbq_sim.config import ConfigError, load_config, parse_config_text
from fbq_sim.harness import (ResultTable, run_bit_alloc_compare, run_bit_shares,
                             run_distortion, run_outage_audit, run_sdp_vs_bound)

SHARES_CFG = """
experiment = bit-shares
M = 3
gamma_db = 2,5,8
q = 0.1,0.1,0.1
B = 60:120:12
seed = 3
"""

SDP_CFG = """
experiment = sdp-vs-bound
M = 3
gamma_db = 3,6,6
dir_sizes = 64
n_trials = 8
seed = 11
"""

AUDIT_CFG = """
experiment = outage-audit
M = 3
q = 0.02,0.05,0.1
mag_sizes = 16,16,16
dir_sizes = 64,64,64
n_trials = 20000
seed = 5
"""


class TestConfig:
    def test_round_trip_fields(self):
        cfg = parse_config_text(SHARES_CFG)
        assert cfg.experiment == "bit-shares"
        assert cfg.B == tuple(range(60, 121, 12))
        assert cfg.gamma_db == (2.0, 5.0, 8.0)
        assert abs(cfg.gammas[2] - 10**0.8) < 1e-12

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text(SHARES_CFG + "\nbogus = 1\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text(SHARES_CFG + "\nseed = 4\n")

    def test_per_user_lengths_enforced(self):
        bad = SHARES_CFG.replace("q = 0.1,0.1,0.1", "q = 0.1,0.1")
        with pytest.raises(ConfigError, match="exactly 3"):
            parse_config_text(bad)

    def test_budget_forms(self):
        assert parse_config_text(SHARES_CFG.replace("60:120:12", "64")).B == (64,)
        assert parse_config_text(SHARES_CFG.replace("60:120:12", "64,70")).B == (64, 70)
        with pytest.raises(ConfigError):
            parse_config_text(SHARES_CFG.replace("60:120:12", "120:60:12"))

    def test_experiment_requirements(self):
        with pytest.raises(ConfigError, match="dir_sizes"):
            parse_config_text("experiment = sdp-vs-bound\nM = 3\ngamma_db = 3,6,6\nn_trials = 5\n")
        with pytest.raises(ConfigError, match="n_trials"):
            parse_config_text(AUDIT_CFG.replace("n_trials = 20000", "n_trials = 100"))

    def test_load_from_file(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text(SHARES_CFG)
        assert load_config(p) == parse_config_text(SHARES_CFG)


class TestResultTable:
    def test_float_formatting_round_trips(self):
        t = ResultTable(columns=["a", "b"], rows=[(1, 0.1 + 0.2)], meta={"k": "v"})
        text = t.to_csv_text()
        assert "# k = v" in text
        val = float(text.strip().splitlines()[-1].split(",")[1])
        assert val == 0.1 + 0.2  # 17 significant digits survive the trip

    def test_column_accessor(self):
        t = ResultTable(columns=["x", "y"], rows=[(1, 2.0), (3, 4.0)])
        assert np.array_equal(t.column("y"), [2.0, 4.0])


class TestBitExperiments:
    def test_bit_shares_ordering(self):
        cfg = parse_config_text(SHARES_CFG)
        table = run_bit_shares(cfg)
        for row in table.rows:
            d = dict(zip(table.columns, row))
            if not d["cf_ok"]:
                continue
            assert d["share_3"] > d["share_2"] > d["share_1"]
            assert abs(d["share_cont_1"] + d["share_cont_2"] + d["share_cont_3"]
                       - d["B"]) < 1e-9
        # equal-q users: pairwise share differences are B independent
        diffs = [r[table.columns.index("share_cont_3")]
                 - r[table.columns.index("share_cont_1")] for r in table.rows]
        assert np.ptp(diffs) < 1e-9
        assert abs(diffs[0] - 3.0 * np.log2(10**0.6)) < 1e-9

    def test_homogeneous_shares_are_equal(self):
        cfg = parse_config_text(SHARES_CFG.replace("2,5,8", "5,5,5"))
        table = run_bit_shares(cfg)
        for row in table.rows:
            d = dict(zip(table.columns, row))
            assert d["share_cont_1"] == d["share_cont_2"] == d["share_cont_3"]

    def test_bit_alloc_compare_budget_rows(self, dist3):
        cfg = parse_config_text("""
experiment = bit-alloc-compare
M = 3
gamma_db = 15,10,10
q = 0.02,0.05,0.05
B = 60,70
seed = 2
""")
        table = run_bit_alloc_compare(cfg)
        for row in table.rows:
            d = dict(zip(table.columns, row))
            assert d["cf_ok"] == 1
            cont = sum(d[f"cf_mag_cont_{k}"] + d[f"cf_dir_cont_{k}"] for k in (1, 2, 3))
            assert abs(cont - d["B"]) < 1e-9
            num = sum(d[f"num_mag_{k}"] + d[f"num_dir_{k}"] for k in (1, 2, 3))
            assert num == d["B"]
            # the high-QoS user outspends the others on directions
            assert d["num_dir_1"] > d["num_dir_2"]
            assert d["cf_dir_cont_1"] > d["cf_dir_cont_2"]

    def test_distortion_table_relations(self):
        cfg = parse_config_text("""
experiment = distortion
M = 3
gamma_db = 2,5,8
q = 0.1,0.1,0.1
B = 72:108:9
seed = 2
""")
        table = run_distortion(cfg)
        for row in table.rows:
            d = dict(zip(table.columns, row))
            assert d["d_numerical"] <= d["d_cf_rounded"] + 1e-9
            assert d["d_bound"] >= d["d_cf_simplified"]


class TestSdpVsBound:
    def test_small_run_properties(self):
        cfg = parse_config_text(SDP_CFG)
        table = run_sdp_vs_bound(cfg)
        d = dict(zip(table.columns, table.rows[0]))
        assert d["n_effective"] == 8
        assert d["n_sdp_failures"] == 0
        assert d["mean_bound"] >= d["mean_sdp"]
        assert d["mean_rel_gap"] >= 0.0
        assert 0.0 <= d["exclusion_rate"] < 1.0

    def test_threads_do_not_change_bytes(self):
        cfg = parse_config_text(SDP_CFG)
        a = run_sdp_vs_bound(cfg, threads=1).to_csv_text()
        b = run_sdp_vs_bound(cfg, threads=3).to_csv_text()
        assert a == b

    def test_impossible_point_reports_zero_effective(self):
        cfg = parse_config_text(SDP_CFG.replace("dir_sizes = 64", "dir_sizes = 8")
                                .replace("n_trials = 8", "n_trials = 3"))
        table = run_sdp_vs_bound(cfg)
        d = dict(zip(table.columns, table.rows[0]))
        assert d["n_effective"] == 0
        assert d["flagged"] == 1
        assert np.isnan(d["mean_sdp"])


def test_outage_audit_decomposition():
    cfg = parse_config_text(AUDIT_CFG)
    table = run_outage_audit(cfg)
    for row in table.rows:
        d = dict(zip(table.columns, row))
        # exact union: off-rate between each component and their sum
        assert d["p_off"] <= d["p_mag_outage"] + d["p_dir_outage"] + 1e-12
        assert d["p_off"] >= max(d["p_mag_outage"], d["p_dir_outage"]) - 1e-12
        # magnitude side calibrated at q/2 by construction
        assert abs(d["p_mag_outage"] - d["q_target"] / 2) < 4 * d["se_mag"] + 1e-3


class TestDeterminism:
    def test_identical_config_identical_bytes(self):
        cfg = parse_config_text(SHARES_CFG)
        assert run_bit_shares(cfg).to_csv_text() == run_bit_shares(cfg).to_csv_text()
        cfg2 = parse_config_text(SDP_CFG)
        assert run_sdp_vs_bound(cfg2).to_csv_text() == run_sdp_vs_bound(cfg2).to_csv_text()

    def test_seed_changes_monte_carlo_output(self):
        cfg = parse_config_text(SDP_CFG)
        import dataclasses
        other = dataclasses.replace(cfg, seed=12)
        assert run_sdp_vs_bound(cfg).to_csv_text() != run_sdp_vs_bound(other).to_csv_text()


class TestCli:
    def test_run_writes_csv(self, tmp_path):
        cfg = tmp_path / "sh.cfg"
        cfg.write_text(SHARES_CFG)
        out = tmp_path / "o.csv"
        rc = main(["run", "bit-shares", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        text = out.read_text()
        assert text.startswith("# fbq-sim")
        assert "share_1" in text

    def test_seed_override_changes_meta(self, tmp_path):
        cfg = tmp_path / "sh.cfg"
        cfg.write_text(SHARES_CFG)
        out = tmp_path / "o.csv"
        main(["run", "bit-shares", "--config", str(cfg), "--seed", "77", "--out", str(out)])
        assert "# seed = 77" in out.read_text()

    def test_bad_config_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(SHARES_CFG + "\nbogus = 1\n")
        assert main(["run", "bit-shares", "--config", str(cfg)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_wrong_experiment_name_exits_2(self, tmp_path):
        cfg = tmp_path / "sh.cfg"
        cfg.write_text(SHARES_CFG)
        assert main(["run", "distortion", "--config", str(cfg)]) == 2

    def test_missing_file_exits_2(self, tmp_path):
        assert main(["run", "bit-shares", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_allocate_success(self, capsys):
        rc = main(["allocate", "--M", "3", "--B", "90",
                   "--gamma-db", "2,5,8", "--q", "0.1,0.1,0.1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].startswith("user,")
        assert len(out.strip().splitlines()) == 4

    def test_allocate_below_regime_exits_3(self, capsys):
        rc = main(["allocate", "--M", "3", "--B", "30",
                   "--gamma-db", "2,5,8", "--q", "0.1,0.1,0.1"])
        assert rc == 3
        err = capsys.readouterr().err
        assert "sufficient total rate" in err

    def test_allocate_numerical_column(self, capsys):
        rc = main(["allocate", "--M", "3", "--B", "90",
                   "--gamma-db", "2,5,8", "--q", "0.1,0.1,0.1", "--numerical"])
        assert rc == 0
        assert "numerical minimization" in capsys.readouterr().out

    def test_check_mqcs(self, capsys):
        rc = main(["check-mqcs", "--M", "3", "--gamma-db", "10", "--q", "0.05"])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].startswith("user,")
        # providing too few direction bits flags infeasibility
        rc = main(["check-mqcs", "--M", "3", "--gamma-db", "10", "--q", "0.05",
                   "--dir-bits", "4"])
        assert rc == 3

    def test_entry_point_script(self, tmp_path):
        cfg = tmp_path / "sh.cfg"
        cfg.write_text(SHARES_CFG)
        proc = subprocess.run([sys.executable, "-m", "fbq_sim.cli", "run", "bit-shares",
                               "--config", str(cfg)], capture_output=True, text=True)
        assert proc.returncode == 0
        assert proc.stdout.startswith("# fbq-sim")
