import json

import pytest

from hdent import tagstream, witness
from hdent.cli import main

SMALL_CONFIG = """
[run]
experiment = timebin
output = {out}

[source]
pair_rate = 3e6
background_rates = 0, 6e6
jitter_fwhm_seconds = 0
p_mix = 1.0
franson_phase = pi
state_dim = 80

[binning]
dims = 10, 20

[sweep]
n_frames = 4000
seed = 3
resamples = 8
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(SMALL_CONFIG.format(out=tmp_path / "out"))
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestLinkBudget:
    def test_reference_values(self, capsys):
        assert run_cli("link-budget", "--db", "82", "102") == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "# hdent-linkbudget-csv v1"
        assert out[2] == "82,410" and out[3] == "102,510"

    def test_km_to_db(self, capsys):
        assert run_cli("link-budget", "--km", "410") == 0
        assert "82,410" in capsys.readouterr().out


class TestErrors:
    def test_machine_readable_error(self, capsys):
        code = run_cli("certify-et", "--hv", "/no/such.hdtt", "--da", "/no/such.hdtt",
                       "--dims", "10")
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert "error" in err and "message" in err


class TestSimulateAndCertify:
    def test_simulate_is_reproducible(self, small_config, tmp_path, capsys):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli("simulate-tags", "--config", small_config, "--out", out1) == 0
        assert run_cli("simulate-tags", "--config", small_config, "--out", out2) == 0
        names = sorted(p.name for p in out1.glob("*.hdtt"))
        assert names == [
            "tags_p000_da.hdtt",
            "tags_p000_hv.hdtt",
            "tags_p001_da.hdtt",
            "tags_p001_hv.hdtt",
        ]
        for name in names:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        manifest = (out1 / "manifest.csv").read_text()
        assert manifest.startswith("# hdent-manifest-csv v1")
        assert manifest == (out2 / "manifest.csv").read_text()

    def test_certify_matches_library_calls(self, small_config, tmp_path, capsys):
        out = tmp_path / "tags"
        run_cli("simulate-tags", "--config", small_config, "--out", out)
        capsys.readouterr()
        code = run_cli(
            "certify-et",
            "--hv", out / "tags_p000_hv.hdtt",
            "--da", out / "tags_p000_da.hdtt",
            "--dims", "10,20,40,80",
            "--resamples", "8",
            "--out", tmp_path / "reports",
        )
        assert code == 0
        reports = json.loads(capsys.readouterr().out)
        assert set(reports) == {"10", "20", "40", "80"}  # one per discretization
        hv = tagstream.read_tags(out / "tags_p000_hv.hdtt")
        da = tagstream.read_tags(out / "tags_p000_da.hdtt")
        for d in (10, 20, 40, 80):
            binning = tagstream.BinningConfig.for_dimension(hv.clock, d)
            expected = witness.witness_from_counts(
                tagstream.sift_and_bin(hv, binning, "HV"),
                tagstream.sift_and_bin(da, binning, "DA"),
                d,
                binning.f_shift,
            )
            got = reports[str(d)]
            assert got["witness_lower_bound"] == expected.witness_lower_bound
            assert got["certified"] == expected.certified
        on_disk = json.loads((tmp_path / "reports" / "witness_d10.json").read_text())
        assert on_disk == reports["10"]
        summary = (tmp_path / "reports" / "certify_summary.csv").read_text().splitlines()
        assert summary[0] == "# hdent-sweep-csv v1"
        assert summary[1].startswith("d_or_k,")

    def test_certify_rejects_bad_dimension(self, small_config, tmp_path, capsys):
        out = tmp_path / "tags"
        run_cli("simulate-tags", "--config", small_config, "--out", out)
        capsys.readouterr()
        code = run_cli(
            "certify-et",
            "--hv", out / "tags_p000_hv.hdtt",
            "--da", out / "tags_p000_da.hdtt",
            "--dims", "30",
        )
        assert code == 1

    def test_resample_command(self, small_config, tmp_path, capsys):
        out = tmp_path / "tags"
        run_cli("simulate-tags", "--config", small_config, "--out", out)
        capsys.readouterr()
        code = run_cli(
            "resample",
            "--hv", out / "tags_p000_hv.hdtt",
            "--da", out / "tags_p000_da.hdtt",
            "--dim", "10",
            "--resamples", "8",
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_resamples"] == 8
        assert payload["three_sigma"] == pytest.approx(3 * payload["sigma"])


class TestMubSweep:
    def test_sweep_csv_and_thresholds(self, tmp_path, capsys):
        code = run_cli(
            "mub-sweep", "--dim", "3", "--k", "2,3,4", "--grid", "0:0.9:7",
            "--counts", "1e5", "--resamples", "10", "--out", tmp_path,
        )
        assert code == 0
        lines = (tmp_path / "mub_sweep.csv").read_text().splitlines()
        assert lines[0] == "# hdent-sweep-csv v1"
        header = lines[1].split(",")
        rows = [dict(zip(header, line.split(","))) for line in lines[2:]]
        # certified region shrinks as k decreases
        certified_nf = {
            k: max(
                (float(r["noise_setting"]) for r in rows
                 if r["d_or_k"] == str(k) and r["certified"] == "1"),
                default=-1.0,
            )
            for k in (2, 3, 4)
        }
        assert certified_nf[2] < certified_nf[3] < certified_nf[4]
        thresholds = json.loads((tmp_path / "mub_thresholds.json").read_text())
        for k in (2, 3, 4):
            assert thresholds[str(k)]["exact_nf_star"] == pytest.approx(1 - 1 / k, abs=2e-6)
            assert thresholds[str(k)]["scan"]["nf_star"] == pytest.approx(1 - 1 / k, abs=0.01)

    def test_full_mub_set_runs_for_small_primes(self, tmp_path, capsys):
        for d in (2, 5):
            code = run_cli(
                "mub-sweep", "--dim", d, "--k", str(d + 1), "--grid", "0:0.8:4",
                "--counts", "1e4", "--resamples", "5",
                "--out", tmp_path / f"d{d}",
            )
            assert code == 0

    def test_empty_grid_fails(self, tmp_path, capsys):
        code = run_cli(
            "mub-sweep", "--dim", "3", "--k", "4", "--grid", "bogus",
            "--out", tmp_path,
        )
        assert code == 1

    def test_matrix_export(self, tmp_path, capsys):
        run_cli(
            "mub-sweep", "--dim", "2", "--k", "3", "--grid", "0:0.5:2",
            "--counts", "1e4", "--resamples", "5", "--out", tmp_path,
            "--export-matrices",
        )
        exported = sorted(p.name for p in tmp_path.glob("corr_*.csv"))
        assert len(exported) == 6  # 2 grid points x 3 bases


class TestSweepNoise:
    def test_worker_count_does_not_change_output(self, small_config, tmp_path, capsys):
        outs = {}
        for workers in (1, 2):
            out = tmp_path / f"w{workers}"
            code = run_cli(
                "sweep-noise", "--config", small_config, "--out", out,
                "--workers", workers,
            )
            assert code == 0
            outs[workers] = (out / "sweep.csv").read_bytes()
            assert (out / "thresholds.json").exists()
        assert outs[1] == outs[2]
        lines = outs[1].decode().splitlines()
        assert lines[0] == "# hdent-sweep-csv v1"
        assert len(lines) == 2 + 2 * 2  # two rates x two dims
