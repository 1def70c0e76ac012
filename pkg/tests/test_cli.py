import json
import subprocess
import sys

import pytest

from wavebench.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from wavebench.scenario import ManifestError, load_manifest, parse_manifest, recipe_names, recipe_text

LINK = """
seed = 4

[[scenario]]
name = "fbmc"
equalizer = "MMSE"
evm_fraction = 0.04
snr_db = [0.0, 10.0]
frame = { scheme = "FBMC_QAM", N = 16, delta_t = 1.0, delta_f = 1.0, N_s = 16, M_grid = 5, Q = 80, T_s = 8.333333333333333e-06, constellation_order = 4 }
pulse = { kind = "PHYDYAS" }
channel = { profile = "ETU", doppler_hz = 0.0 }
monte_carlo = { n_channels = 2, n_symbols = 64 }

[[scenario]]
kind = "uplink"
name = "mimo"
U = 2
N_BS = [2, 4]
N_T = 12
pulse = { kind = "RRC", rolloff = 0.2, span_symbols = 8 }
inputs = "constellation"
constellation_order = 4
channel = { profile = "ETU" }
snr_db = [0.0, 10.0]
monte_carlo = { n_channels = 2, n_symbols = 100 }
"""

FRAME_OQAM = 'frame = { scheme = "FBMC_OQAM", N = 16, delta_t = 0.5, delta_f = 1.0, N_s = 8, M_grid = 10, Q = 160, constellation_order = 4 }'
FRAME_TFS = 'frame = { scheme = "TFS_QAM", N = 16, delta_t = 1.2, delta_f = 1.0, N_s = 16, M_grid = 6, Q = 80, constellation_order = 4 }'
FRAME_GRID = 'frame = { scheme = "FBMC_QAM", N = 16, delta_t = 1.0, delta_f = 1.0, N_s = 16, M_grid = 5, Q = 96, constellation_order = 4 }'


def one(frame, name="s", extra=""):
    return f"""seed = 1
[[scenario]]
name = "{name}"
snr_db = [10.0]
{frame}
pulse = {{ kind = "PHYDYAS" }}
{extra}
monte_carlo = {{ n_channels = 1, n_symbols = 64 }}
"""


@pytest.fixture
def write(tmp_path):
    def _write(text, name="m.toml"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return _write


def test_parse_expands_uplink_lists():
    m = parse_manifest(LINK)
    assert [j.name for j in m.jobs] == ["fbmc", "mimo-nbs2", "mimo-nbs4"]
    assert [j.kind for j in m.jobs] == ["link", "uplink", "uplink"]
    assert m.jobs[0].scenario.seed == 4


def test_oqam_boundary_density_accepted(write, capsys):
    assert main(["validate", write(one(FRAME_OQAM))]) == EXIT_OK
    assert "all constraints satisfied" in capsys.readouterr().out


def test_tfs_above_unit_density_rejected(write, capsys):
    assert main(["validate", write(one(FRAME_TFS))]) == EXIT_INVALID
    out = capsys.readouterr().out
    assert "FAIL delta_t*delta_f < 1" in out


def test_misaligned_grid_prints_identity(write, capsys):
    assert main(["validate", write(one(FRAME_GRID))]) == EXIT_INVALID
    out = capsys.readouterr().out
    line = next(l for l in out.splitlines() if "Q*delta_f*delta_t = M_grid*N_s" in l)
    assert line.lstrip().startswith("FAIL") and "96" in line and "80" in line


def test_validate_lists_every_check(write, capsys):
    main(["validate", write(LINK)])
    out = capsys.readouterr().out
    assert "[fbmc]" in out and "[mimo-nbs4]" in out
    assert out.count("ok  ") >= 10


def test_run_rejects_invalid_manifest_without_output(write, tmp_path):
    out = tmp_path / "out"
    assert main(["run", write(one(FRAME_TFS)), "--out", str(out)]) == EXIT_INVALID
    assert not out.exists()


def test_empty_manifest_warns_and_succeeds(write, tmp_path, caplog):
    out = tmp_path / "out"
    assert main(["run", write("seed = 1\n"), "--out", str(out)]) == EXIT_OK
    assert not out.exists()
    assert any("no scenarios" in r.message for r in caplog.records)


def test_parse_error_reports_location(write, caplog):
    assert main(["validate", write('seed = 1\n[[scenario]]\nname = "x"\nsnr_db = [1.0,\n')]) == EXIT_INVALID
    assert any("line" in r.message or "end of document" in r.message for r in caplog.records)


def test_unknown_field_named():
    with pytest.raises(ManifestError, match=r"scenario\[0\].*bogus"):
        parse_manifest(one(FRAME_OQAM, extra="bogus = 3"))


def test_duplicate_names_rejected():
    text = one(FRAME_OQAM) + one(FRAME_OQAM).split("\n", 1)[1]
    with pytest.raises(ManifestError, match="s"):
        parse_manifest(text)


def test_missing_file_is_invalid(tmp_path):
    assert main(["validate", str(tmp_path / "nope.toml")]) in (EXIT_INVALID, EXIT_RUNTIME)


def test_run_writes_csvs_and_summary(write, tmp_path):
    out = tmp_path / "out"
    assert main(["run", write(LINK), "--out", str(out)]) == EXIT_OK
    for name in ("fbmc", "mimo-nbs2", "mimo-nbs4"):
        lines = (out / f"{name}.csv").read_text().splitlines()
        assert lines[0].startswith("scenario_id,snr_db,ase")
        assert len(lines) == 3
    summary = json.loads((out / "run_summary.json").read_text())
    assert summary["seed"] == 4
    assert {s["name"] for s in summary["scenarios"]} == {"fbmc", "mimo-nbs2", "mimo-nbs4"}
    assert "numpy" in summary["versions"] and "wall_time_s" in summary


def test_same_seed_gives_identical_csvs(write, tmp_path):
    path = write(LINK)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for d in (a, b):
        assert main(["run", path, "--out", str(d)]) == EXIT_OK
    assert main(["run", path, "--out", str(c), "--seed", "99"]) == EXIT_OK
    for name in ("fbmc.csv", "mimo-nbs2.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
        assert (a / name).read_bytes() != (c / name).read_bytes()


def test_overrides_change_monte_carlo_size(write, tmp_path):
    out = tmp_path / "o"
    assert main(["run", write(LINK), "--out", str(out), "--n-channels", "1", "--n-symbols", "32"]) == EXIT_OK
    summary = json.loads((out / "run_summary.json").read_text())
    assert all(s["n_channels"] == 1 and s["n_symbols"] == 32 for s in summary["scenarios"])


def test_shipped_recipes_cover_every_figure():
    assert recipe_names() == ["fig2", "fig3", "fig4", "fig5", "fig7", "fig8"]
    fig3 = parse_manifest(recipe_text("fig3"))
    for job in fig3.jobs:
        cfg = job.scenario.config
        assert cfg.N == 128 or cfg.scheme.name == "SCM"
        assert job.scenario.profile.doppler_hz == 30e3
    fig5 = {j.name: j.scenario.config for j in parse_manifest(recipe_text("fig5")).jobs}
    assert fig5["tfs-both"].delta_t == pytest.approx(0.9) and fig5["tfs-both"].delta_f == pytest.approx(0.95)


@pytest.mark.parametrize("name", ["fig2", "fig3", "fig4", "fig5", "fig7", "fig8"])
def test_recipes_validate(name, capsys):
    assert main(["validate", name]) == EXIT_OK


def test_recipes_command(capsys):
    assert main(["recipes"]) == EXIT_OK
    assert capsys.readouterr().out.split() == recipe_names()
    assert main(["recipes", "fig8"]) == EXIT_OK
    assert "FULL_ISI" in capsys.readouterr().out
    assert main(["recipes", "fig99"]) == EXIT_INVALID


def test_load_manifest_roundtrip(write):
    m = load_manifest(write(LINK))
    assert m.path.endswith("m.toml") and len(m.jobs) == 3


def test_console_script_entry_point(write):
    proc = subprocess.run([sys.executable, "-m", "wavebench.cli", "-v", "validate", write(one(FRAME_OQAM))],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_OK
    assert "all constraints satisfied" in proc.stdout
