import hashlib
import json
import subprocess
import sys

import pytest

from sbpwave.cli import main
from sbpwave.mesh import generate_circle_mesh, save_mesh, two_block_square_mesh


@pytest.fixture(scope="module")
def circle_mesh_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("meshes") / "circle1.json"
    save_mesh(generate_circle_mesh(1), path)
    return path


@pytest.fixture(scope="module")
def two_block_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("meshes") / "two_block.json"
    save_mesh(two_block_square_mesh(), path)
    return path


def _config(tmp_path, **overrides):
    cfg = {
        "p": 5,
        "c": 1.0,
        "sigma": 0.04,
        "t_source": 0.1,
        "source_xy": [0.0, 0.0],
        "t_end": 0.3,
        "cfl_fraction": 0.2,
        "snapshot_every": 25,
        "boundary_conditions": {"outer": "dirichlet"},
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


# ---------------------------------------------------------------------------
# verify


def test_verify_passes(capsys):
    assert main(["verify", "--p", "5", "--pairs", "5"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "[FAIL]" not in out


def test_verify_perturbed_weights_fail(capsys):
    assert main(["verify", "--p", "5", "--pairs", "2", "--perturb-weights"]) == 1
    assert "[FAIL]" in capsys.readouterr().out


def test_verify_usage_errors():
    assert main(["verify", "--p", "4"]) == 2
    assert main(["verify", "--p", ""]) == 2
    assert main(["verify", "--p", "five"]) == 2


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2


# ---------------------------------------------------------------------------
# converge


def test_converge_writes_csv_and_figure(tmp_path, capsys):
    out = tmp_path / "conv.csv"
    assert main([
        "converge", "--p", "5", "--levels", "2", "--out", str(out),
        "--start-refinement", "1",
    ]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "p,n_blocks,N_dofs,l2_error,log10_error,rate_q"
    assert len(lines) == 3  # header + one row per level
    first = lines[1].split(",")
    assert first[0] == "5" and first[1] == "20" and first[2] == "521"
    assert first[5] == "nan"  # no rate on the first level
    errors = [float(line.split(",")[3]) for line in lines[1:]]
    assert errors[1] < errors[0]
    assert (tmp_path / "conv.png").exists()


def test_converge_deterministic(tmp_path):
    out_a = tmp_path / "a.csv"
    out_b = tmp_path / "b.csv"
    assert main(["converge", "--p", "5", "--levels", "2", "--out", str(out_a)]) == 0
    assert main(["converge", "--p", "5", "--levels", "2", "--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_converge_rejects_single_level(tmp_path):
    assert main(["converge", "--p", "5", "--levels", "1", "--out", str(tmp_path / "x.csv")]) == 2


# ---------------------------------------------------------------------------
# run


def test_run_zero_amplitude_snapshots_are_zero(tmp_path, circle_mesh_file):
    cfg = _config(tmp_path, amplitude=0.0)
    out_dir = tmp_path / "out"
    assert main(["run", "--mesh", str(circle_mesh_file), "--config", str(cfg),
                 "--out-dir", str(out_dir)]) == 0
    report = json.loads((out_dir / "report.json").read_text())
    snapshots = [name for name in report["outputs"] if name.startswith("snapshot")]
    assert len(snapshots) == report["steps"] // 25 + 1
    for name in snapshots:
        for line in (out_dir / name).read_text().splitlines():
            if line.startswith("block"):
                continue
            assert float(line.split()[2]) == 0.0
    for name in report["outputs"]:
        assert (out_dir / name).exists()


def test_run_energy_monotone_after_source_off(tmp_path, two_block_file):
    cfg = _config(
        tmp_path,
        t_source=0.05,
        sigma=0.01,
        t_end=0.4,
        snapshot_every=200,
        source_xy=[0.5, 0.6426157582403226],  # interface grid point (GL node)
        boundary_conditions={
            "north": "dirichlet", "south": "neumann",
            "west": "outflow", "east": "outflow",
        },
    )
    out_dir = tmp_path / "out"
    rc = main(["run", "--mesh", str(two_block_file), "--config", str(cfg),
               "--out-dir", str(out_dir)])
    assert rc == 0
    rows = [line.split(",") for line in (out_dir / "energy.csv").read_text().splitlines()[1:]]
    t_off = 0.05 + 10 * 0.01
    energies = [(float(t), float(e)) for _, t, e in rows]
    post = [e for t, e in energies if t >= t_off]
    assert all(b <= a * (1 + 1e-10) for a, b in zip(post, post[1:]))


def test_run_determinism_snapshot_hashes(tmp_path, circle_mesh_file):
    cfg = _config(tmp_path)
    digests = []
    for name in ("out_a", "out_b"):
        out_dir = tmp_path / name
        assert main(["run", "--mesh", str(circle_mesh_file), "--config", str(cfg),
                     "--out-dir", str(out_dir)]) == 0
        report = json.loads((out_dir / "report.json").read_text())
        blob = hashlib.sha256()
        for out in sorted(report["outputs"]):
            if out.endswith(".txt") or out.endswith(".csv"):
                blob.update((out_dir / out).read_bytes())
        digests.append(blob.hexdigest())
    assert digests[0] == digests[1]


def test_run_rejects_bad_config(tmp_path, circle_mesh_file):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"c": 1.0}))
    assert main(["run", "--mesh", str(circle_mesh_file), "--config", str(bad),
                 "--out-dir", str(tmp_path / "o1")]) == 2
    bad.write_text(json.dumps({"boundary_conditions": {"outer": "dirichlet"}, "volume": 11}))
    assert main(["run", "--mesh", str(circle_mesh_file), "--config", str(bad),
                 "--out-dir", str(tmp_path / "o2")]) == 2
    bad.write_text(json.dumps({"boundary_conditions": {"outer": "dirichlet"}, "c": -2.0}))
    assert main(["run", "--mesh", str(circle_mesh_file), "--config", str(bad),
                 "--out-dir", str(tmp_path / "o3")]) == 2


def test_run_rejects_missing_bc(tmp_path, circle_mesh_file):
    cfg = _config(tmp_path, boundary_conditions={})
    assert main(["run", "--mesh", str(circle_mesh_file), "--config", str(cfg),
                 "--out-dir", str(tmp_path / "out")]) == 2


def test_run_snapshot_block_structure(tmp_path, circle_mesh_file):
    cfg = _config(tmp_path, snapshot_every=1000)
    out_dir = tmp_path / "out"
    assert main(["run", "--mesh", str(circle_mesh_file), "--config", str(cfg),
                 "--out-dir", str(out_dir)]) == 0
    report = json.loads((out_dir / "report.json").read_text())
    name = next(n for n in report["outputs"] if n.startswith("snapshot"))
    lines = (out_dir / name).read_text().splitlines()
    headers = [i for i, line in enumerate(lines) if line.startswith("block")]
    assert len(headers) == 20  # refinement-1 circle mesh
    assert lines[headers[0]] == "block 0"
    assert headers[1] - headers[0] - 1 == 36  # n^2 rows of `x y v`
    assert len(lines[1].split()) == 3


# ---------------------------------------------------------------------------
# mesh-info


def test_mesh_info_ok(tmp_path, circle_mesh_file, capsys):
    assert main(["mesh-info", "--mesh", str(circle_mesh_file), "--p", "5"]) == 0
    out = capsys.readouterr().out
    assert "blocks: 20" in out
    assert "N_dofs: 521" in out
    assert "validation: OK" in out


def test_mesh_info_detects_violations(tmp_path, capsys):
    from sbpwave.mesh import mesh_to_dict

    data = mesh_to_dict(two_block_square_mesh())
    for edge in data["blocks"][1]["edges"]:
        for key in ("start", "end"):
            edge[key][0] += 1e-3
    path = tmp_path / "shifted.json"
    path.write_text(json.dumps(data))
    assert main(["mesh-info", "--mesh", str(path)]) == 1
    assert "mismatch" in capsys.readouterr().out


def test_mesh_info_missing_file(tmp_path):
    assert main(["mesh-info", "--mesh", str(tmp_path / "nope.json")]) == 2


def test_mesh_info_dumps_operators(tmp_path, two_block_file, capsys):
    dump_dir = tmp_path / "ops"
    assert main(["mesh-info", "--mesh", str(two_block_file), "--p", "5",
                 "--dump-operators", str(dump_dir)]) == 0
    for name in ("laplacian_reduced.txt", "embedding.txt", "norm_reduced.txt"):
        path = dump_dir / name
        assert path.exists()
        row, col, val = path.read_text().splitlines()[0].split()
        int(row), int(col), float(val)


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "sbpwave.cli", "--threads", "2", "verify", "--p", "5", "--pairs", "2"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "checks passed" in proc.stdout
