import json

from hdivkit.cli import main


def test_mesh_gen_and_inspect(tmp_path, capsys):
    path = tmp_path / "m.json"
    assert main(["mesh", "gen", "--mesh", "structured:2", "--out", str(path)]) == 0
    capsys.readouterr()
    assert main(["mesh", "inspect", "--mesh", str(path), "--labels", "file"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["triangles"] == 8
    assert out["dirichlet_edges"] == 8


def test_mesh_refine(tmp_path, capsys):
    path = tmp_path / "r.json"
    assert main(["mesh", "refine", "--mesh", "structured:2", "--out", str(path)]) == 0
    capsys.readouterr()
    main(["mesh", "inspect", "--mesh", str(path), "--labels", "file"])
    out = json.loads(capsys.readouterr().out)
    assert out["triangles"] == 32


def test_project_command(capsys):
    assert main(["project", "--mesh", "structured:2", "--field", "cubic", "--p", "0,1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["p0"]["commute_residual"] < 1e-10
    assert out["p1"]["commute_residual"] < 1e-10


def test_best_approx_command(capsys):
    assert main(["best-approx", "--mesh", "structured:2", "--field", "cubic", "--p", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["p1"]["ratio_glob_over_loc"] >= 1.0 - 1e-9


def test_solve_commands(capsys):
    assert main(["solve-mixed", "--mesh", "structured:2", "--p", "0"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["p0"]["div_constraint_defect"] < 1e-10
    assert main(["solve-ls", "--mesh", "structured:2", "--p", "0", "--q", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["p0_q1"]["kkt_residual"] < 1e-10


def test_study_command(tmp_path, capsys):
    code = main(
        [
            "study",
            "--field",
            "sine_divfree",
            "--mesh",
            "structured:2",
            "--refinements",
            "4",
            "--p",
            "1",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    assert (tmp_path / "study.csv").exists()
    assert (tmp_path / "summary.json").exists()


def test_study_config_file(tmp_path, capsys):
    cfg = {
        "field": "cubic",
        "mesh": "structured:2",
        "refinements": 3,
        "degrees": [1],
        "out_dir": str(tmp_path),
        "run_projector": False,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    code = main(["study", "--config", str(cfg_path)])
    captured = capsys.readouterr()
    assert "study:" in captured.out
