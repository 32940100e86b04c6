import csv
import json
import os

import numpy as np
import pytest
import yaml

from qchaos import cli
from qchaos.ensemble import (CSV_HEADERS, ManifestError, Observable, TimeGridSpec,
                             ensemble_dynamics, manifest_from_dict, parse_manifest,
                             run_ensemble)
from qchaos.register import RegisterConfig


def _write(tmp_path, doc, name="m.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return str(p)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_minimal_manifest_defaults(tmp_path):
    doc = {"command": "evolve",
           "register": {"n": 8, "topology": "chain", "delta0": 1.0, "j_scale": 0.1}}
    m = parse_manifest(_write(tmp_path, doc))
    assert m.command == "evolve" and m.realizations == 1 and m.threads == 1
    assert m.register.n == 8 and m.register.j_law == "uniform"
    assert m.time_grid == TimeGridSpec()
    assert m.initial_state == "central" and not m.store_components


def test_manifest_errors_are_collected():
    with pytest.raises(ManifestError) as exc:
        manifest_from_dict({"command": "evolve", "register": {"n": 40}, "colour": 1,
                            "realizations": 0})
    text = " ".join(exc.value.errors)
    assert "memory cap" in text and "colour" in text and "realizations" in text


def test_manifest_duplicate_edge_named():
    with pytest.raises(ManifestError) as exc:
        manifest_from_dict({"command": "spectrum",
                            "register": {"n": 3, "topology": [[0, 1], [1, 0]]}})
    assert any("duplicate edge" in e for e in exc.value.errors)


def test_manifest_missing_keys():
    with pytest.raises(ManifestError) as exc:
        manifest_from_dict({"register": {"delta0": 1.0}})
    errs = exc.value.errors
    assert any("'command'" in e for e in errs) and any("register.n" in e for e in errs)


def test_tc_scan_validation():
    with pytest.raises(ManifestError):
        manifest_from_dict({"command": "tc-scan", "register": {"n": 6}})
    with pytest.raises(ManifestError):
        manifest_from_dict({"command": "tc-scan", "n_grid": [4, 6],
                            "register": {"n": 6, "topology": "grid:2x3"}})
    m = manifest_from_dict({"command": "tc-scan", "n_grid": [4, 6],
                            "register": {"n": 6, "topology": "grid"}})
    assert m.n_grid == (4, 6)


def test_observable_single_realization():
    o = Observable.of([0.7])
    assert o.mean == 0.7 and o.stderr is None and o.count == 1


@pytest.mark.parametrize("cmd", list(CSV_HEADERS))
def test_outputs_have_headers(tmp_path, cmd):
    if cmd in ("strength_fit", "components"):
        pytest.skip("written by strength / evolve")
    doc = {"command": cmd, "register": {"n": 5, "j_scale": 0.3, "master_seed": 4},
           "realizations": 2, "store_components": True, "time_grid": {"num": 20},
           "j_grid": {"num": 3}, "n_grid": [4, 5], "j_scale_per_n": 1.5}
    m = manifest_from_dict(doc)
    summary = run_ensemble(m, out=str(tmp_path / cmd))
    rows = _read_csv(tmp_path / cmd / f"{cmd}.csv")
    assert ",".join(rows[0]) == ",".join(CSV_HEADERS[cmd])
    assert len(rows) > 1
    js = json.loads((tmp_path / cmd / "summary.json").read_text())
    assert js["command"] == cmd and js["manifest"]["register"]["master_seed"] == 4
    if cmd == "evolve":
        assert ",".join(_read_csv(tmp_path / cmd / "components.csv")[0]) \
            == ",".join(CSV_HEADERS["components"])
    if cmd == "strength":
        assert ",".join(_read_csv(tmp_path / cmd / "strength_fit.csv")[0]) \
            == ",".join(CSV_HEADERS["strength_fit"])
    assert summary.failures == []


def test_spectrum_csv_values(tmp_path):
    doc = {"command": "spectrum", "register": {"n": 4, "j_scale": 0.0}, "realizations": 1}
    run_ensemble(manifest_from_dict(doc), out=str(tmp_path))
    rows = _read_csv(tmp_path / "spectrum.csv")[1:]
    assert len(rows) == 16
    assert all(float(r[3]) == 0.0 and float(r[4]) == 1.0 for r in rows)


def test_rerun_byte_identical(tmp_path):
    doc = {"command": "evolve", "register": {"n": 6, "j_scale": 0.3, "master_seed": 1},
           "realizations": 3, "time_grid": {"num": 30}}
    m = manifest_from_dict(doc)
    for sub in ("a", "b"):
        run_ensemble(m, out=str(tmp_path / sub))
    for name in os.listdir(tmp_path / "a"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_ensemble_dynamics_single_realization():
    cfg = RegisterConfig(6, topology="grid", j_scale=0.25, master_seed=2)
    ens = ensemble_dynamics(cfg, 1, times=TimeGridSpec(num=50))
    assert ens.mean_entropy[0] == 0.0 and ens.mean_survival[0] == 1.0
    assert len(ens.plateau_entropy) == 1
    assert np.all(ens.mean_entropy <= 6)


def test_cli_roundtrip(tmp_path, capsys):
    path = _write(tmp_path, {"command": "spectrum", "register": {"n": 4, "j_scale": 0.2}})
    out = tmp_path / "o"
    code = cli.main(["jc-scan", "--config", path, "--out", str(out), "--realizations", "2",
                     "--seed", "7", "--threads", "2"])
    assert code == 0
    js = json.loads(capsys.readouterr().out)
    assert js["command"] == "jc-scan" and js["master_seed"] == 7
    assert (out / "jc-scan.csv").exists()


def test_cli_invalid_manifest(tmp_path, capsys):
    path = _write(tmp_path, {"command": "evolve", "register": {"n": 40}, "bogus": 1})
    assert cli.main(["evolve", "--config", path]) == 2
    err = capsys.readouterr().err
    assert "memory cap" in err and "bogus" in err


def test_cli_store_components_flag(tmp_path, capsys):
    path = _write(tmp_path, {"command": "evolve", "register": {"n": 4, "j_scale": 0.3},
                             "time_grid": {"num": 10}})
    out = tmp_path / "o"
    assert cli.main(["evolve", "--config", path, "--out", str(out),
                     "--store-components", "true"]) == 0
    assert (out / "components.csv").exists()
    with pytest.raises(SystemExit):
        cli.main(["evolve", "--config", path, "--store-components", "maybe"])
