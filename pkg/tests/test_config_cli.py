import json
import math
from pathlib import Path

import numpy as np
import pytest

from heraldsim.cli import main as cli_main
from heraldsim.config import (ConfigError, dump_config, load_config, parse_text,
                              parse_value, preset_path)
from heraldsim.cqed import TWO_PI

GHZ = TWO_PI * 1e9


def test_preset_loads_table_values():
    cfg = load_config(preset="paper_tableS1")
    assert cfg.system.emitter_a.g == pytest.approx(TWO_PI * 4.1e9, rel=1e-12)
    assert cfg.system.cavity.kappa_w == pytest.approx(TWO_PI * 9.0e9, rel=1e-12)
    assert cfg.system.cavity.kappa_tot == pytest.approx(TWO_PI * 14.4e9, rel=1e-12)
    assert cfg.sideband.omega_mw == pytest.approx(TWO_PI * 3.7e9, rel=1e-12)
    assert cfg.protocol.readout_means_a == (1.9, 17.7)


def test_alternate_timing_preset():
    cfg = load_config(preset="paper_tableS1_tau412")
    assert cfg.model.tau_a == pytest.approx(412e-9)
    assert cfg.model.tau_b == pytest.approx(423e-9)


def test_unknown_preset_rejected():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset_path("not_a_preset")


def test_missing_unit_rejected_with_key_name():
    with pytest.raises(ConfigError, match="emitter_a.g"):
        parse_value("emitter_a.g", "4.1")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown configuration key"):
        parse_text("cavity.kappa_q = 1 GHz")


def test_bad_unit_and_value_rejected():
    with pytest.raises(ConfigError, match="frequency unit"):
        parse_value("cavity.kappa_w", "9.0 GHzz")
    with pytest.raises(ConfigError, match="number"):
        parse_value("cavity.kappa_w", "nine GHz")
    with pytest.raises(ConfigError, match="fraction|\\[0, 1\\]"):
        parse_value("protocol.eta_wg", "1.4")


def test_invariant_violation_reported(tmp_path):
    text = preset_path("paper_tableS1").read_text()
    bad = text.replace("cavity.kappa_w   = 9.0 GHz", "cavity.kappa_w   = -9.0 GHz")
    path = tmp_path / "bad.cfg"
    path.write_text(bad)
    with pytest.raises(ConfigError, match="invariant"):
        load_config(path=path)


def test_override_phi_c_without_unit():
    # the carrier phase override accepts a bare radian number
    cfg = load_config(preset="paper_tableS1",
                      overrides=["interferometer.phi_c=1.2504"])
    assert cfg.sideband.phi_c == pytest.approx(0.398 * math.pi, abs=2e-4)


def test_config_roundtrip_semantics(tmp_path):
    cfg = load_config(preset="paper_tableS1")
    dumped = dump_config(cfg.values)
    path = tmp_path / "dump.cfg"
    path.write_text(dumped)
    cfg2 = load_config(path=path)
    for key, value in cfg.values.items():
        if isinstance(value, bool):
            assert cfg2.values[key] == value, key
        else:
            assert cfg2.values[key] == pytest.approx(value, rel=1e-12), key


def test_cli_exit_codes(tmp_path, capsys):
    rc = cli_main(["detuning-design", "--out", str(tmp_path / "a")])
    assert rc == 0
    rc = cli_main(["detuning-design", "--set", "bogus.key=1",
                   "--out", str(tmp_path / "b")])
    assert rc == 2
    err = json.loads((tmp_path / "b" / "error.json").read_text())
    assert "configuration error" in err["error"]
    rc = cli_main(["simulate", "--out", str(tmp_path / "c")])  # missing --seed
    assert rc == 2


def test_cli_manifest_lists_outputs(tmp_path):
    out = tmp_path / "scan"
    rc = cli_main(["phase-scan", "--out", str(out), "--phase-points", "41"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert "phase_scan.csv" in manifest["outputs"]
    import hashlib

    digest = hashlib.sha256((out / "phase_scan.csv").read_bytes()).hexdigest()
    assert manifest["outputs"]["phase_scan.csv"] == digest
    assert manifest["config_hash"]


def test_cli_same_seed_byte_identical(tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        rc = cli_main(["simulate", "--seed", "9", "--trials", "800",
                       "--out", str(out)])
        assert rc == 0
        outs.append((out / "dataset.csv").read_bytes())
    assert outs[0] == outs[1]


def test_cli_fit_scan_numerical_failure_path(tmp_path):
    # constant counts leave scale and background unidentifiable
    scan = tmp_path / "flat.csv"
    cfg = load_config(preset="paper_tableS1")
    f0 = cfg.system.cavity.omega_c / TWO_PI + 2.0e12
    rows = ["freq_hz,counts"] + [f"{f0 + k * 1e6},100" for k in range(60)]
    scan.write_text("\n".join(rows) + "\n")
    rc = cli_main(["fit-scan", "--seed", "1", "--input", str(scan),
                   "--out", str(tmp_path / "fit")])
    assert rc == 3
    err = json.loads((tmp_path / "fit" / "error.json").read_text())
    assert "numerical failure" in err["error"]
