import json
from pathlib import Path

import pytest

from intervalrts.cli.config import ConfigError, parse_config
from intervalrts.cli.main import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_bundled_configs_validate(path, capsys):
    assert main(["validate", str(path)]) == 0
    assert capsys.readouterr().out.startswith("ok")


def test_missing_seed_rejected(tmp_path, capsys):
    p = write(tmp_path, 'kind = "kac"\n[map]\nfamily = "doubling"\n[kac]\nY = [0.0, 0.25]\n')
    assert main(["validate", str(p)]) == 2
    assert "seed" in capsys.readouterr().err


def test_seed_flag_fills_missing_seed(tmp_path):
    p = write(tmp_path, 'kind = "kac"\n[map]\nfamily = "doubling"\n[kac]\nY = [0.0, 0.25]\n')
    assert main(["validate", str(p), "--seed", "3"]) == 0


def test_zero_delta_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config('kind = "inducing"\nseed = 1\n[map]\nfamily = "doubling"\n[inducing]\nY = [0.2, 0.3]\ndelta = 0.0\n')
    assert any("inducing.delta" in m for m in info.value.messages)


def test_parse_error_has_position():
    with pytest.raises(ConfigError) as info:
        parse_config('kind = "kac"\nseed = 1\n[map\n')
    assert "line" in info.value.messages[0]


def test_unknown_field_and_family():
    with pytest.raises(ConfigError) as info:
        parse_config('kind = "kac"\nseed = 1\n[map]\nfamily = "henon"\n[kac]\nY = [0.0, 0.5]\nbogus = 1\n')
    text = "\n".join(info.value.messages)
    assert "map.family" in text and "kac.bogus" in text


def test_defaults_are_echoed():
    cfg = parse_config('kind = "kac"\nseed = 1\n[map]\nfamily = "doubling"\n[kac]\nY = [0.0, 0.25]\n')
    echo = cfg.echo()
    assert echo["kac"]["N"] == 1_000_000 and echo["kac"]["low"] == 0.98


def test_gallery(capsys):
    assert main(["gallery"]) == 0
    rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert {r["tag"] for r in rows} >= {"doubling", "tent(2.0)"}


def test_tower_tent2(tmp_path):
    p = write(tmp_path, 'kind = "tower"\nseed = 0\n[map]\nfamily = "tent"\nparams = { s = 2.0 }\n[tower]\nmax_level = 10\n')
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 0
    dot = (tmp_path / "o" / "tower.dot").read_text()
    assert dot.count("[label=\"0:") == 1 and dot.count("->") == 2
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["results"]["n_domains"] == 1 and s["status"] == "pass"


def test_fluct_on_doubling_is_an_error(tmp_path):
    p = write(tmp_path, 'kind = "fluct"\nseed = 0\n[map]\nfamily = "doubling"\n[fluct]\nn = 8\nN = 50\n')
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 2
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert "EstimationError" in s["results"]["error"]


def test_kac_run_and_determinism(tmp_path):
    p = write(tmp_path, 'kind = "kac"\nseed = 4\n[map]\nfamily = "skewlinear"\nparams = { w = [0.3333333333333333, 0.6666666666666667] }\n[kac]\nY = [0.0, 0.3333333333333333]\nN = 200000\nlow = 0.97\nhigh = 1.03\n')
    assert main(["run", str(p), "--out", str(tmp_path / "a"), "--strict-repro"]) == 0
    assert main(["run", str(p), "--out", str(tmp_path / "b"), "--strict-repro"]) == 0
    for name in ("kac.json", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "wall_clock" not in json.loads((tmp_path / "a" / "summary.json").read_text())


def test_thread_count_does_not_change_outputs(tmp_path):
    p = write(tmp_path, 'kind = "ow"\nseed = 2\n[map]\nfamily = "doubling"\n[ow]\nlevels = [8]\nN = 400\nshards = 2\n')
    main(["run", str(p), "--out", str(tmp_path / "a"), "--strict-repro", "--threads", "1"])
    main(["run", str(p), "--out", str(tmp_path / "b"), "--strict-repro", "--threads", "2"])
    assert (tmp_path / "a" / "ow.csv").read_bytes() == (tmp_path / "b" / "ow.csv").read_bytes()
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()


def test_rts_outputs(tmp_path):
    p = write(tmp_path, 'kind = "rts"\nseed = 7\n[map]\nfamily = "doubling"\n[rts]\ntarget = "both"\nlevels = [6]\nN = 2000\nks = 0.2\n')
    code = main(["run", str(p), "--out", str(tmp_path / "o")])
    assert code in (0, 1)
    out = tmp_path / "o"
    assert (out / "rts_000.csv").exists() and (out / "rts_001.csv").exists()
    assert (out / "targets.csv").read_text().splitlines()[0].startswith("index,kind,center,scale")
