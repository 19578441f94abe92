import pytest

from optable.config import RunConfig, dump_config, load_config, load_manifest, parse_assignments
from optable.errors import ConfigError, ManifestError


def test_defaults_match_detection_settings():
    cfg = RunConfig()
    p = cfg.detect_params()
    assert (p.k, p.ladder.sizes, p.subdivide_threshold) == (89, [5, 20, 80], 0.0)
    assert cfg.dynamic_params().w_size == 81


def test_file_then_overrides(tmp_path):
    (tmp_path / "a.cfg").write_text("# comment\nk = 12\ntau=3  # trailing\n\nw_candidates = 21, 41\n")
    cfg = load_config(tmp_path / "a.cfg", ["k=7", "figures=false"])
    assert (cfg.k, cfg.tau, cfg.w_candidates, cfg.figures) == (7, 3, (21, 41), False)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_assignments(["kk = 3"])


def test_bad_values_rejected(tmp_path):
    for line in ("k = x", "figures = maybe", "knn_mode = fuzzy", "w_size = 80", "threads = 0", "no equals"):
        with pytest.raises(ConfigError):
            load_config(None, [line])
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_dump_round_trip(tmp_path):
    cfg = RunConfig(k=5, figures=False, tau_values=(2, 4), out_dir="elsewhere", threads=3)
    text = dump_config(cfg)
    assert "out_dir" not in text and "threads" not in text
    (tmp_path / "c.cfg").write_text(text)
    assert load_config(tmp_path / "c.cfg") == cfg.replace(out_dir="out", threads=1)


def test_manifest_validation(tmp_path):
    (tmp_path / "a.png").write_bytes(b"x")
    good = tmp_path / "m.csv"
    good.write_text("image,mask\na.png,a.png\n")
    m = load_manifest(good)
    assert m.kind == "static" and len(m) == 1 and m.path(0, "mask") == tmp_path / "a.png"
    cases = {
        "hdr.csv": "picture,mask\na.png,a.png\n",
        "cols.csv": "image,mask\na.png\n",
        "miss.csv": "image,mask\na.png,b.png\n",
        "empty.csv": "",
    }
    for name, text in cases.items():
        (tmp_path / name).write_text(text)
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / name)
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "nothing.csv")
