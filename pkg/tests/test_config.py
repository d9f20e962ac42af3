import numpy as np
import pytest

from h2flow.config import ConfigError, SCHEMA, default_config, parse_config, parse_text
from h2flow.harness import build_case, cmd_audit


def test_minimal_config_gets_defaults_and_passes_audit():
    cfg = parse_text("[grid]\ncells = 20\n")
    assert cfg["grid"]["cells"] == (20,)
    assert cfg["fluid"]["C1"] == 52.51
    assert cfg["scheme"]["tol"] == 1e-9
    assert cmd_audit(cfg).passed


def test_porosity_above_one_names_H1():
    text = "[rock]\nporosity = 1.5\n"
    with pytest.raises(ConfigError, match="H1") as info:
        parse_text(text, source="bad.ini")
    assert str(info.value).startswith("bad.ini:2:")


def test_porosity_violation_can_be_waived():
    cfg = parse_text("[rock]\nporosity = 1.5\n[audit]\nwaive = H1\n")
    assert cfg["rock"]["porosity"] == 1.5
    cfg = parse_text("[rock]\nporosity = 1.5\n", waive=("H1",))
    assert cfg["rock"]["porosity"] == 1.5


@pytest.mark.parametrize("text, name", [
    ("[rock]\npermeability = 0\n", "H2"),
    ("[fluid]\nmu_g = -1\n", "H3"),
    ("[fluid]\nrho_min = 2\nrho_max = 1\n", "H4"),
    ("[closures]\nP_e = 0\n", "H5"),
    ("[rock]\nr_w = -0.5\n", "H6"),
    ("[closures]\nd_star = 0\n", "H7"),
])
def test_physical_bounds_named(text, name):
    with pytest.raises(ConfigError, match=name):
        parse_text(text)


def test_unknown_key_reports_line_and_column():
    text = "[grid]\ncells = 10\n\n[scheme]\nepsilon = 1e-3\n"
    with pytest.raises(ConfigError, match="unknown key") as info:
        parse_text(text, source="x.ini")
    assert info.value.line == 5
    assert info.value.column == len("epsilon = ") + 1


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_text("[solver]\ntol = 1\n")


def test_bad_value_and_malformed_line():
    with pytest.raises(ConfigError, match="bad value"):
        parse_text("[grid]\ncells = ten\n")
    with pytest.raises(ConfigError):
        parse_text("[grid]\nthis line has no equals sign\n")


def test_structural_errors():
    with pytest.raises(ConfigError, match="grid"):
        parse_text("[grid]\ncells = 4, 4, 4\nlengths = 1, 1, 1\n")
    with pytest.raises(ConfigError, match="weighting"):
        parse_text("[scheme]\nweighting = downwind\n")
    with pytest.raises(ConfigError, match="ladder"):
        parse_text("[sweep]\neta = 0.1, 0.01\n")
    with pytest.raises(ConfigError, match="schema"):
        parse_text("[meta]\nschema = 7\n")
    with pytest.raises(ConfigError, match="unknown assumption"):
        parse_text("[audit]\nwaive = H9\n")


def test_roundtrip_is_identity(injection_cfg):
    again = parse_text(injection_cfg.serialize())
    assert again == injection_cfg
    assert again.hash() == injection_cfg.hash()
    assert parse_text(again.serialize()).serialize() == again.serialize()


def test_hash_changes_with_values(injection_cfg):
    other = injection_cfg.replace(scheme__eta=1e-2)
    assert other.hash() != injection_cfg.hash()
    assert injection_cfg["scheme"]["eta"] == 1e-3
    with pytest.raises(ConfigError):
        injection_cfg.replace(scheme__nope=1)


def test_field_files(tmp_path):
    (tmp_path / "phi.txt").write_text(" ".join(str(0.1 + 0.01 * i) for i in range(5)))
    path = tmp_path / "c.ini"
    path.write_text("[grid]\ncells = 5\n[rock]\nporosity = file:phi.txt\n")
    cfg = parse_config(path)
    case = build_case(cfg)
    assert np.allclose(case.rock.porosity, 0.1 + 0.01 * np.arange(5))
    path.write_text("[grid]\ncells = 5\n[rock]\nporosity = file:missing.txt\n")
    with pytest.raises(ConfigError, match="not found"):
        parse_config(path)
    path.write_text("[grid]\ncells = 6\n[rock]\nporosity = file:phi.txt\n")
    with pytest.raises(ConfigError, match="expected 6"):
        build_case(parse_config(path))


def test_closed_case_reads_initial_files(closed_cfg):
    case = build_case(closed_cfg)
    s0 = case.closures.saturation_from_pc(case.sim.p_g0 - case.sim.p_l0)
    x = case.grid.centers[:, 0]
    assert np.allclose(s0, 0.5 + 0.4 * np.cos(np.pi * x), atol=1e-12)


def test_source_box(injection_cfg):
    case = build_case(injection_cfg)
    x = case.grid.centers[:, 0]
    assert np.all(case.rock.r_g[x > 0.9] == 1000.0)
    assert np.all(case.rock.r_g[x < 0.9] == 0.0)


def test_schema_defaults_complete():
    cfg = default_config()
    for sec, keys in SCHEMA.items():
        assert set(cfg[sec]) == set(keys)
