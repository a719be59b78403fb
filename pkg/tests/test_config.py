import pytest

from efrlab.config import config_from_sections, config_to_sections, parse_config, parse_config_text
from efrlab.errors import ConfigError

ETA = 0.1 * 1000 ** -0.75


class TestDefaults:
    def test_empty_file(self):
        cfg = parse_config_text("")
        assert cfg.flow.nu == 1e-4 and cfg.flow.dt == 0.004 and cfg.flow.T == 4.0
        assert cfg.geometry.kind == "channel_cylinder"
        assert (cfg.geometry.Lx, cfg.geometry.Ly) == (2.2, 0.41)
        assert cfg.geometry.center == (0.2, 0.2) and cfg.geometry.radius == 0.05
        assert cfg.delta_bounds == (1e-5, 1e-3) and cfg.chi_bounds == (0.0, 1.0)
        assert cfg.delta_init == pytest.approx(ETA, rel=1e-12)
        assert cfg.chi_init == pytest.approx(0.02, rel=1e-12)
        assert cfg.k == 10 and cfg.filter.grad_div_gamma == 0.0

    def test_empty_values_select_defaults(self):
        cfg = parse_config_text("[efr]\ndelta0 =\nchi0 =\nk =\n[flow]\nnu =\n")
        assert cfg.delta_init == pytest.approx(ETA) and cfg.chi_init == pytest.approx(0.02)
        assert cfg.k == 10 and cfg.flow.nu == 1e-4

    def test_explicit_values(self):
        text = """
[flow]
T = 1.0
[geometry]
kind = periodic_box
[grids]
coarse_nx = 32
coarse_ny = 32
fine_nx = 64
fine_ny = 64
[efr]
variant = chi_opt
k = 5
delta0 = 2e-4
[initial]
name = shear_layer
thickness = 0.0125
"""
        cfg = parse_config_text(text)
        assert cfg.geometry.kind == "periodic_box" and (cfg.geometry.Lx, cfg.geometry.Ly) == (1.0, 1.0)
        assert cfg.coarse == (32, 32) and cfg.fine == (64, 64)
        assert cfg.variant == "chi_opt" and cfg.k == 5 and cfg.delta_init == 2e-4
        assert dict(cfg.initial_params) == {"thickness": 0.0125}

    def test_standard_ef_default_chi(self):
        assert parse_config_text("[efr]\nvariant = standard_ef\n").chi_init == 1.0


class TestErrors:
    def test_unknown_key_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text("[flow]\nnu = 1e-4\n\n[efr]\nk = 10\nkappa = 3\n", "run.ini")
        assert exc.value.line == 6 and "run.ini:6" in str(exc.value) and "kappa" in str(exc.value)

    def test_unknown_section(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text("[flow]\n[solver]\nx = 1\n")
        assert exc.value.line == 2

    def test_delta_opt_ef_with_chi(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text("[efr]\nvariant = delta_opt_ef\nchi0 = 0.5\n")
        assert exc.value.line == 3

    def test_delta_opt_ef_with_chi_one_ok(self):
        assert parse_config_text("[efr]\nvariant = delta_opt_ef\nchi0 = 1\n").chi_init == 1.0

    def test_inverted_delta_bounds(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text("[efr]\ndelta_min = 1e-3\ndelta_max = 1e-5\n")
        assert exc.value.line == 2

    def test_inverted_chi_bounds(self):
        with pytest.raises(ConfigError):
            parse_config_text("[efr]\nchi_min = 0.8\nchi_max = 0.2\n")

    @pytest.mark.parametrize("text,line", [
        ("[flow]\nnu = abc\n", 2),
        ("[flow]\nupwind = maybe\n", 2),
        ("[geometry]\nkind = sphere\n", 2),
        ("[flow]\nnu = -1\n", 1),
        ("[efr]\nvariant = wild\n", 1),
        ("[loss]\nkind = local\nw_p = 1\n", 1),
    ])
    def test_invalid_values(self, text, line):
        with pytest.raises(ConfigError) as exc:
            parse_config_text(text)
        assert exc.value.line == line

    def test_syntax_error(self):
        with pytest.raises(ConfigError):
            parse_config_text("nu = 1\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("[flow]\nnu = 1e-4\nnu = 2e-4\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            parse_config(tmp_path / "nope.ini")


class TestRoundTrip:
    @pytest.mark.parametrize("text", [
        "",
        "[efr]\nvariant = delta_opt_ef\nk = 3\n[loss]\nw_p = 1\n",
        "[geometry]\nkind = periodic_box\n[initial]\nname = shear_layer\nthickness = 0.02\n",
    ])
    def test_sections_round_trip(self, text):
        cfg = parse_config_text(text)
        again = config_from_sections(config_to_sections(cfg))
        assert config_to_sections(again) == config_to_sections(cfg)
        assert again.delta_init == cfg.delta_init and again.flow == cfg.flow

    def test_from_file(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[flow]\nT = 0.5\n")
        assert parse_config(p).flow.T == 0.5
