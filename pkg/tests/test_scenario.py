from importlib import resources

import pytest

from camsearch.errors import ParseError, ValidationError
from camsearch.scenario import World, load_scenario, parse_scenario

REFERENCE_TEXT = resources.files("camsearch.data").joinpath("reference.scenario").read_text()


def test_reference_search_settings():
    s = load_scenario()
    assert (s.search.k_est, s.search.k_sd_per_m, s.search.e_bound0_ws) == (5.0, 50.0, 12.0)
    cfg = s.search_config()
    assert (cfg.k_est, cfg.k_sd, cfg.e_bound0) == (5.0, 50.0, 12.0)
    assert s.search_config(e_threshold=0.25).e_threshold == 0.25


def test_load_from_path_matches_bundled(tmp_path):
    path = tmp_path / "copy.scenario"
    path.write_text(REFERENCE_TEXT)
    assert load_scenario(path) == load_scenario()


def test_empty_file_gives_defaults():
    s = parse_scenario("")
    assert s.mesh.h_m == 0.05 and s.control.tau_in_s == 0.009


def test_negative_budget_names_field():
    with pytest.raises(ValidationError, match="e_bound0_ws"):
        parse_scenario("[search]\ne_bound0_ws = -1\n")


@pytest.mark.parametrize("text, key", [
    ("[search]\nk_estimate = 5\n", "k_estimate"),
    ("[robot]\nl1 = 0.5\n", "l1"),
    ("[extras]\nx = 1\n", "extras"),
])
def test_unknown_keys_rejected(text, key):
    with pytest.raises(ValidationError, match=key):
        parse_scenario(text)


def test_parse_error_has_position():
    with pytest.raises(ParseError, match=r"line 3, column \d+"):
        parse_scenario("[mesh]\nh_m = 0.05\nbroken = = 1\n", "bad.scenario")


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError, match="missing.scenario"):
        load_scenario(tmp_path / "missing.scenario")


@pytest.mark.parametrize("text, fragment", [
    ("[joint_limits]\nq2_deg = [150.0, -90.0]\n", "q2_deg"),
    ("[[noise.wells]]\ndepth = 0.01\nwidth_m = 0.1\n", "exactly one"),
    ("[[noise.wells]]\nnode = 3\ncenter_m = [1, 0, 1.5]\ndepth = 0.01\nwidth_m = 0.1\n", "exactly one"),
    ("[noise]\nsigma_base = 0.02\n[[noise.wells]]\nnode = 1\ndepth = 0.03\nwidth_m = 0.1\n", "depth sum"),
    ("[energy_table]\ntau_delays_s = [0.0, -0.2]\n", "tau delays"),
    ("[bench]\nframe_counts = [0, 4]\n", "frame counts"),
])
def test_invariants_named(text, fragment):
    with pytest.raises(ValidationError, match=fragment):
        parse_scenario(text)


def test_well_node_outside_mesh():
    s = parse_scenario("[[noise.wells]]\nnode = 5000\ndepth = 0.01\nwidth_m = 0.1\n")
    with pytest.raises(ValidationError, match="node 5000"):
        World(s).environment


def test_wells_resolve_to_mesh_nodes(reference_world):
    wells = reference_world.environment.field.wells
    pos = reference_world.space.positions
    for spec, well in zip(reference_world.scenario.noise.wells, wells):
        assert tuple(pos[spec.node - 1]) == well.center


def test_world_members(reference_world):
    assert len(reference_world.ideal_space) == 111
    assert len(reference_world.space) == 94
    assert len(reference_world.energy) == 94
