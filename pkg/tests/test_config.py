import numpy as np
import pytest

from cutprep.config import RunConfig, parse_geometry
from cutprep.errors import ConfigError
from cutprep.geometry import Composite, Plane, SampledGrid, Sphere

TEXT = """
mesh: {dim: 2, elements: [8, 8], origin: [0.0, 0.0], h: [0.25, 0.25], degree: 2}
geometries: ["circle 1.0 1.0 0.6", "plane 1 0 1.1"]
material_map: {0: 0, 1: 1, 2: 2, 3: 2}
void: [2]
"""


def test_round_trip_is_lossless(tmp_path):
    cfg = RunConfig.loads(TEXT).validate()
    cfg.dump(tmp_path / "c.yaml")
    again = RunConfig.load(tmp_path / "c.yaml")
    assert again.to_dict() == cfg.to_dict()
    assert again.dump() == cfg.dump()


def test_defaults_validate_with_a_geometry():
    cfg = RunConfig(geometries=["circle 1 1 0.5"]).validate()
    assert cfg.mesh.degree == 2 and cfg.ranks == "1" and cfg.build_material_map().n_geometries == 1


@pytest.mark.parametrize("text", [
    "bogus: 1",
    "mesh: {dim: 2, elements: [4, 4], spacing: 1}",
    "- a list",
    "mesh: [1, 2",
    "output: {mesh: a.vtk, colour: red}",
])
def test_malformed_configs_raise_config_error(text):
    with pytest.raises(ConfigError):
        RunConfig.loads(text)


@pytest.mark.parametrize("patch", [
    {"mesh": {"dim": 4}},
    {"mesh": {"elements": [4]}},
    {"mesh": {"h": [0.1, -0.1]}},
    {"mesh": {"degree": 0}},
    {"experiment": "wind"},
    {"eps_snap": 0.7},
    {"material_map": {0: 0, 1: 1}},
    {"geometries": ["hexagon 1 2 3"]},
])
def test_invalid_values_raise_on_validate(patch):
    d = RunConfig.loads(TEXT).to_dict()
    for k, v in patch.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict) and k != "material_map":
            d[k].update(v)
        else:
            d[k] = v
    with pytest.raises(ConfigError):
        RunConfig.from_dict(d).validate()


def test_geometry_lines_parse_to_primitives(tmp_path):
    P = parse_geometry("plane 0 1 0.5", 2)
    assert isinstance(P, Plane)
    x = np.array([[0.3, 0.2], [0.3, 0.9]])
    assert np.all(np.sign(P.phi(x)) == [-1, 1])
    S = parse_geometry("sphere 0 0 0 1", 3)
    assert isinstance(S, Sphere) and S.phi(np.zeros((1, 3)))[0] == pytest.approx(-1.0)
    C = parse_geometry("union circle 0 0 1 ; circle 3 0 1", 2)
    assert isinstance(C, Composite)
    assert C.phi(np.array([[3.0, 0.0]]))[0] < 0 < C.phi(np.array([[1.5, 0.0]]))[0]
    G = SampledGrid(np.arange(12.0).reshape(3, 4) - 5, (0.0, 0.0), (1.0, 1.0))
    G.write(tmp_path / "g.txt")
    assert isinstance(parse_geometry("grid g.txt", 2, base_dir=tmp_path), SampledGrid)


@pytest.mark.parametrize("line", ["", "plane 1 0", "circle 1 1 -0.5", "circle a b c", "grid", "grid missing.txt",
                                  "torus 1 2 3"])
def test_bad_geometry_lines(line):
    with pytest.raises(ConfigError):
        parse_geometry(line, 2)
