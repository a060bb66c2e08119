import numpy as np
import pytest

from phasetrack.fieldio import read_field, write_field
from phasetrack.mesh import Field, Rectangle, build_mesh


def test_round_trip_is_bit_exact(tmp_path):
    mesh = build_mesh(Rectangle(-3.0, -3.0, 6.0, 3.0), 9, 7)
    rng = np.random.default_rng(0)
    for trial in range(5):
        values = rng.standard_normal(mesh.n_vertices) * 10.0 ** rng.integers(-200, 200)
        f = Field(mesh, values)
        path = tmp_path / f"f{trial}.phf"
        write_field(path, f, 0.1, 0.123456789)
        back, meta = read_field(path)
        assert back.values.tobytes() == f.values.tobytes()
        assert meta.epsilon == 0.1
        assert meta.time == 0.123456789
        assert meta.nx == 9 and meta.ny == 7


def test_special_values_round_trip(tmp_path):
    mesh = build_mesh(Rectangle(0.0, 0.0, 1.0, 1.0), 2, 2)
    values = np.array([0.0, -0.0, 5e-324, -5e-324, 1.7976931348623157e308,
                       -1.1, 1 / 3, np.pi, 2.2250738585072014e-308])
    f = Field(mesh, values)
    path = tmp_path / "special.phf"
    write_field(path, f, 0.05, 0.0)
    back, _ = read_field(path)
    assert back.values.tobytes() == values.tobytes()


def test_file_layout(tmp_path):
    mesh = build_mesh(Rectangle(0.0, 0.0, 1.0, 1.0), 2, 2)
    path = tmp_path / "ones.phf"
    write_field(path, Field(mesh, np.ones(9)), 0.1, 0.0)
    lines = path.read_text().splitlines()
    assert lines[0] == "PHF1"
    assert lines[1].split()[:2] == ["2", "2"]
    assert len(lines) == 3 + 9  # header plus one value line per vertex


def test_read_onto_existing_mesh(tmp_path):
    mesh = build_mesh(Rectangle(0.0, 0.0, 2.0, 1.0), 4, 3)
    f = Field(mesh, np.arange(mesh.n_vertices, dtype=float))
    path = tmp_path / "f.phf"
    write_field(path, f, 0.1, 0.2)
    back, _ = read_field(path, mesh=mesh)
    assert back.mesh is mesh

    other = build_mesh(Rectangle(0.0, 0.0, 2.0, 1.0), 3, 4)
    with pytest.raises(ValueError, match="does not match"):
        read_field(path, mesh=other)


def test_malformed_files_rejected(tmp_path):
    bad_magic = tmp_path / "bad.phf"
    bad_magic.write_text("NOPE\n1 1 0 0 1 1\n0.1 0\n1\n1\n1\n1\n")
    with pytest.raises(ValueError, match="PHF1"):
        read_field(bad_magic)

    short = tmp_path / "short.phf"
    short.write_text("PHF1\n2 2 0 0 1 1\n0.1 0\n1\n2\n3\n")
    with pytest.raises(ValueError, match="expected 9 values"):
        read_field(short)

    bad_header = tmp_path / "hdr.phf"
    bad_header.write_text("PHF1\n2 x 0 0 1 1\n0.1 0\n")
    with pytest.raises(ValueError, match="malformed"):
        read_field(bad_header)
