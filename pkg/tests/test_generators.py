import numpy as np
import pytest

from acoustic_vem import generate_mesh, get_domain
from acoustic_vem.errors import UnsupportedCombination
from acoustic_vem.generators import CIRCLE_SEGMENTS, PATTERNS
from acoustic_vem.mesh import barycenter_star_violations, check_regularity

STRUCTURED = [p for p in PATTERNS if p != "voronoi"]
POLYGONAL = [("unit_square", 4), ("l_shape", 4), ("h_shape", 8)]


def test_domain_areas():
    assert get_domain("unit_square").area == pytest.approx(1.0)
    assert get_domain("l_shape").area == pytest.approx(0.75)
    assert get_domain("h_shape").area == pytest.approx(3.3125)
    circle = get_domain("circle_obstacles")
    n = CIRCLE_SEGMENTS
    inscribed = 0.5 * n * np.sin(2 * np.pi / n)
    assert circle.area == pytest.approx(inscribed - 4 * 0.4**2, rel=1e-12)


def test_reentrant_corners():
    assert get_domain("unit_square").reentrant_corners == []
    assert get_domain("l_shape").reentrant_corners == [(0.5, 0.5)]
    assert len(get_domain("h_shape").reentrant_corners) == 4
    # every obstacle corner points into the fluid
    assert len(get_domain("circle_obstacles").reentrant_corners) == 16


@pytest.mark.parametrize("pattern", STRUCTURED)
@pytest.mark.parametrize("domain,res", POLYGONAL)
def test_structured_cover_domain(domain, res, pattern):
    m = generate_mesh(domain, pattern, res)
    assert m.total_area == pytest.approx(get_domain(domain).area, rel=1e-12)
    assert check_regularity(m, 0.1).passed
    assert len(barycenter_star_violations(m, range(m.n_cells))) == 0


def test_pattern_cell_shapes():
    assert {len(c) for c in generate_mesh("unit_square", "triangles", 4).cells} == {3}
    assert {len(c) for c in generate_mesh("unit_square", "squares", 4).cells} == {4}
    assert {len(c) for c in generate_mesh("unit_square", "square_triangle_mix", 4).cells} == {3, 4}
    assert 6 in {len(c) for c in generate_mesh("unit_square", "hexagons", 4).cells}
    trap = generate_mesh("unit_square", "trapezoids", 4)
    assert {len(c) for c in trap.cells} == {4}
    # trapezoids are not all rectangles
    assert np.ptp(trap.geometry.area) > 0


def test_triangle_counts():
    assert generate_mesh("l_shape", "triangles", 10).n_cells == 150


@pytest.mark.parametrize("pattern", STRUCTURED)
def test_circle_structured_unsupported(pattern):
    with pytest.raises(UnsupportedCombination):
        generate_mesh("circle_obstacles", pattern, 8)


@pytest.mark.parametrize("domain,res", [("l_shape", 3), ("h_shape", 4)])
def test_misaligned_resolution(domain, res):
    with pytest.raises(UnsupportedCombination):
        generate_mesh(domain, "squares", res)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        generate_mesh("l_shape", "squares", 0)
    with pytest.raises(ValueError):
        generate_mesh("l_shape", "pentagons", 4)
    with pytest.raises(ValueError):
        get_domain("annulus")


@pytest.mark.parametrize(
    "domain,n",
    [("unit_square", 20), ("l_shape", 50), ("l_shape", 200), ("h_shape", 40), ("circle_obstacles", 120)],
)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_voronoi(domain, n, seed):
    m = generate_mesh(domain, "voronoi", n, seed)
    assert m.n_cells == n
    assert abs(m.total_area - get_domain(domain).area) < 1e-10
    # convex cells: refinement never hits a cell that is not star-shaped at its barycenter
    assert len(barycenter_star_violations(m, range(m.n_cells))) == 0


def test_voronoi_seed_changes_mesh():
    a = generate_mesh("l_shape", "voronoi", 50, 0)
    b = generate_mesh("l_shape", "voronoi", 50, 1)
    assert a.vertices.shape != b.vertices.shape or not np.array_equal(a.vertices, b.vertices)
