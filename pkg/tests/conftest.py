import numpy as np
import pytest

from steklov_afem import DomainSpec, TriangleMesh, assemble, bisect, generate_uniform


def two_triangle_square():
    return generate_uniform(DomainSpec.unit_square(), np.sqrt(2.0))


def single_triangle():
    return TriangleMesh.from_arrays([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture
def square2():
    return two_triangle_square()


@pytest.fixture
def square8():
    return generate_uniform(DomainSpec.unit_square(), np.sqrt(2.0) / 2)


@pytest.fixture(scope="session")
def small_problems():
    """Meshes with at most 200 vertices and their assembled forms."""
    out = []
    for n in (1, 2, 3, 4, 6, 8, 10, 13):
        m = generate_uniform(DomainSpec.unit_square(), np.sqrt(2.0) / n)
        out.append((f"square-{n}", m))
    for n in (2, 3, 4, 6, 8, 10, 13):
        m = generate_uniform(DomainSpec.lshape(), np.sqrt(2.0) / n)
        out.append((f"lshape-{n}", m))
    # adaptively graded meshes toward the reentrant corner
    m = generate_uniform(DomainSpec.lshape(), np.sqrt(2.0) / 4)
    for level in range(6):
        d = np.linalg.norm(m.centroids - 0.5, axis=1)
        m = bisect(m, np.flatnonzero(d < 0.3))
        out.append((f"graded-{level}", m))
    return [(name, m, assemble(m)) for name, m in out if m.n_vertices <= 200]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import summary_lines
    except ImportError:
        return
    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
