import numpy as np
import pytest


def dense_diffusion_matrix(cx, cy, eta, h=1.0):
    """Index-by-index assembly of I - C/eta from face coefficients."""
    rows, cols = cy.shape[0] + 1, cx.shape[1] + 1
    n = rows * cols
    a = np.eye(n)
    s = 1.0 / (eta * h * h)
    for i in range(rows):
        for j in range(cols):
            p = i * cols + j
            nbrs = []
            if j + 1 < cols:
                nbrs.append((p + 1, cx[i, j]))
            if j > 0:
                nbrs.append((p - 1, cx[i, j - 1]))
            if i + 1 < rows:
                nbrs.append((p + cols, cy[i, j]))
            if i > 0:
                nbrs.append((p - cols, cy[i - 1, j]))
            for q, c in nbrs:
                a[p, q] -= s * c
                a[p, p] += s * c
    return a


def two_phase_faces(n=64, contrast=1e4, block=16):
    """Checkerboard of coefficient 1 and 1/contrast; harmonic face averages."""
    yy, xx = np.mgrid[0:n, 0:n]
    c = np.where(((yy // block) + (xx // block)) % 2 == 1, 1.0 / contrast, 1.0)
    cx = 2 / (1 / c[:, 1:] + 1 / c[:, :-1])
    cy = 2 / (1 / c[1:, :] + 1 / c[:-1, :])
    return cx, cy


def random_spd(n, rng, cond=100.0):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return (q * np.geomspace(1, cond, n)) @ q.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
