import math

import numpy as np
import pytest
from hypothesis import settings

from mcmcshape.alignment import align_training_set

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


def brute_force_sdf(mask):
    """Signed distance by exhaustive search over all pixel pairs."""
    mask = np.asarray(mask, dtype=bool)
    rr, cc = np.indices(mask.shape)
    pts = np.column_stack([rr.ravel(), cc.ravel()]).astype(float)
    inside = mask.ravel()
    out = np.empty(len(pts))
    for k, p in enumerate(pts):
        other = pts[inside != inside[k]]
        d = np.sqrt(((other - p) ** 2).sum(axis=1)).min()
        out[k] = -d if inside[k] else d
    return out.reshape(mask.shape)


def normal_pdf(d, sigma):
    return math.exp(-d * d / (2 * sigma * sigma)) / (sigma * math.sqrt(2 * math.pi))


def disk(dims, cy, cx, r):
    rows, cols = np.indices(dims)
    return (rows - cy) ** 2 + (cols - cx) ** 2 <= r * r


def box(dims, r0, r1, c0, c1):
    m = np.zeros(dims, dtype=bool)
    m[r0:r1, c0:c1] = True
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_disk_set():
    """Two classes of one and two disks on a 16x16 grid, no registration."""
    dims = (16, 16)
    raw = [(disk(dims, 8, 8, 4), 0), (disk(dims, 7, 8, 5), 1), (disk(dims, 8, 7, 3), 1)]
    return align_training_set(raw, class_names=("a", "b"), align=False, sigma=6.0)


def field_set(classes, sigma):
    """TrainingSet from raw fields: ``classes`` is a list of lists of 2D arrays."""
    from mcmcshape.alignment import IDENTITY, AlignedShape, TrainingSet

    shapes = []
    for c, fields in enumerate(classes):
        for j, f in enumerate(fields):
            f = np.asarray(f, dtype=float)
            shapes.append(AlignedShape(f"c{c}s{j}", c, f < 0, f, IDENTITY))
    names = tuple(f"class{c}" for c in range(len(classes)))
    return TrainingSet(tuple(shapes), names, float(sigma), shapes[0].id)


# -- acceptance criteria reporting ---------------------------------------------

ACCEPTANCE_LINES = {}


class Criterion:
    """Context manager that records one PASS/FAIL line per acceptance criterion."""

    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = self.detail
        if exc_type is not None and not detail:
            detail = f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        ACCEPTANCE_LINES[self.number] = f"criterion {self.number:>2} {status}  {self.title}: {detail}"
        return False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
