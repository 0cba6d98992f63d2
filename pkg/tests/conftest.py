import numpy as np
import pytest


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


def brute_erode(mask, k):
    """Pixel kept iff its whole (2*ceil(k/2)+1)-square lies on set in-canvas pixels."""
    h, w = mask.shape
    r = -(-k // 2)
    out = np.zeros_like(mask)
    for y in range(h):
        for x in range(w):
            ok = True
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy, xx = y + dy, x + dx
                    if not (0 <= yy < h and 0 <= xx < w and mask[yy, xx]):
                        ok = False
            out[y, x] = ok
    return out


def brute_sq_dist(sources):
    h, w = sources.shape
    ys, xs = np.nonzero(sources)
    yy, xx = np.mgrid[:h, :w]
    out = np.full((h, w), np.inf)
    for sy, sx in zip(ys, xs):
        out = np.minimum(out, (yy - sy) ** 2 + (xx - sx) ** 2)
    return out


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion."""

    def record(number, passed, detail):
        ACCEPTANCE[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        print(ACCEPTANCE[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
