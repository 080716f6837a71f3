import numpy as np
import pytest

from newscap.store import build_store


def unit_rows(rng, shape):
    """Random float32 rows of unit norm."""
    arr = rng.standard_normal(shape)
    arr /= np.linalg.norm(arr, axis=-1, keepdims=True)
    return arr.astype(np.float32)


def random_store(rng, n, dim, patch_count=None, prefix="rec"):
    ids = [f"{prefix}{i:04d}" for i in range(n)]
    globals_mat = unit_rows(rng, (n, dim))
    patches = (
        unit_rows(rng, (n, patch_count, dim)) if patch_count is not None else None
    )
    return build_store(ids, globals_mat, patches)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "setup" and report.skipped:
        print(f"[acceptance] {name}: SKIP ({report.longrepr[-1]})")
    elif report.when == "call":
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        print(f"[acceptance] {name}: {status}")
