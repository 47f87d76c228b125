import os
import struct
from pathlib import Path

import numpy as np
import pytest

MNIST_DIR = Path(os.environ.get("INCRANK_DATA_DIR", "/root/data/mnist"))


def have_mnist() -> bool:
    return (MNIST_DIR / "train-images-idx3-ubyte").exists() or \
        (MNIST_DIR / "train-images-idx3-ubyte.gz").exists()


needs_mnist = pytest.mark.skipif(not have_mnist(), reason=f"MNIST IDX files not found in {MNIST_DIR}")


@pytest.fixture(scope="session")
def mnist():
    if not have_mnist():
        pytest.skip(f"MNIST IDX files not found in {MNIST_DIR}")
    from incrank.data import load_mnist
    return load_mnist(MNIST_DIR)


def write_idx(path, array: np.ndarray, magic: int) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.astype(np.uint8).tobytes())


@pytest.fixture
def fake_mnist_dir(tmp_path):
    """Tiny MNIST-shaped IDX files: 60 train / 20 test images, 10 classes."""
    rng = np.random.default_rng(7)
    for prefix, n in (("train", 60), ("t10k", 20)):
        images = rng.integers(0, 256, size=(n, 28, 28))
        labels = np.arange(n) % 10
        write_idx(tmp_path / f"{prefix}-images-idx3-ubyte", images, 0x803)
        write_idx(tmp_path / f"{prefix}-labels-idx1-ubyte", labels, 0x801)
    return tmp_path


def central_diff(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        fp = f()
        arr[idx] = old - h
        fm = f()
        arr[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def assert_grad_close(analytic, numeric, rel=1e-4, abs_floor=1e-7, name=""):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    assert analytic.shape == numeric.shape, name
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    ok = (diff <= abs_floor) | (diff <= rel * scale)
    assert ok.all(), f"{name}: max diff {diff.max():.3e}, worst rel {(diff / np.maximum(scale, 1e-300)).max():.3e}"


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
