import numpy as np
import pytest
import torch

from rsinpaint.imaging import Image, Mask

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h=16, w=16, kind="rgb", range_tag="unit"):
    c = 3 if kind == "rgb" else 1
    data = rng.uniform(0, 1, size=(h, w, c))
    if range_tag == "signed":
        data = data * 2 - 1
    return Image(data, range_tag, kind)


def random_mask(rng, h=16, w=16, p=0.3):
    return Mask((rng.uniform(size=(h, w)) < p).astype(np.float32))


# (criterion, passed, detail) rows filled in by test_acceptance
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}")
