import numpy as np
import pytest

from optable.dynamic_detect import ActionPair
from optable.imaging import downsample2, downsample_mask
from optable.static_detect import Sample
from optable.synth import action_pair, item_rng, static_scene

ACCEPTANCE_LINES = []


def record_criterion(name, ok, detail="", status=None):
    status = status or ("PASS" if ok else "FAIL")
    ACCEPTANCE_LINES.append(f"[{status}] {name}: {detail}")
    print(f"[{status}] {name}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_samples(n, seed=7, width=320, height=240):
    out = []
    for i in range(n):
        img, mask = static_scene(item_rng(seed, i), width, height)
        out.append(Sample(downsample2(img), downsample_mask(mask), f"s{i}"))
    return out


def small_pairs(n, seed=11, width=320, height=240, **kw):
    out = []
    for i in range(n):
        d = action_pair(item_rng(seed, i), width, height, **kw)
        out.append(ActionPair(downsample2(d["before"]), downsample2(d["after"]),
                              downsample_mask(d["appeared"]), downsample_mask(d["disappeared"]), f"p{i}"))
    return out


@pytest.fixture(scope="session")
def static_samples():
    return small_samples(4)


@pytest.fixture(scope="session")
def dynamic_pairs():
    return small_pairs(4)
