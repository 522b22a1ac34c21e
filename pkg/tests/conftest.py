import time

import numpy as np
import pytest

from licsi.channel import ChannelConfig, synthesize_dataset
from licsi.pipeline import DESK, analyze_slice
from licsi.rateless import CodecConfig, train

TRAIN_SEED = 0
TEST_SEED = 100_000
N_TRAIN = 2000
N_TEST = 500


@pytest.fixture(scope="session")
def desk_train_slices():
    return synthesize_dataset(ChannelConfig(seed=TRAIN_SEED), N_TRAIN)


@pytest.fixture(scope="session")
def desk_test_slices():
    return synthesize_dataset(ChannelConfig(seed=TEST_SEED), N_TEST)


def _analyze(slices):
    return [analyze_slice(s, DESK.n_samples, DESK.stride, DESK.r_f) for s in slices]


@pytest.fixture(scope="session")
def desk_train_analysis(desk_train_slices):
    return _analyze(desk_train_slices)


@pytest.fixture(scope="session")
def desk_test_analysis(desk_test_slices):
    return _analyze(desk_test_slices)


@pytest.fixture(scope="session")
def trained_desk(desk_train_analysis):
    """Desk-scale codec trained on 2000 slices; returns (codec, seconds)."""
    c5 = np.stack([a.basis.c5 for a in desk_train_analysis])
    cfg = CodecConfig(input_dim=2 * DESK.n_tx * DESK.r_f, m=DESK.m)
    t0 = time.perf_counter()
    codec = train(c5, cfg)
    return codec, time.perf_counter() - t0


@pytest.fixture(scope="session")
def desk_codec(trained_desk):
    return trained_desk[0]


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props and rep.when == "call":
                lines.append((props["criterion"], key == "passed", props.get("detail", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, detail in sorted(lines):
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")
