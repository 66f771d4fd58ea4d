import os
import warnings

import numpy as np
import pytest

from cpids.experiment import RunConfig, build_features
from cpids.synth import SynthConfig, write_dataset

# criterion number -> (description, outcome), filled by the report hook below
_ACCEPTANCE: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, text): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    n, text = mark.args
    entry = _ACCEPTANCE.setdefault(n, [text, "PASS"])
    if rep.when == "call" and rep.failed or rep.when == "setup" and rep.failed:
        entry[1] = "FAIL"
    elif rep.skipped and entry[1] == "PASS":
        entry[1] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        text, status = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status:<4} {text}")


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    write_dataset(SynthConfig(seed=0), out)
    return out


@pytest.fixture(scope="session")
def synth_config(synth_dir):
    return RunConfig(
        packets=str(synth_dir / "packets.csv"),
        physical=str(synth_dir / "physical.csv"),
        labels=str(synth_dir / "labels.csv"),
        seed=0,
    )


@pytest.fixture(scope="session")
def synth_features(synth_config):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_features(synth_config)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dataset_config_path():
    return os.environ.get("CPIDS_DATASET_CONFIG")
