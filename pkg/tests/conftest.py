import numpy as np
import pytest

from windscen import pipeline, synth
from windscen.features import FeatureSpec
from windscen.timeseries import FarmRegistry, SeriesPanel


def make_panel(power, nwp, caps=None, ids=None, neighbors=None, start="2021-03-01T00:00:00"):
    """Panel from raw arrays: power (T, n_w), nwp (T, n_w, n_tau)."""
    power = np.asarray(power, dtype=float)
    T, n_w = power.shape
    ids = ids or [f"F{w}" for w in range(n_w)]
    caps = [100.0] * n_w if caps is None else caps
    reg = FarmRegistry.build(ids, caps, neighbors)
    return SeriesPanel.from_arrays(reg, np.datetime64(start, "s"), power, nwp)


SMALL_SPEC = synth.OracleSpec(n_farms=3, n_tau=6, seed=11)
SMALL_DAYS = 12


@pytest.fixture(scope="session")
def small_feed():
    return synth.generate_feed(SMALL_SPEC, synth.days(SMALL_DAYS))


@pytest.fixture(scope="session")
def small_cfg():
    return pipeline.PipelineConfig(n_tau=6, regression_days=4, ecdf_days=7, s_max=400,
                                   copula_stride=2, seed=5, train_end="2020-01-09T00:00:00Z",
                                   features=FeatureSpec(neighbor_count=1))


@pytest.fixture(scope="session")
def small_bundle(small_feed, small_cfg):
    return pipeline.train(small_feed[0], small_cfg)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request, capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        request.config.stash.setdefault(_VERDICTS, []).append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
