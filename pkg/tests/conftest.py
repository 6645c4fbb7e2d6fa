import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from easr.core import TrialSet
from easr.synthgen import GeneratorConfig, generate

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_set(rng, n_subjects=3, n_runs=2, per_run=12, c=4, t=64, k=2) -> TrialSet:
    n = n_subjects * n_runs * per_run
    subj = np.repeat(np.arange(n_subjects), n_runs * per_run)
    run = np.tile(np.repeat(np.arange(n_runs), per_run), n_subjects)
    y = np.tile(np.arange(per_run) % k, n_subjects * n_runs)
    X = rng.standard_normal((n, c, t))
    return TrialSet(X, y, subj, run, class_count=k, sampling_rate=128.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_synth():
    cfg = GeneratorConfig(n_subjects=5, trials_per_class_per_session=8, n_times=128, seed=3)
    return generate(cfg)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
