import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def default_corpus():
    from nilm_adl.signal_model import synth_dataset

    return synth_dataset()


@pytest.fixture(scope="session")
def corpus_features(default_corpus):
    """(normalized features, label codes) for the default synthetic corpus."""
    from nilm_adl.preprocess import EventWindow, fft_features, minmax_normalize

    X = np.vstack([fft_features(EventWindow(w.start_t, w.readings)).magnitudes for w in default_corpus.windows])
    Xn, _ = minmax_normalize(X)
    y = np.array([int(w.label) for w in default_corpus.windows])
    return Xn, y


# -- acceptance reporting -------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    prev = _ACCEPTANCE.get(number, (title, "PASS"))[1]
    _ACCEPTANCE[number] = (title, "FAIL" if failed or prev == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] {number:2d}. {title}")
