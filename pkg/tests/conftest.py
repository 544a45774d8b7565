import sys

import pytest

from nosebreak_lab.lab import Lab, LabConfig
from nosebreak_lab.simkernel import boot


@pytest.fixture
def host():
    return boot()


@pytest.fixture
def make_lab():
    def factory(**kw):
        return Lab.build(LabConfig(**kw))
    return factory


@pytest.fixture
def lab(make_lab):
    return make_lab()



def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", {})
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
