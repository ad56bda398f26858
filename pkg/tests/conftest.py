import pytest

from bootparse.dataset import Example
from bootparse.mrl import parse_mrl

FESTIVALS_QUESTION = "Any festivals this weekend".split()
FESTIVALS_TOP = "[IN:GET_EVENT Any [SL:CATEGORY_EVENT festivals ] [SL:DATE_TIME this weekend ] ]"
FESTIVALS_MRL = "[IN:GET_EVENT [SL:CATEGORY_EVENT festivals ] [SL:DATE_TIME this weekend ] ]"
ITALIAN_QUESTION = "Tutti i festival questo fine settimana".split()
ITALIAN_MRL = "[IN:GET_EVENT [SL:CATEGORY_EVENT festival ] [SL:DATE_TIME questo fine settimana ] ]"


@pytest.fixture
def festivals_example():
    return Example("train-1", "en", FESTIVALS_QUESTION, parse_mrl(FESTIVALS_MRL))


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
