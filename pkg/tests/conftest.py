import sys
import time
from pathlib import Path

from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title, budget): acceptance criterion with runtime budget in seconds")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for key, value in report.user_properties:
        if key == "criterion":
            number, title, budget = value
            entry = _criteria.setdefault(number, {"title": title, "budget": budget, "outcomes": [], "seconds": 0.0})
            entry["outcomes"].append(report.outcome)
            entry["seconds"] += report.duration


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", tuple(marker.args)))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        ok = all(o == "passed" for o in e["outcomes"])
        within = e["seconds"] <= e["budget"]
        status = "PASS" if ok and within else "FAIL"
        note = "" if within else f" (over the {e['budget']:g} s budget)"
        tr.write_line(f"criterion {number:>2} {status}  {e['title']}  [{len(e['outcomes'])} checks, "
                      f"{e['seconds']:.2f} s{note}]")
