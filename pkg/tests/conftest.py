import pytest

from lobfluid.events import Action, OrderEvent, Side


def limit(t, oid, side, price, qty=1):
    return OrderEvent(t, str(oid), Action.LIMIT, side, price, qty)


def market(t, oid, side, qty=1):
    return OrderEvent(t, str(oid), Action.MARKET, side, None, qty)


def cancel(t, oid, side, qty=1):
    return OrderEvent(t, str(oid), Action.CANCEL, side, None, qty)


@pytest.fixture
def basic_book_events():
    """bid 101.325 x1, ask 101.329 x1."""
    return [limit(0, 1, Side.BUY, 101325), limit(1, 2, Side.SELL, 101329)]


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        detail = dict(item.user_properties).get("detail", "")
        _ACCEPTANCE[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        tr.write_line(f"AC{number:<2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else ""))
