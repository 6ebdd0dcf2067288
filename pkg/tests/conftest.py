"""Collects acceptance-criterion verdicts and prints one line per criterion."""

import functools
import time

ACCEPTANCE = {}


def criterion(number, title):
    """Record pass/fail (and the measured detail string the test returns) for criterion ``number``."""

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                ACCEPTANCE[number] = (title, False, f"{type(exc).__name__}: {str(exc).splitlines()[0][:160] if str(exc) else ''}", time.perf_counter() - t0)
                raise
            ACCEPTANCE[number] = (title, True, detail or "", time.perf_counter() - t0)

        return wrapper

    return deco


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail, seconds = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] #{number:<2d} {title} ({seconds:.1f} s) {detail}")
