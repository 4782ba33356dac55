"""Collects one PASS/FAIL line per acceptance criterion."""

import functools
import time


class _Results:
    def __init__(self):
        self.rows = {}

    def add(self, number, title, passed, elapsed, budget, detail):
        self.rows[number] = (title, passed, elapsed, budget, detail)

    def lines(self):
        out = []
        for number in sorted(self.rows):
            title, passed, elapsed, budget, detail = self.rows[number]
            status = "PASS" if passed else "FAIL"
            out.append(f"criterion {number:2d}: {status}  {title}  [{elapsed:.2f} s / budget {budget:g} s]  {detail}")
        return out


RESULTS = _Results()


def record(number, title, budget):
    """Time the wrapped check, require it to finish within ``budget`` seconds, and log the outcome."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            try:
                detail = fn(*args, **kwargs) or ""
            except AssertionError as exc:
                RESULTS.add(number, title, False, time.perf_counter() - start, budget, str(exc).splitlines()[0] if str(exc) else "assertion failed")
                raise
            elapsed = time.perf_counter() - start
            ok = elapsed <= budget
            RESULTS.add(number, title, ok, elapsed, budget, detail if ok else f"over budget; {detail}")
            assert ok, f"criterion {number} took {elapsed:.2f} s, budget {budget:g} s"

        return run

    return wrap
