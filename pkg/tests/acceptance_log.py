"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES = []


def record(number, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    LINES.append((number, line))
    print(line)
    return line
