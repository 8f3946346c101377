"""Verdict lines from the acceptance tests, gathered for the terminal summary."""

LINES: list[str] = []


def record(line: str) -> None:
    LINES.append(line)
