"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def record(number: int, title: str, ok: bool, detail: str = "") -> str:
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}"
    if detail:
        line += f" [{detail}]"
    print(line, flush=True)
    LINES.append(line)
    return line
