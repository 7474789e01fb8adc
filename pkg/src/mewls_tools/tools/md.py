# Markdown rendering of trace summaries

from collections.abc import Iterable, Sequence

from mewls_tools.models import TerminationReport
from mewls_tools.tools.typing import Stringable

# Backslash-escaped Markdown punctuation, plus the HTML-sensitive characters that are
# replaced by entities
_ESCAPES = str.maketrans(
    {
        **{c: f"\\{c}" for c in "\\`*_{}[]()#+-.!"},
        "<": "&lt;",
        ">": "&gt;",
        "|": "&#124;",
    }
)


def gen_row(cell_values: Iterable[Stringable]) -> str:
    """
    :return: One table row, cells rendered with `str`, terminated by a newline
    """
    return "|" + "|".join(map(str, cell_values)) + "|\n"


def gen_header_and_alignment_rows(headers: Iterable[str]) -> str:
    """
    :return: The header row of a table followed by its `---` separator row
    """
    headers = list(headers)
    return gen_row(f" {h} " for h in headers) + gen_row(
        "-" * (len(h) + 2) for h in headers
    )


def escape(text: str) -> str:
    r"""
    Make `text` render literally inside a table cell: Markdown punctuation
    (\`*_{}[]()#+-.!) is backslash-escaped and `<`, `>`, `|` become HTML entities
    """
    return text.translate(_ESCAPES)


def fmt_num(v: float) -> str:
    """
    Format a number compactly for a table cell
    """
    return f"{v:.4g}"


def termination_table(report: TerminationReport) -> str:
    """
    Generate a two-column table of a termination report and its evidence
    """
    table = gen_header_and_alignment_rows(["field", "value"])
    table += gen_row(["reason", escape(report.reason.value)])
    table += gen_row(["E_final", fmt_num(report.E_final)])
    for k, v in report.evidence.items():
        if isinstance(v, float):
            cell = fmt_num(v)
        elif isinstance(v, list):
            cell = ", ".join(fmt_num(e) for e in v)
        else:
            cell = str(v)
        table += gen_row([escape(k), escape(cell)])
    return table


def samples_table(
    headers: Sequence[str], rows: Iterable[Sequence[float]], max_rows: int = 20
) -> str:
    """
    Generate a table of numeric rows, keeping at most `max_rows` evenly spread rows
    (always including the first and the last)

    :param headers: The column headers
    :param rows: The numeric rows
    :param max_rows: The maximum number of rows to display
    """
    rows = list(rows)
    if len(rows) > max_rows:
        step = (len(rows) - 1) / (max_rows - 1)
        rows = [rows[round(k * step)] for k in range(max_rows)]

    table = gen_header_and_alignment_rows(escape(h) for h in headers)
    for row in rows:
        table += gen_row(fmt_num(v) for v in row)
    return table
