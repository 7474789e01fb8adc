import pytest

from mewls_tools.models import TerminationReason, TerminationReport
from mewls_tools.tools.md import (
    escape,
    fmt_num,
    gen_header_and_alignment_rows,
    gen_row,
    samples_table,
    termination_table,
)


@pytest.mark.parametrize(
    ("input_text", "expected_output"),
    [
        ("BreakdownJacobianSingular", "BreakdownJacobianSingular"),
        ("eig_min_schur", r"eig\_min\_schur"),
        ("min w", "min w"),
        ("", ""),
        ("1.5e-3", r"1\.5e\-3"),
        ("a | b < c", "a &#124; b &lt; c"),
        (r"\`*_{}[]()#+-.!<>|", r"\\\`\*\_\{\}\[\]\(\)\#\+\-\.\!&lt;&gt;&#124;"),
    ],
)
def test_escape(input_text, expected_output):
    assert escape(input_text) == expected_output


def test_gen_row():
    assert gen_row(["a", 1, 2.5]) == "|a|1|2.5|\n"


def test_gen_header_and_alignment_rows():
    assert gen_header_and_alignment_rows(["E", "mu"]) == "| E | mu |\n|---|----|\n"


@pytest.mark.parametrize(
    ("v", "expected"), [(0.05, "0.05"), (3.80123e-2, "0.03801"), (1e-12, "1e-12")]
)
def test_fmt_num(v, expected):
    assert fmt_num(v) == expected


def test_termination_table():
    report = TerminationReport(
        reason=TerminationReason.BREAKDOWN_JACOBIAN_SINGULAR,
        E_final=0.038,
        evidence={"bracket": [0.03799, 0.03801], "bisections": 7},
    )
    lines = termination_table(report).splitlines()
    assert lines[0] == "| field | value |"
    assert lines[2] == "|reason|BreakdownJacobianSingular|"
    assert lines[3] == "|E_final|0.038|"
    assert lines[4] == r"|bracket|0\.03799, 0\.03801|"
    assert lines[5] == "|bisections|7|"


class TestSamplesTable:
    def test_all_rows_when_short(self):
        table = samples_table(["E", "mu"], [[1.0, 0.0], [0.5, 1.0]])
        assert table.splitlines()[2:] == ["|1|0|", "|0.5|1|"]

    def test_thinned_keeps_ends(self):
        rows = [[float(k), float(k)] for k in range(100)]
        lines = samples_table(["E", "mu"], rows, max_rows=5).splitlines()[2:]
        assert len(lines) == 5
        assert lines[0] == "|0|0|"
        assert lines[-1] == "|99|99|"
