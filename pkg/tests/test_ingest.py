import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chipqa.errors import (
    BadIntensity,
    CoordinateOutOfRange,
    DuplicateCoordinate,
    MissingProbe,
    NotEnoughChips,
    ParseError,
    ProbesetTooSmall,
    UnknownCoordinate,
)
from chipqa.ingest import load_chipset, parse_chip, parse_layout, serialize_layout

from conftest import TINY_CHIP, TINY_LAYOUT, make_files


def test_smallest_layout(tiny_layout):
    assert tiny_layout.probesets == ("PS1", "PS2")
    assert (tiny_layout.rows, tiny_layout.cols) == (2, 2)
    assert tiny_layout.probes() == [("PS1", 0, 0, 0), ("PS1", 1, 1, 0), ("PS2", 0, 0, 1), ("PS2", 1, 1, 1)]


def test_duplicate_coordinate():
    text = "rows=2\tcols=2\nPS1\t0\t0\t0\nPS1\t1\t1\t0\nPS2\t0\t1\t0\nPS2\t1\t1\t1\n"
    with pytest.raises(DuplicateCoordinate):
        parse_layout(text)


def test_out_of_range():
    with pytest.raises(CoordinateOutOfRange):
        parse_layout("rows=2\tcols=2\nPS1\t0\t0\t0\nPS1\t1\t2\t0\n")


def test_single_probe_probeset():
    with pytest.raises(ProbesetTooSmall):
        parse_layout("rows=2\tcols=2\nPS1\t0\t0\t0\nPS1\t1\t1\t0\nPS2\t0\t0\t1\n")


@pytest.mark.parametrize(
    "text, line",
    [
        ("rows=2 cols=2\nPS1\t0\t0\t0\n", 1),
        ("rows=2\tcols=2\nPS1\t0\t0\n", 2),
        ("rows=2\tcols=2\n# c\nPS1\t0\tx\t0\n", 3),
    ],
)
def test_malformed_rows_report_line(text, line):
    with pytest.raises(ParseError) as err:
        parse_layout(text)
    assert err.value.line == line


def test_hu133_style_probesets():
    # 2 probesets of 11 probes, as on HU133 arrays
    rows = [f"PS{p}\t{r}\t{r}\t{p}" for p in range(2) for r in range(11)]
    layout = parse_layout("rows=2\tcols=11\n" + "\n".join(rows) + "\n")
    assert layout.n_probes == 22
    assert [sl.stop - sl.start for sl in layout.slices.values()] == [11, 11]


def test_comments_and_canonical_order():
    text = "# header comment\nrows=2\tcols=2\nPS2\t1\t1\t1\nPS1\t1\t1\t0\n\nPS2\t0\t0\t1\nPS1\t0\t0\t0\n"
    assert parse_layout(text) == parse_layout(TINY_LAYOUT)


def test_parse_chip_aligns(tiny_layout):
    np.testing.assert_array_equal(parse_chip(TINY_CHIP, tiny_layout), [100, 200, 50, 80])


def test_parse_chip_missing(tiny_layout):
    with pytest.raises(MissingProbe) as err:
        parse_chip("0\t0\t100\n1\t0\t200\n0\t1\t50\n", tiny_layout)
    assert (err.value.x, err.value.y) == (1, 1)


@pytest.mark.parametrize("value", ["-5", "0", "nan", "inf"])
def test_parse_chip_bad_intensity(tiny_layout, value):
    with pytest.raises(BadIntensity):
        parse_chip(TINY_CHIP.replace("0\t0\t100", f"0\t0\t{value}"), tiny_layout)


def test_parse_chip_unknown_coordinate(tiny_layout):
    text = TINY_CHIP + "5\t5\t10\n"
    with pytest.raises(UnknownCoordinate):
        parse_chip(text, tiny_layout)
    np.testing.assert_array_equal(parse_chip(text, tiny_layout, ignore_unmapped=True), [100, 200, 50, 80])


def test_parse_chip_shuffled_rows(tiny_layout):
    lines = TINY_CHIP.strip().split("\n")
    for seed in range(5):
        random.Random(seed).shuffle(lines)
        np.testing.assert_array_equal(parse_chip("\n".join(lines), tiny_layout), [100, 200, 50, 80])


def test_load_chipset_three_chips():
    manifest, reader = make_files({"c1": TINY_CHIP, "c2": TINY_CHIP, "c3": TINY_CHIP})
    cs = load_chipset(manifest, reader)
    assert cs.raw.values.shape == (3, 4)
    assert cs.chip_names == ("c1", "c2", "c3")
    assert cs.batch_labels is None


def test_load_chipset_one_chip():
    manifest, reader = make_files({"c1": TINY_CHIP})
    with pytest.raises(NotEnoughChips):
        load_chipset(manifest, reader)


def test_load_chipset_batches():
    manifest, reader = make_files(
        {"c1": TINY_CHIP, "c2": TINY_CHIP, "c3": TINY_CHIP}, batches={"c1": "A", "c2": "A", "c3": "B"}
    )
    cs = load_chipset(manifest, reader)
    assert cs.batch_labels == {"c1": "A", "c2": "A", "c3": "B"}
    assert cs.batches() == {"A": ["c1", "c2"], "B": ["c3"]}


def test_load_chipset_error_carries_file():
    manifest, reader = make_files({"c1": TINY_CHIP, "c2": TINY_CHIP.replace("100", "-1")})
    with pytest.raises(BadIntensity, match="c2.tsv"):
        load_chipset(manifest, reader)


def test_partial_batch_labels_rejected():
    manifest = "layout\tl\nchip\ta\tpa\tA\nchip\tb\tpb\n"
    with pytest.raises(ParseError):
        load_chipset(manifest, {}.__getitem__)


@st.composite
def layouts(draw):
    rows = draw(st.integers(1, 6))
    cols = draw(st.integers(2, 6))
    cells = draw(st.permutations(range(rows * cols)))
    n_ps = draw(st.integers(1, max(1, rows * cols // 2)))
    sizes = []
    left = rows * cols
    for _ in range(n_ps):
        if left < 2:
            break
        k = draw(st.integers(2, min(5, left)))
        sizes.append(k)
        left -= k
    probes, c = [], 0
    for p, k in enumerate(sizes):
        for r in range(k):
            probes.append((f"ps{p:02d}", r, cells[c] % cols, cells[c] // cols))
            c += 1
    lines = [f"{a}\t{b}\t{x}\t{y}" for a, b, x, y in probes]
    lines = draw(st.permutations(lines))
    return f"rows={rows}\tcols={cols}\n" + "\n".join(lines) + "\n"


@settings(max_examples=60, deadline=None)
@given(layouts())
def test_layout_round_trip(text):
    layout = parse_layout(text)
    again = parse_layout(serialize_layout(layout))
    assert again == layout
    assert serialize_layout(again) == serialize_layout(layout)
