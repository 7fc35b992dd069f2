import pytest

from hqa.labels import normalize_label


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("Yes ", "yes"),
        ("  NO.", "no"),
        ("Left!", "left"),
        ("Pedestrian   Crossing", "pedestrian crossing"),
        ("none", "none"),
        ("", ""),
        (None, ""),
        ("what?!", "what"),
    ],
)
def test_normalize(raw, expected):
    assert normalize_label(raw) == expected


def test_idempotent():
    for s in ["Yes.", " a  b ", "Bicycle Crossing!"]:
        once = normalize_label(s)
        assert normalize_label(once) == once
