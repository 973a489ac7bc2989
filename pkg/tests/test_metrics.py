import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from edof.image_core import ShapeMismatchError
from edof.metrics import (
    MetricsReport,
    MetricsRow,
    average_gradient,
    edge_strength,
    entropy,
    mse,
    report,
    std_dev,
)


def gray(levels):
    """Unit-range image from 8-bit gray levels."""
    return np.asarray(levels, dtype=np.float64) / 255.0


def ramp(h=6, w=10):
    return gray(np.tile(np.arange(w), (h, 1)))


gray_images = arrays(
    np.uint8, st.tuples(st.integers(3, 12), st.integers(3, 12)), elements=st.integers(0, 255)
).map(gray)


def test_entropy_closed_forms():
    assert entropy(np.full((4, 4), 0.3)) == 0.0
    checker = gray((np.indices((8, 8)).sum(axis=0) % 2) * 255)
    assert entropy(checker) == pytest.approx(1.0, abs=1e-12)
    assert entropy(gray(np.arange(256).reshape(16, 16))) == pytest.approx(8.0, abs=1e-12)


def test_average_gradient_closed_forms():
    assert average_gradient(np.full((5, 5), 0.2)) == 0.0
    assert average_gradient(ramp()) == pytest.approx(np.sqrt(0.5), abs=1e-12)
    assert round(average_gradient(gray([[0, 1], [0, 1]])), 4) == 0.7071
    with pytest.raises(ShapeMismatchError):
        average_gradient(np.zeros((1, 5)))


def test_std_dev_closed_forms():
    assert std_dev(np.full((3, 3), 0.5)) == 0.0
    assert std_dev(gray([[0, 255]])) == 127.5
    assert std_dev(gray([[0, 0, 255, 255]])) == 127.5


def test_edge_strength_closed_forms():
    assert edge_strength(np.full((4, 4), 0.7)) == 0.0
    assert edge_strength(ramp()) == pytest.approx(8.0, abs=1e-12)
    step = gray([[0, 0, 0, 255, 255, 255]] * 3)
    # The two interior pixels beside the step see 4 * 255; the other two see nothing.
    assert edge_strength(step) == pytest.approx((1020 + 1020) / 4, abs=1e-12)
    with pytest.raises(ShapeMismatchError):
        edge_strength(np.zeros((2, 5)))


def test_mse_closed_forms():
    x = gray([[12, 200], [7, 99]])
    assert mse(x, x) == 0.0
    assert mse(gray([[0]]), gray([[2]])) == 4.0
    assert mse(gray([[0, 255]]), gray([[255, 0]])) == 65025.0
    with pytest.raises(ShapeMismatchError):
        mse(np.zeros((2, 2)), np.zeros((2, 3)))


def test_constant_report_is_all_zero():
    c = np.full((6, 6), 0.4)
    rep = report([c, c], c)
    assert [r.label for r in rep.rows] == ["Image 1", "Image 2", "Fused image"]
    for r in rep.rows:
        assert r.values() == [0.0, 0.0, 0.0, 0.0]
    for line in rep.to_table().splitlines()[1:]:
        assert line.split()[-4:] == ["0.0000"] * 4


def test_single_source_equal_to_fused_gives_identical_rows():
    x = ramp()
    rep = report([x], x)
    assert rep.rows[0].values() == rep.rows[1].values()


def test_report_labels_and_shapes():
    x = ramp()
    with pytest.raises(ValueError):
        report([x], x, labels=["only one"])
    with pytest.raises(ShapeMismatchError):
        report([x], ramp(6, 9))


def test_csv_round_trip_with_mse():
    rng = np.random.default_rng(2)
    imgs = [rng.random((9, 9)) for _ in range(3)]
    rep = report(imgs[:2], imgs[2], ref=imgs[0])
    text = rep.to_csv()
    assert text.splitlines()[0] == "label,entropy,avg_gradient,std_dev,edge_strength,mse"
    back = MetricsReport.from_csv(text)
    assert back.to_csv() == text
    for a, b in zip(rep.rows, back.rows):
        np.testing.assert_allclose(a.values(), b.values(), atol=5e-5)


def test_table_has_four_decimals():
    table = MetricsReport([MetricsRow("a", 1.0, 2.5, 3.0, 0.123456)]).to_table()
    assert table.splitlines()[1].split() == ["a", "1.0000", "2.5000", "3.0000", "0.1235"]


@settings(max_examples=80, deadline=None)
@given(img=gray_images)
def test_transpose_invariance(img):
    for f in (entropy, average_gradient, std_dev, edge_strength):
        assert f(img.T) == pytest.approx(f(img), rel=1e-12, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(img=gray_images)
def test_bounds(img):
    h = entropy(img)
    assert 0.0 <= h <= 8.0
    assert (h == 0.0) == (len(np.unique(img)) == 1)
    assert 0.0 <= std_dev(img) <= 127.5


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_mse_symmetric(data):
    a = data.draw(gray_images)
    b = data.draw(arrays(np.uint8, a.shape, elements=st.integers(0, 255)).map(gray))
    assert mse(a, b) == mse(b, a)
    assert mse(a, a) == 0.0
