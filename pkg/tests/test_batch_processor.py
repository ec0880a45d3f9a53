import pytest

from slyap.batch.processor import BatchProcessor


def _square_or_fail(x):
    if x == 3:
        raise ArithmeticError("boom")
    return x * x


def _square_or_break(x):
    if x in (2, 5):
        raise KeyError(x)
    return x * x


@pytest.mark.parametrize("workers", [1, 4])
def test_results_keep_input_order(workers):
    processor = BatchProcessor(max_workers=workers)
    assert processor.map(lambda x: x * x, list(range(20))) == [x * x for x in range(20)]
    status = processor.get_status()
    assert status["done"] == 20
    assert status["percent"] == 100


@pytest.mark.parametrize("workers", [1, 3])
def test_tolerated_failure_yields_none(workers):
    processor = BatchProcessor(max_workers=workers)
    out = processor.map(_square_or_fail, [1, 2, 3, 4])
    assert out == [1, 4, None, 16]
    status = processor.get_status()
    assert status["skipped"] == 1
    assert status["error"] == 0
    assert status["errors"] == {2: "boom"}
    assert status["percent"] == 100


@pytest.mark.parametrize("workers", [1, 3])
def test_other_failures_are_raised_after_the_batch(workers):
    processor = BatchProcessor(max_workers=workers)
    with pytest.raises(KeyError) as info:
        processor.map(_square_or_break, list(range(8)))
    assert info.value.args == (2,)
    status = processor.get_status()
    assert status["error"] == 2
    assert status["done"] == 6


def test_nothing_tolerated():
    processor = BatchProcessor(tolerated=())
    with pytest.raises(ArithmeticError):
        processor.map(_square_or_fail, [3])


def test_empty_batch():
    processor = BatchProcessor(max_workers=2)
    assert processor.map(_square_or_fail, []) == []
    assert processor.get_status()["total"] == 0
