import numpy as np
import pytest

from src.streams import SERVER, Purpose, StreamFactory, device_party


def test_same_key_same_draws():
    a = StreamFactory(7)(Purpose.COMPRESS, device_party(2), 15).normal(size=5)
    b = StreamFactory(7)(Purpose.COMPRESS, device_party(2), 15).normal(size=5)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize(
    "other",
    [
        (Purpose.NOISE, device_party(2), 15),
        (Purpose.COMPRESS, device_party(3), 15),
        (Purpose.COMPRESS, device_party(2), 16),
        (Purpose.COMPRESS, SERVER, 15),
    ],
)
def test_any_key_component_changes_the_stream(other):
    streams = StreamFactory(7)
    base = streams(Purpose.COMPRESS, device_party(2), 15).normal(size=5)
    assert not np.array_equal(base, streams(*other).normal(size=5))


def test_seed_changes_the_stream():
    assert StreamFactory(1)(Purpose.INIT).random() != StreamFactory(2)(Purpose.INIT).random()


def test_derived_seeds_are_stable_and_distinct():
    streams = StreamFactory(3)
    seeds = [streams.derive_seed(Purpose.SWEEP, i) for i in range(50)]
    assert seeds == [StreamFactory(3).derive_seed(Purpose.SWEEP, i) for i in range(50)]
    assert len(set(seeds)) == 50
    assert all(seed >= 0 for seed in seeds)


def test_server_is_party_zero():
    assert SERVER == 0 and device_party(0) == 1


def test_negative_seed_is_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        StreamFactory(-1)
