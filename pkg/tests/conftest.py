import numpy as np
import pytest

from mrifoundry.volume import Volume


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_volume(rng, shape=None, dtype_tag="f32", orientation=None):
    """A random but valid volume with serialization-safe metadata."""
    if shape is None:
        shape = tuple(int(rng.integers(2, 7)) for _ in range(3))
    spacing = tuple(float(np.float32(rng.uniform(0.3, 3.0))) for _ in range(3))
    if orientation is None:
        orientation = rng.choice(["RAS", "LPS", "LPI", "SAR", "IPL", "ASL"])
    if dtype_tag == "u16":
        data = rng.integers(0, 65536, size=shape).astype(np.uint16)
        offset = float(np.float32(rng.uniform(-10, 10)))
        scale = float(np.float32(rng.uniform(0, 0.1)))
        return Volume(
            data=data, spacing=spacing, orientation=str(orientation), dtype_tag="u16",
            intensity_offset=offset, intensity_scale=scale,
        )
    data = rng.normal(size=shape).astype(np.float32)
    return Volume(data=data, spacing=spacing, orientation=str(orientation))
