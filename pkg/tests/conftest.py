import numpy as np
import pytest

from spinalgalaxy import Dataset, LabeledImage, Tensor


def t32(values, requires_grad=False):
    return Tensor(np.asarray(values, dtype=np.float32), requires_grad=requires_grad)


@pytest.fixture
def tiny_dataset():
    """In-memory 2-class dataset of 4x4 images whose pixel (0,0) encodes the label."""

    def build(per_class=8, n_classes=2, size=4, seed=0):
        rng = np.random.default_rng(seed)
        items = []
        for label in range(n_classes):
            for _ in range(per_class):
                grid = rng.uniform(-0.5, 0.5, (size, size)).astype(np.float32)
                grid[0, 0] = (label + 1) / (n_classes + 1)
                items.append(LabeledImage(Tensor(grid[None]), label))
        names = [f"c{i}" for i in range(n_classes)]
        return Dataset(items, names)

    return build
