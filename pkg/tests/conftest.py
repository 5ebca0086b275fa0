import numpy as np
import pytest

import bandtopo as bt
from bandtopo.model import CoefficientSpec, TwoBandField, model_from_field


@pytest.fixture(scope="session")
def weyl2():
    return bt.builtin("weyl-lattice", m=2)


@pytest.fixture(scope="session")
def nodal_loop2():
    return bt.builtin("nodal-loop-real", m=2)


@pytest.fixture(scope="session")
def four_band():
    return bt.builtin("four-band-linked", m=1)


@pytest.fixture(scope="session")
def four_band_lattice():
    return bt.builtin("four-band-linked-lattice", m=1)


@pytest.fixture(scope="session")
def weyl2_locus(weyl2):
    return bt.extract_locus(weyl2, resolution=32)


@pytest.fixture(scope="session")
def nodal_loop2_locus(nodal_loop2):
    return bt.extract_locus(nodal_loop2, resolution=32)


@pytest.fixture(scope="session")
def four_band_locus(four_band):
    return bt.extract_locus(four_band, resolution=32)


@pytest.fixture(scope="session")
def four_band_lattice_locus(four_band_lattice):
    return bt.extract_locus(four_band_lattice, resolution=32)


def gapped_model():
    """H = sigma_z: fully gapped two-band lattice model."""
    hz = CoefficientSpec([("cos", (0, 0, 0), 1.0)])
    field = TwoBandField([CoefficientSpec([]), CoefficientSpec([]), hz])
    return model_from_field("gapped", field, reality=False)


def random_two_band(seed, amplitude=0.3):
    """Perturbed sine field: 8 generic Weyl points near the TRIM points."""
    rng = np.random.default_rng(seed)
    comps = []
    for axis in range(3):
        main = [0, 0, 0]
        main[axis] = 1
        entries = [("sin", tuple(main), 1.0)]
        for _ in range(2):
            n = tuple(int(v) for v in rng.integers(-1, 2, size=3))
            if n == (0, 0, 0):
                continue
            kind = "cos" if rng.random() < 0.5 else "sin"
            entries.append((kind, n, float(rng.uniform(-amplitude, amplitude))))
        comps.append(CoefficientSpec(entries))
    field = TwoBandField(comps)
    return model_from_field(f"random-two-band-{seed}", field, reality=False)


def dense_zero_count(field, resolution):
    """Independent oracle: count sign-consistent zero cells of h on a dense
    grid (every component changes sign inside the cell)."""
    import numpy as np

    axes = [
        -np.pi + 2 * np.pi * np.arange(resolution) / resolution for _ in range(3)
    ]
    kx, ky, kz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([kx, ky, kz], axis=-1)
    h = field(pts)
    consistent = np.ones(h.shape[:-1], dtype=bool)
    for c in range(3):
        comp = h[..., c]
        pos = np.zeros_like(comp, dtype=bool)
        neg = np.zeros_like(comp, dtype=bool)
        for di in (0, 1):
            for dj in (0, 1):
                for dl in (0, 1):
                    corner = np.roll(np.roll(np.roll(comp, -di, 0), -dj, 1), -dl, 2)
                    pos |= corner > 0
                    neg |= corner < 0
        consistent &= pos & neg
    # cluster flagged cells so adjacent sign-change cells count once
    cells = [tuple(map(int, t)) for t in np.argwhere(consistent)]
    from bandtopo.locus import _cluster_cells

    return len(_cluster_cells(cells, resolution, True))
