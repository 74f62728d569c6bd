import hashlib

import numpy as np
import pytest

from sida.data_synth import (
    CANONICAL_INTENSITY,
    DOMAINS,
    DomainTransform,
    _shape_mask,
    apply_domain_transform,
    downsample_labels,
    gen_benchmark,
    gen_scene,
    ramp_field,
    read_benchmark,
    write_benchmark,
)
from sida.tensor_core import RandomSource

LUMA = np.array([0.299, 0.587, 0.114])


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestScene:
    def test_labels_and_range(self):
        for i in range(20):
            s = gen_scene(RandomSource(i))
            assert set(np.unique(s.labels)) <= {0, 1, 2, 3, 4}
            assert len(np.unique(s.labels)) >= 2
            assert s.image.shape == (64, 64, 3) and 0 <= s.image.min() and s.image.max() <= 1

    def test_labels_inside_shapes(self):
        # replay the generator's draws and check each labeled pixel against the analytic region
        for seed in range(10):
            s = gen_scene(RandomSource(seed))
            g = RandomSource(seed).generator
            n = int(g.integers(2, 5))
            kinds = g.choice([1, 2, 3, 4], size=n, replace=False)
            masks = {}
            for k in kinds:
                size = g.uniform(7, 14)
                cy, cx = g.uniform(size, 64 - size), g.uniform(size, 64 - size)
                masks[int(k)] = _shape_mask(int(k), cy, cx, size)
            for k in range(1, 5):
                sel = s.labels == k
                if sel.any():
                    assert masks[k][sel].all()
            assert (s.labels[~np.any(list(masks.values()), axis=0)] == 0).all()

    def test_deterministic(self):
        a, b = gen_scene(RandomSource(4)), gen_scene(RandomSource(4))
        assert a.image.tobytes() == b.image.tobytes() and a.labels.tobytes() == b.labels.tobytes()


class TestTransforms:
    @pytest.mark.parametrize("kind", DOMAINS)
    def test_zero_strength_is_identity(self, kind):
        img = gen_scene(RandomSource(1)).image
        out = apply_domain_transform(img, DomainTransform(kind, 0.0, 0.7, 3))
        np.testing.assert_array_equal(out, img)

    def test_night_darkens(self):
        gray = np.full((64, 64, 3), 0.5)
        out = apply_domain_transform(gray, DomainTransform("night", 1.0, None))
        assert (out @ LUMA).mean() <= (gray @ LUMA).mean() / 2

    @pytest.mark.parametrize("kind", DOMAINS)
    def test_stays_in_unit_range(self, kind):
        for seed in range(5):
            img = gen_scene(RandomSource(seed)).image
            out = apply_domain_transform(img, DomainTransform(kind, 1.0, seed * 1.3, seed))
            assert out.min() >= 0 and out.max() <= 1

    def test_field_smooth_and_bounded(self):
        for a in np.linspace(0, 2 * np.pi, 13):
            f = ramp_field(a)
            assert f.min() >= 0.5 - 1e-12 and f.max() <= 1.0 + 1e-12
            assert np.abs(np.diff(f, axis=0)).max() <= 0.05
            assert np.abs(np.diff(f, axis=1)).max() <= 0.05

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            apply_domain_transform(np.zeros((64, 64, 3)), DomainTransform("hail", 0.5))


class TestDownsample:
    def test_uniform_block(self):
        assert downsample_labels(np.full((4, 4), 3)).tolist() == [[3, 3], [3, 3]]

    def test_tie_smaller_id(self):
        assert downsample_labels(np.array([[0, 0], [1, 1]])).item() == 0
        assert downsample_labels(np.array([[2, 1], [1, 2]])).item() == 1

    def test_majority(self):
        assert downsample_labels(np.array([[1, 2], [2, 2]])).item() == 2

    def test_indivisible(self):
        with pytest.raises(ValueError):
            downsample_labels(np.zeros((5, 4)))

    def test_against_counting_loop(self, rng):
        lab = rng.integers(0, 5, size=(8, 8))
        got = downsample_labels(lab)
        for i in range(4):
            for j in range(4):
                counts = np.bincount(lab[2 * i:2 * i + 2, 2 * j:2 * j + 2].ravel(), minlength=5)
                assert got[i, j] == int(np.flatnonzero(counts == counts.max())[0])


@pytest.fixture(scope="module")
def bench():
    return gen_benchmark(1, n_source=4, n_val=2, n_target=30, n_bank=3)


class TestBenchmark:
    def test_structure(self, bench):
        assert set(bench.target) == set(DOMAINS) == set(bench.bank)
        assert all(len(v) == 3 for v in bench.bank.values())
        assert all(s.role == "synthetic-bank" for v in bench.bank.values() for s in v)

    def test_bank_is_canonical(self, bench):
        for d, shots in bench.bank.items():
            assert all(s.global_intensity == CANONICAL_INTENSITY and np.isnan(s.field_angle) for s in shots)
            assert len({s.labels.tobytes() for s in shots}) == 3

    def test_target_intensity_varies(self, bench):
        for d, items in bench.target.items():
            g = np.array([s.global_intensity for s in items])
            assert g.min() >= 0.3 and g.max() <= 1.0 and g.std() > 0.1
            assert all(s.kind == d and s.role == "target-test" for s in items)

    def test_transforms_keep_labels(self):
        s = gen_scene(RandomSource(3))
        for kind in DOMAINS:
            apply_domain_transform(s.image, DomainTransform(kind, 0.9, 1.0, 1))
        assert s.labels.tobytes() == gen_scene(RandomSource(3)).labels.tobytes()

    def test_disk_round_trip(self, bench, tmp_path):
        write_benchmark(bench, tmp_path)
        back = read_benchmark(tmp_path)
        for a, b in zip(bench.target["fog"], back.target["fog"]):
            assert a.image.tobytes() == b.image.tobytes()
            assert a.labels.tobytes() == b.labels.tobytes()
            assert a.global_intensity == pytest.approx(b.global_intensity, abs=1e-6)
        head = (tmp_path / "target" / "fog" / "meta.csv").read_text().splitlines()[0]
        assert head == "file,domain,role,kind,global_intensity,field_angle"
        assert (tmp_path / "source" / "train" / "img0000.ppm").read_bytes().startswith(b"P6")
        assert (tmp_path / "bank" / "night" / "lab0002.pgm").read_bytes().startswith(b"P5")

    def test_byte_identical_regeneration(self, tmp_path):
        write_benchmark(gen_benchmark(5, 3, 2, 2), tmp_path / "a")
        write_benchmark(gen_benchmark(5, 3, 2, 2), tmp_path / "b")
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")

    def test_counts(self):
        with pytest.raises(ValueError):
            gen_benchmark(0, n_source=0)
