import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from anise.dataset import (
    DataError,
    SdfSampleSet,
    dataset_shape_ids,
    load_dataset,
    load_shape_dir,
    normalize_part,
    sample_part_sdf,
    sample_shape_sdf,
    write_dataset,
    write_shape_dir,
)
from anise.fields import PartTransform, TriMesh, transform_field
from anise.primitives import Primitive, primitive_field
from anise.render import render_silhouette
from anise.synth import generate_shape, generate_synthetic_dataset


def tree_digest(root: Path) -> dict[str, str]:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


class TestNormalize:
    def test_box_definition(self):
        prim = Primitive("box", (1, 2, 3), (1.0, 0.5, 0.5))  # extents (2, 1, 1)
        norm, t = normalize_part(prim)
        np.testing.assert_allclose(t.center, [1, 2, 3])
        assert t.scale == pytest.approx(2.0)
        np.testing.assert_allclose(norm.params, [0.5, 0.25, 0.25])

    def test_already_normalized_identity(self):
        prim = Primitive("box", (0, 0, 0), (0.5, 0.25, 0.25))
        _, t = normalize_part(prim)
        np.testing.assert_allclose(t.center, [0, 0, 0])
        assert t.scale == pytest.approx(1.0)

    def test_mesh_normalization(self):
        verts = np.array([[0, 0, 0], [2, 0, 0], [2, 1, 0], [0, 0, 4.0]])
        mesh = TriMesh(verts, np.array([[0, 1, 2], [0, 2, 3]]))
        norm, t = normalize_part(mesh)
        bmin, bmax = norm.bounds()
        assert (bmax - bmin).max() == pytest.approx(1.0)
        np.testing.assert_allclose(t.apply_points(norm.vertices), verts, atol=1e-12)

    def test_degenerate_rejected(self):
        mesh = TriMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]))
        with pytest.raises(DataError):
            normalize_part(mesh)

    def test_round_trip_field_random_parts(self):
        # transform(normalize(P)) reproduces the original field.
        rng = np.random.default_rng(11)
        pts = rng.uniform(-1.5, 1.5, size=(1000, 3))
        for shape_idx in range(3):
            shape = generate_shape(5, shape_idx, with_samples=False, mesh_res=0, render_views=())
            for part in shape.parts:
                orig = primitive_field(part.primitive)
                recon = transform_field(part.normalized_field(), part.gt_transform)
                assert np.abs(orig(pts) - recon(pts)).max() <= 1e-6

    def test_round_trip_vertices(self):
        shape = generate_shape(5, 1, with_samples=False, mesh_res=0, render_views=())
        for part in shape.parts:
            back = part.gt_transform.apply_points(part.normalized_mesh.vertices)
            assert np.abs(back - part.mesh.vertices).max() <= 1e-5


class TestSynthetic:
    def test_determinism_and_counts(self):
        a = generate_synthetic_dataset(1, 5, with_samples=False, mesh_res=0, render_views=())
        b = generate_synthetic_dataset(1, 5, with_samples=False, mesh_res=0, render_views=())
        assert [s.shape_id for s in a] == [s.shape_id for s in b]
        for sa, sb in zip(a, b):
            assert 3 <= len(sa.parts) <= 8
            np.testing.assert_array_equal(sa.pointcloud, sb.pointcloud)
            for pa, pb in zip(sa.parts, sb.parts):
                assert pa.primitive == pb.primitive

    def test_unknown_category(self):
        with pytest.raises(DataError):
            generate_synthetic_dataset(1, 1, category="spaceships")

    def test_normalized_extent_exactly_one(self):
        for shape in generate_synthetic_dataset(2, 4, with_samples=False, mesh_res=0, render_views=()):
            for part in shape.parts:
                bmin, bmax = part.normalized_mesh.bounds()
                assert (bmax - bmin).max() == pytest.approx(1.0, abs=1e-6)

    def test_union_equals_min_of_transformed_parts(self):
        shape = generate_shape(3, 0, with_samples=False, mesh_res=0, render_views=())
        rng = np.random.default_rng(12)
        pts = rng.uniform(-0.6, 0.6, size=(1000, 3))
        union_vals = shape.assembled_field()(pts)
        member = np.stack([transform_field(p.normalized_field(), p.gt_transform)(pts) for p in shape.parts])
        np.testing.assert_allclose(union_vals, member.min(axis=0), atol=1e-12)

    def test_fits_in_unit_cube(self):
        for shape in generate_synthetic_dataset(4, 6, with_samples=False, mesh_res=0, render_views=()):
            bmin, bmax = shape.bbox()
            assert bmin.min() >= -0.5 - 1e-9
            assert bmax.max() <= 0.5 + 1e-9


class TestSampling:
    def test_part_sample_count_contract(self):
        shape = generate_shape(6, 0, with_samples=False, mesh_res=0, render_views=())
        ss = sample_part_sdf(shape.parts[0], n=100000, seed=1)
        assert len(ss) == 100000

    def test_unit_cube_inside_fraction(self):
        prim = Primitive("box", (0.3, -0.2, 0.1), (0.5, 0.5, 0.5))
        from anise.dataset import PartRecord
        from anise.primitives import normalize_primitive, primitive_mesh

        norm, t = normalize_primitive(prim)
        part = PartRecord("cube/p0", primitive_mesh(prim), t, primitive_mesh(norm), prim, norm)
        n = 100000
        ss = sample_part_sdf(part, n=n, seed=2)
        n_uniform = n // 2
        inside = ss.distances[:n_uniform] < 0
        p = 1.0 / 1.1**3  # cube volume over 10%-inflated box volume
        sigma = np.sqrt(p * (1 - p) / n_uniform)
        assert abs(inside.mean() - p) < 3 * sigma

    def test_near_surface_bound(self):
        prim = Primitive("box", (0, 0, 0), (0.5, 0.5, 0.5))
        from anise.dataset import PartRecord
        from anise.primitives import normalize_primitive, primitive_mesh

        norm, t = normalize_primitive(prim)
        part = PartRecord("cube/p0", primitive_mesh(prim), t, primitive_mesh(norm), prim, norm)
        n = 100000
        ss = sample_part_sdf(part, n=n, seed=2)
        near = ss.distances[n // 2 :]
        assert np.abs(near).max() < 5 * 0.05 + 0.02  # 5-sigma Gaussian tail, empirical slack

    def test_shape_samples(self):
        shape = generate_shape(6, 1, with_samples=False, mesh_res=0, render_views=())
        ss = sample_shape_sdf(shape, 4096, seed=3)
        assert len(ss) == 4096
        field_vals = shape.assembled_field()(ss.points)
        np.testing.assert_array_equal(field_vals < 0, ss.distances < 0)
        np.testing.assert_allclose(field_vals, ss.distances, atol=1e-12)

    def test_sample_set_validation(self):
        with pytest.raises(DataError):
            SdfSampleSet(np.zeros((0, 3)), np.zeros(0), frame="part")
        with pytest.raises(DataError):
            SdfSampleSet(np.zeros((3, 3)), np.array([1.0, np.inf, 0.0]), frame="part")


class TestRender:
    def test_empty_shape_all_background(self):
        from anise.fields import constant_field

        img = render_silhouette(constant_field(1.0), 30, 20)
        assert img.shape == (64, 64)
        assert (img == 0).all()

    def test_cube_fills_center(self):
        from anise.fields import box_field

        img = render_silhouette(box_field((0, 0, 0), (0.5, 0.5, 0.5)), 30, 20)
        center = img[24:40, 24:40]
        assert (center == 255).all()

    def test_silhouette_area_shrinks_with_scale(self):
        shape = generate_shape(6, 2, with_samples=False, mesh_res=0, render_views=())
        field = shape.assembled_field()
        big = render_silhouette(field, 30, 20)
        small = render_silhouette(
            transform_field(field, PartTransform(np.zeros(3), 0.5)), 30, 20
        )
        assert (small > 0).sum() < (big > 0).sum()


class TestLayout:
    def test_byte_identical_datasets(self, tmp_path):
        kwargs = dict(part_samples=2000, shape_samples=1024, mesh_res=16)
        a = generate_synthetic_dataset(9, 2, **kwargs)
        b = generate_synthetic_dataset(9, 2, **kwargs)
        write_dataset(a, tmp_path / "a", splits={"train": [s.shape_id for s in a], "eval": []})
        write_dataset(b, tmp_path / "b", splits={"train": [s.shape_id for s in b], "eval": []})
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")

    def test_load_round_trip(self, tmp_path):
        shape = generate_shape(9, 0, part_samples=2000, shape_samples=1024, mesh_res=16)
        write_shape_dir(shape, tmp_path)
        loaded = load_shape_dir(tmp_path / shape.shape_id)
        assert len(loaded.parts) == len(shape.parts)
        np.testing.assert_allclose(loaded.pointcloud, shape.pointcloud, atol=1e-6)
        np.testing.assert_allclose(
            loaded.parts[0].gt_transform.to_vector(), shape.parts[0].gt_transform.to_vector(), atol=0
        )
        assert loaded.parts[0].primitive == shape.parts[0].primitive
        np.testing.assert_array_equal(loaded.renders["30_20"], shape.renders["30_20"])
        # surface points are regenerated deterministically from part ids
        np.testing.assert_array_equal(loaded.parts[0].surface_points(), shape.parts[0].surface_points())

    def test_transforms_json_bit_exact(self, tmp_path):
        shape = generate_shape(9, 1, with_samples=False, mesh_res=0, render_views=())
        write_shape_dir(shape, tmp_path)
        blob = json.loads((tmp_path / shape.shape_id / "transforms.json").read_text())
        for entry, part in zip(blob, shape.parts):
            assert entry["scale"] == part.gt_transform.scale
            assert entry["center"] == [float(c) for c in part.gt_transform.center]

    def test_split_selection(self, tmp_path):
        shapes = generate_synthetic_dataset(9, 3, with_samples=False, mesh_res=0, render_views=())
        ids = [s.shape_id for s in shapes]
        write_dataset(shapes, tmp_path, splits={"train": ids[:2], "eval": ids[2:]})
        assert dataset_shape_ids(tmp_path, "train") == ids[:2]
        assert dataset_shape_ids(tmp_path, "eval") == ids[2:]
        assert dataset_shape_ids(tmp_path) == sorted(ids)
        with pytest.raises(DataError):
            dataset_shape_ids(tmp_path, "nope")
        assert len(load_dataset(tmp_path, "eval")) == 1

    def test_missing_root(self, tmp_path):
        with pytest.raises(DataError):
            dataset_shape_ids(tmp_path / "missing")
