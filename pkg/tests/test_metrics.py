import numpy as np
import pytest

from anise.fields import TriMesh, box_field, constant_field, sphere_field, transform_field, union_fields, PartTransform
from anise.metrics import MetricError, metric_chamfer, metric_fscore, metric_iou


def square_mesh(z: float, size: float = 1.0) -> TriMesh:
    verts = np.array([[0, 0, z], [size, 0, z], [size, size, z], [0, size, z]], dtype=np.float64)
    return TriMesh(verts, np.array([[0, 1, 2], [0, 2, 3]]))


class TestIoU:
    def test_identical_fields(self):
        f = sphere_field((0, 0, 0), 0.4)
        assert metric_iou(f, f) == 1.0

    def test_disjoint_cubes(self):
        a = box_field((-0.3, 0, 0), (0.1, 0.1, 0.1))
        b = box_field((0.3, 0, 0), (0.1, 0.1, 0.1))
        assert metric_iou(a, b) == 0.0

    def test_half_overlapping_boxes(self):
        # [0,1]^3 vs [0.5,1.5]x[0,1]^2 -> IoU = 0.5 / 1.5 = 1/3
        a = box_field((0.5, 0.5, 0.5), (0.5, 0.5, 0.5))
        b = box_field((1.0, 0.5, 0.5), (0.5, 0.5, 0.5))
        got = metric_iou(a, b, resolution=64, bound=1.6)
        assert got == pytest.approx(1.0 / 3.0, abs=0.02)

    def test_empty_conventions(self):
        empty = constant_field(1.0)
        full = sphere_field((0, 0, 0), 0.3)
        assert metric_iou(empty, empty) == 1.0
        assert metric_iou(empty, full) == 0.0

    def test_grid_convergence(self):
        # Smooth synthetic shapes: |IoU@64 - IoU@128| < 0.03.
        a = union_fields([sphere_field((0, 0.1, 0), 0.35), box_field((0, -0.2, 0), (0.3, 0.1, 0.25))])
        b = transform_field(a, PartTransform(np.array([0.05, 0.0, -0.02]), 1.1))
        i64 = metric_iou(a, b, resolution=64)
        i128 = metric_iou(a, b, resolution=128)
        assert abs(i64 - i128) < 0.03

    def test_symmetry(self):
        a = sphere_field((0.1, 0, 0), 0.3)
        b = box_field((0, 0, 0), (0.25, 0.3, 0.2))
        assert metric_iou(a, b) == metric_iou(b, a)


class TestChamfer:
    def test_self_zero(self):
        m = square_mesh(0.0)
        # same per-side seeds -> identical sample sets -> exactly zero
        assert metric_chamfer(m, m, seeds=(123, 123)) == 0.0

    def test_parallel_squares_gap_squared(self):
        g = 0.1
        cd = metric_chamfer(square_mesh(0.0), square_mesh(g), n_samples=20000, seed=1)
        assert cd == pytest.approx(g**2, rel=0.05)

    def test_symmetric_with_swapped_seeds(self):
        a, b = square_mesh(0.0), square_mesh(0.07)
        lhs = metric_chamfer(a, b, seeds=(11, 22))
        rhs = metric_chamfer(b, a, seeds=(22, 11))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_empty_mesh_error(self):
        from anise.fields import empty_mesh

        with pytest.raises(MetricError):
            metric_chamfer(empty_mesh(), square_mesh(0.0))


class TestFscore:
    def test_identical_any_seeds(self):
        # Point-to-surface distances: samples of a mesh lie ON the mesh.
        m = square_mesh(0.0)
        assert metric_fscore(m, m, seeds=(5, 6)) == 1.0

    def test_far_apart_zero(self):
        assert metric_fscore(square_mesh(0.0), square_mesh(1.0), tau=0.02) == 0.0

    def test_squares_at_half_tau(self):
        # Every sample sits exactly tau/2 from the other square's surface.
        tau = 0.02
        f = metric_fscore(square_mesh(0.0), square_mesh(tau / 2), tau=tau, n_samples=10000, seed=2)
        assert f == 1.0

    def test_symmetric_with_swapped_seeds(self):
        a, b = square_mesh(0.0), square_mesh(0.015)
        assert metric_fscore(a, b, seeds=(3, 4)) == pytest.approx(metric_fscore(b, a, seeds=(4, 3)), abs=1e-12)
