import numpy as np
import pytest
import torch

from anise.losses import (
    LossError,
    loss_part,
    loss_part_codes,
    loss_shape,
    loss_transform_matching,
    match_codes_index,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def brute_force_matching(gt: np.ndarray, pred: np.ndarray):
    """Independent oracle: exhaustive pair enumeration."""
    n, m = len(gt), len(pred)
    dist = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            dist[i, j] = np.sqrt(((gt[i] - pred[j]) ** 2).sum())
    recall_idx = np.array([int(np.argmin(dist[i])) for i in range(n)])
    precision_idx = np.array([int(np.argmin(dist[:, j])) for j in range(m)])
    loss = dist[np.arange(n), recall_idx].mean() + dist[precision_idx, np.arange(m)].mean()
    return loss, recall_idx, precision_idx


class TestLossPart:
    def test_zero_on_equal(self):
        x = torch.as_tensor(rng(1).normal(size=32))
        assert float(loss_part(x, x)) == 0.0

    def test_simple_value(self):
        assert float(loss_part(torch.tensor([0.5]), torch.tensor([0.0]))) == pytest.approx(0.5)

    def test_clamped_variant(self):
        v = loss_part(torch.tensor([1.0]), torch.tensor([0.0]), variant="clamped_l1", clamp_delta=0.1)
        assert float(v) == pytest.approx(0.1)

    def test_length_mismatch(self):
        with pytest.raises(LossError):
            loss_part(torch.zeros(3), torch.zeros(4))

    def test_nonnegative_and_finite(self):
        r = rng(2)
        for _ in range(20):
            a = torch.as_tensor(r.normal(size=16))
            b = torch.as_tensor(r.normal(size=16))
            v = float(loss_part(a, b))
            assert v >= 0 and np.isfinite(v)

    def test_unknown_variant(self):
        with pytest.raises(LossError):
            loss_part(torch.zeros(2), torch.zeros(2), variant="l3")


class TestTransformMatching:
    def test_perfect_match_any_order(self):
        gt = np.array([[0, 0, 0, 1.0], [1, 0, 0, 0.5], [0, 1, 0, 2.0]])
        loss, _ = loss_transform_matching(gt, gt[::-1].copy())
        assert float(loss) == pytest.approx(0.0, abs=1e-12)

    def test_derived_two_predictions(self):
        # gt = {(c=0, a=1)}, pred = {(c=(1,0,0), a=1), (c=0, a=2)}:
        # recall = min(1, 1) = 1; precision = (1 + 1)/2 = 1; total 2.
        gt = np.array([[0, 0, 0, 1.0]])
        pred = np.array([[1, 0, 0, 1.0], [0, 0, 0, 2.0]])
        loss, result = loss_transform_matching(gt, pred)
        brute, recall, precision = brute_force_matching(gt, pred)
        assert float(loss) == pytest.approx(2.0, abs=1e-12)
        assert float(loss) == pytest.approx(brute, abs=1e-12)
        np.testing.assert_array_equal(result.recall_pairs, recall)
        np.testing.assert_array_equal(result.precision_pairs, precision)

    def test_invariant_under_pred_permutation(self):
        import itertools

        gt = rng(3).normal(size=(2, 4))
        pred = rng(4).normal(size=(3, 4))
        base = float(loss_transform_matching(gt, pred)[0])
        for perm in itertools.permutations(range(3)):
            v = float(loss_transform_matching(gt, pred[list(perm)])[0])
            assert v == pytest.approx(base, abs=1e-12)

    def test_brute_force_equivalence_200_instances(self):
        r = rng(5)
        for _ in range(200):
            n = int(r.integers(1, 11))
            m = int(r.integers(1, 11))
            gt = r.normal(size=(n, 4))
            pred = r.normal(size=(m, 4))
            loss, result = loss_transform_matching(gt, pred)
            brute, recall, precision = brute_force_matching(gt, pred)
            assert float(loss) == pytest.approx(brute, rel=1e-12)
            np.testing.assert_array_equal(result.recall_pairs, recall)
            np.testing.assert_array_equal(result.precision_pairs, precision)

    def test_tie_breaks_lowest_index(self):
        gt = np.array([[0, 0, 0, 1.0]])
        pred = np.array([[1, 0, 0, 1.0], [0, 0, 0, 2.0], [1, 0, 0, 1.0]])  # slots 0 and 2 tie
        _, result = loss_transform_matching(gt, pred)
        assert result.recall_pairs[0] == 0

    def test_empty_gt_error(self):
        with pytest.raises(LossError):
            loss_transform_matching(np.zeros((0, 4)), np.zeros((2, 4)))

    def test_match_result_pairs_cover_each_index_once(self):
        gt = rng(6).normal(size=(4, 4))
        pred = rng(7).normal(size=(7, 4))
        _, result = loss_transform_matching(gt, pred)
        assert len(result.recall_pairs) == 4
        assert len(result.precision_pairs) == 7


class TestPartCodes:
    def test_zero_when_codes_match(self):
        gt_t = rng(8).normal(size=(3, 4))
        gt_c = rng(9).normal(size=(3, 16))
        matched = match_codes_index(gt_t, gt_t)
        v = loss_part_codes(gt_t, gt_c, gt_t, gt_c[matched])
        assert float(v) == pytest.approx(0.0, abs=1e-12)

    def test_single_pair_distance_one(self):
        gt_t = np.array([[0, 0, 0, 1.0]])
        gt_c = np.zeros((1, 4))
        pred_c = np.array([[1.0, 0, 0, 0]])
        v = loss_part_codes(gt_t, gt_c, gt_t, pred_c)
        assert float(v) == pytest.approx(1.0)

    def test_matched_index_vs_exhaustive(self):
        r = rng(10)
        for _ in range(200):
            n = int(r.integers(1, 11))
            m = int(r.integers(1, 11))
            gt_t = r.normal(size=(n, 4))
            pred_t = r.normal(size=(m, 4))
            idx = match_codes_index(gt_t, pred_t)
            _, _, precision = brute_force_matching(gt_t, pred_t)
            np.testing.assert_array_equal(idx, precision)

    def test_dimension_mismatch(self):
        with pytest.raises(LossError):
            loss_part_codes(np.zeros((1, 4)), np.zeros((1, 8)), np.zeros((1, 4)), np.zeros((1, 16)))

    def test_invariant_under_pred_permutation(self):
        r = rng(11)
        gt_t, gt_c = r.normal(size=(3, 4)), r.normal(size=(3, 8))
        pred_t, pred_c = r.normal(size=(4, 4)), r.normal(size=(4, 8))
        base = float(loss_part_codes(gt_t, gt_c, pred_t, pred_c))
        perm = r.permutation(4)
        v = float(loss_part_codes(gt_t, gt_c, pred_t[perm], pred_c[perm]))
        assert v == pytest.approx(base, abs=1e-12)


class TestLossShape:
    def test_equals_loss_part_on_field_values(self):
        from anise.dataset import SdfSampleSet
        from anise.fields import sphere_field

        f = sphere_field((0, 0, 0), 0.5)
        pts = rng(12).uniform(-1, 1, size=(100, 3))
        target = f(pts) + rng(13).normal(scale=0.1, size=100)
        ss = SdfSampleSet(pts, target, frame="shape")
        lhs = loss_shape(f, ss)
        rhs = float(loss_part(torch.as_tensor(f(pts)), torch.as_tensor(target)))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_zero_when_field_reproduces_targets(self):
        from anise.dataset import SdfSampleSet
        from anise.fields import sphere_field

        f = sphere_field((0, 0, 0), 0.5)
        pts = rng(14).uniform(-1, 1, size=(64, 3))
        ss = SdfSampleSet(pts, f(pts), frame="shape")
        assert loss_shape(f, ss) == 0.0

    def test_gradient_through_min_union_two_part_toy(self):
        # d/dc of mean |a*f((x-c)/a) - s| via the min, against central FD.
        torch.manual_seed(0)
        centers = torch.tensor([[-0.3, 0.0, 0.0], [0.35, 0.0, 0.0]], dtype=torch.float64, requires_grad=True)
        scales = torch.tensor([0.5, 0.4], dtype=torch.float64, requires_grad=True)
        pts = torch.as_tensor(rng(15).uniform(-1, 1, size=(400, 3)))
        target = torch.as_tensor(rng(16).normal(scale=0.3, size=400))

        def field_vals(c, a):
            local = (pts[None] - c[:, None, :]) / a[:, None, None]
            vals = a[:, None] * (torch.linalg.vector_norm(local, dim=-1) - 1.0)  # unit spheres
            from anise.models import min_union

            return min_union(vals, dim=0)

        loss = loss_part(field_vals(centers, scales), target)
        loss.backward()
        h = 1e-6
        for slot in range(2):
            for d in range(3):
                cp = centers.detach().clone()
                cm = centers.detach().clone()
                cp[slot, d] += h
                cm[slot, d] -= h
                fp = float(loss_part(field_vals(cp, scales.detach()), target))
                fm = float(loss_part(field_vals(cm, scales.detach()), target))
                fd = (fp - fm) / (2 * h)
                an = float(centers.grad[slot, d])
                rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
                assert rel < 1e-3
