import math

import numpy as np
import pytest

from softequiv.fourier import FrequencySpec
from softequiv.groups import GroupKind, identity, rotation2, sample_rotations, se2_element, translation2
from softequiv.kernels import eval_kernel, hard_disk, make_kernel_field, no_mask, soft_gaussian
from softequiv.operator import (
    GroupSignal,
    OperatorConfig,
    SoftConvLayer,
    apply_operator,
    enumerate_offsets,
    image_signal,
    lift_image,
    pixel_coords,
    project_signal,
    rotate_image,
)
from softequiv.probes import rotate_signal, shift_signal


def freq_for(kind, om_t=0.4, om_r=1, omp_t=0.0, omp_r=0):
    return FrequencySpec.for_kind(
        kind,
        omega_translation=om_t,
        omega_rotation=om_r,
        omega_prime_translation=omp_t,
        omega_prime_rotation=omp_r,
    )


def build_field(kind, c_in, c_out, freq, mask, seed=0):
    return make_kernel_field(kind, c_in, c_out, freq, mask, n_feature_pairs=8, hidden=(16,), seed=seed)


def brute_force_apply(f: GroupSignal, cfg: OperatorConfig, field) -> np.ndarray:
    """Direct sample-sum evaluation of the operator from group arithmetic alone."""
    H, W = f.grid if f.grid is not None else (1, 1)
    thetas = f.thetas if f.thetas is not None else np.zeros(1)
    R = len(thetas)
    coords = pixel_coords(H, W)
    if field.mask.sampling_radius() is None:
        r = max(H, W)
        offsets = [(dx, dy) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
        if cfg.padding == "circular":
            offsets = [(dx, dy) for dx, dy in offsets if 0 <= dx + W // 2 < W and 0 <= dy + H // 2 < H]
    else:
        offsets = [tuple(o) for o in enumerate_offsets(field.mask)]
    norm = cfg.normalization if cfg.normalization is not None else 1.0 / (R * len(offsets) * math.sqrt(field.c_in))
    vals = f.values.reshape(R, H, W, -1)
    out = np.zeros((R, H, W, field.c_out))

    def element(kind, x, y, th):
        if kind is GroupKind.T2:
            return translation2(x, y)
        if kind is GroupKind.SO2:
            return rotation2(th)
        return se2_element(x, y, th)

    for i in range(R):
        for p in range(H * W):
            pr, pc = divmod(p, W)
            u = element(f.kind, coords[p, 0], coords[p, 1], thetas[i])
            acc = np.zeros(field.c_out)
            for j in range(R):
                for dx, dy in offsets:
                    sr, sc = pr - dy, pc - dx
                    if cfg.padding == "circular":
                        sr, sc = sr % H, sc % W
                    elif not (0 <= sr < H and 0 <= sc < W):
                        continue
                    # stationary argument from the unwrapped neighbor position
                    v_virtual = element(f.kind, coords[p, 0] - dx, coords[p, 1] - dy, thetas[j])
                    from softequiv.groups import relative

                    stat = relative(u, v_virtual)
                    v_sample = element(f.kind, coords[sr * W + sc, 0], coords[sr * W + sc, 1], thetas[j])
                    k = eval_kernel(stat, v_sample, field)
                    acc += k @ vals[j, sr, sc]
            out[i, pr, pc] = norm * acc
    return out.reshape(R * H * W, field.c_out)


def random_signal(kind, grid, thetas, channels, seed):
    rng = np.random.default_rng(seed)
    n = (1 if thetas is None else len(thetas)) * (1 if grid is None else grid[0] * grid[1])
    return GroupSignal(kind, rng.normal(size=(n, channels)), grid=grid, thetas=thetas)


def test_enumerate_offsets_counts():
    assert len(enumerate_offsets(hard_disk(0.5))) == 1
    assert len(enumerate_offsets(hard_disk(1.0))) == 5
    assert len(enumerate_offsets(hard_disk(3.5))) == 37
    assert set(map(tuple, enumerate_offsets(hard_disk(1.0)))) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}


def test_enumerate_offsets_row_major_and_deterministic():
    a = enumerate_offsets(hard_disk(2.5))
    b = enumerate_offsets(hard_disk(2.5))
    assert np.array_equal(a, b)
    keys = [dy * 100 + dx for dx, dy in a]
    assert keys == sorted(keys)


def test_enumerate_offsets_soft_mask_truncates_at_three_sigma():
    offs = enumerate_offsets(soft_gaussian(1.0))
    d2 = (offs**2).sum(axis=1)
    assert d2.max() <= 9.0
    assert len(offs) == len(enumerate_offsets(hard_disk(3.0)))


def test_group_signal_validation():
    with pytest.raises(ValueError):
        GroupSignal(GroupKind.T2, np.zeros((4, 1)))  # no grid
    with pytest.raises(ValueError):
        GroupSignal(GroupKind.SE2, np.zeros((4, 1)), grid=(2, 2))  # no rotations
    with pytest.raises(ValueError):
        GroupSignal(GroupKind.T2, np.zeros((5, 1)), grid=(2, 2))  # row count


def test_lift_identity_rotation_is_exact():
    rng = np.random.default_rng(0)
    img = rng.normal(size=(5, 4))
    sig = lift_image(img, [rotation2(0.0)])
    assert np.array_equal(sig.values[:, 0], img.ravel())


def test_lift_constant_image():
    sig = lift_image(np.full((4, 4), 2.5), sample_rotations(4, "cyclic-deterministic"))
    assert np.all(sig.values == 2.5)


def test_lift_then_rotate_matches_rotate_then_lift():
    rng = np.random.default_rng(1)
    img = rng.normal(size=(6, 6))
    rots = sample_rotations(4, "cyclic-deterministic")
    lifted_rotated = lift_image(rotate_image(img, math.pi / 2), rots)
    rotated_lifted = rotate_signal(lift_image(img, rots), 1)
    assert np.allclose(lifted_rotated.values, rotated_lifted.values, atol=1e-12)


def test_lift_rejects_empty():
    with pytest.raises(ValueError):
        lift_image(np.zeros((3, 3)), [])
    with pytest.raises(ValueError):
        lift_image(np.zeros((0, 3)), [rotation2(0.0)])


def test_project_single_rotation_identity():
    rng = np.random.default_rng(2)
    img = rng.normal(size=(3, 5, 2))
    sig = lift_image(img, [rotation2(0.0)])
    assert np.array_equal(project_signal(sig), img)


def test_project_mean_and_max():
    sig = lift_image(np.ones((2, 2)), sample_rotations(4, "cyclic-deterministic"))
    assert np.all(project_signal(sig, "mean-over-rotations") == 1.0)
    assert np.all(project_signal(sig, "max-over-rotations") == 1.0)
    with pytest.raises(ValueError):
        project_signal(image_signal(np.ones((2, 2))))


def test_rotate_image_quarter_turns_exact():
    rng = np.random.default_rng(3)
    img = rng.normal(size=(6, 6))
    assert np.allclose(rotate_image(img, math.pi), img[::-1, ::-1], atol=1e-12)
    quarter = rotate_image(img, math.pi / 2)
    assert np.allclose(rotate_image(quarter, math.pi / 2), img[::-1, ::-1], atol=1e-12)
    back = rotate_image(rotate_image(img, math.pi / 2), -math.pi / 2)
    assert np.allclose(back, img, atol=1e-12)


@pytest.mark.parametrize(
    "kind,omp_t,omp_r,padding",
    [
        (GroupKind.T2, 0.0, 0, "circular"),
        (GroupKind.T2, 0.0, 0, "zero"),
        (GroupKind.T2, 0.7, 0, "circular"),
        (GroupKind.T2, 0.7, 0, "zero"),
        (GroupKind.SE2, 0.0, 0, "circular"),
        (GroupKind.SE2, 0.0, 2, "circular"),
        (GroupKind.SE2, 0.5, 1, "zero"),
        (GroupKind.SE2, 0.5, 1, "circular"),
    ],
)
def test_operator_matches_brute_force(kind, omp_t, omp_r, padding):
    freq = freq_for(kind, om_t=0.5, om_r=1, omp_t=omp_t, omp_r=omp_r)
    field = build_field(kind, 2, 3, freq, hard_disk(1.5), seed=4)
    thetas = None if kind is GroupKind.T2 else np.array([t.theta for t in sample_rotations(2, "uniform-random", seed=5)])
    f = random_signal(kind, (5, 4), thetas, 2, seed=6)
    cfg = OperatorConfig(padding=padding)
    got = apply_operator(f, cfg, field).values
    want = brute_force_apply(f, cfg, field)
    assert np.max(np.abs(got - want)) < 1e-10


def test_so2_operator_matches_brute_force():
    freq = freq_for(GroupKind.SO2, om_r=2, omp_r=1)
    field = build_field(GroupKind.SO2, 2, 2, freq, no_mask(), seed=7)
    thetas = np.array([t.theta for t in sample_rotations(5, "uniform-random", seed=8)])
    f = random_signal(GroupKind.SO2, None, thetas, 2, seed=9)
    cfg = OperatorConfig(padding="circular")
    got = apply_operator(f, cfg, field).values
    want = brute_force_apply(f, cfg, field)
    assert np.max(np.abs(got - want)) < 1e-10


def brute_conv2d(image: np.ndarray, kernel_by_offset: dict, H, W, norm) -> np.ndarray:
    """Independent double-loop circular discrete convolution."""
    C_out = next(iter(kernel_by_offset.values())).shape[0]
    out = np.zeros((H, W, C_out))
    for r in range(H):
        for c in range(W):
            acc = np.zeros(C_out)
            for (dx, dy), k in kernel_by_offset.items():
                acc += k @ image[(r - dy) % H, (c - dx) % W]
            out[r, c] = norm * acc
    return out


def test_stationary_operator_equals_discrete_convolution():
    # ten random kernel/input pairs against the double-loop oracle
    H, W = 6, 5
    offsets = [tuple(o) for o in enumerate_offsets(hard_disk(1.5))]
    for trial in range(10):
        freq = freq_for(GroupKind.T2, om_t=0.6, omp_t=0.0)
        field = build_field(GroupKind.T2, 2, 2, freq, hard_disk(1.5), seed=100 + trial)
        rng = np.random.default_rng(200 + trial)
        image = rng.normal(size=(H, W, 2))
        sig = image_signal(image)
        cfg = OperatorConfig(padding="circular")
        got = apply_operator(sig, cfg, field).values.reshape(H, W, 2)

        probe = translation2(3.1, -2.2)  # arbitrary: the kernel is stationary
        kernel = {
            (dx, dy): eval_kernel(translation2(dx, dy), probe, field) for dx, dy in offsets
        }
        norm = 1.0 / (len(offsets) * math.sqrt(2))
        want = brute_conv2d(image, kernel, H, W, norm)
        assert np.max(np.abs(got - want)) < 1e-10


def test_constant_kernel_is_global_pool():
    freq = freq_for(GroupKind.SE2, om_t=0.0, om_r=0, omp_t=0.0, omp_r=0)
    field = build_field(GroupKind.SE2, 2, 3, freq, no_mask(), seed=10)
    thetas = np.array([t.theta for t in sample_rotations(2, "cyclic-deterministic")])
    f = random_signal(GroupKind.SE2, (4, 4), thetas, 2, seed=11)
    cfg = OperatorConfig(padding="circular", normalization=1.0)
    out = apply_operator(f, cfg, field).values
    const_k = eval_kernel(identity(GroupKind.SE2), identity(GroupKind.SE2), field)
    want = const_k @ f.values.sum(axis=0)
    assert np.max(np.abs(out - want[None, :])) < 1e-10
    assert np.max(np.abs(out - out[0])) < 1e-12


def test_invariance_to_sample_permutation_when_constant():
    freq = freq_for(GroupKind.T2, om_t=0.0, omp_t=0.0)
    field = build_field(GroupKind.T2, 1, 1, freq, no_mask(), seed=12)
    f = random_signal(GroupKind.T2, (4, 5), None, 1, seed=13)
    cfg = OperatorConfig(padding="circular")
    out = apply_operator(f, cfg, field).values
    rng = np.random.default_rng(14)
    shuffled = f.with_values(f.values[rng.permutation(len(f.values))])
    out2 = apply_operator(shuffled, cfg, field).values
    assert np.max(np.abs(out - out2)) < 1e-10


def test_subpixel_support_is_linear_product():
    # kernel support below one pixel collapses the sum to a pointwise product
    freq = freq_for(GroupKind.T2, om_t=0.4, omp_t=0.8)
    field = build_field(GroupKind.T2, 1, 1, freq, hard_disk(0.5), seed=15)
    f = random_signal(GroupKind.T2, (5, 5), None, 1, seed=16)
    cfg = OperatorConfig(padding="zero", normalization=1.0)
    got = apply_operator(f, cfg, field).values[:, 0]

    # bit-level: the integration machinery adds nothing beyond one multiply
    layer = SoftConvLayer(field, cfg, (5, 5), None)
    weights = layer.kernel_table().data[:, 0]
    assert np.array_equal(got, weights * f.values[:, 0])

    # and the per-point kernel path agrees with the table evaluation
    coords = pixel_coords(5, 5)
    pointwise = np.array(
        [eval_kernel(translation2(0, 0), translation2(*coords[p]), field)[0, 0] for p in range(25)]
    )
    assert np.max(np.abs(got - pointwise * f.values[:, 0])) < 1e-12


def test_linearity():
    freq = freq_for(GroupKind.SE2, om_t=0.5, om_r=1, omp_r=1)
    field = build_field(GroupKind.SE2, 2, 2, freq, hard_disk(1.5), seed=17)
    thetas = np.array([t.theta for t in sample_rotations(4, "cyclic-deterministic")])
    fa = random_signal(GroupKind.SE2, (4, 4), thetas, 2, seed=18)
    fb = random_signal(GroupKind.SE2, (4, 4), thetas, 2, seed=19)
    cfg = OperatorConfig(padding="circular")
    mix = fa.with_values(2.0 * fa.values - 3.0 * fb.values)
    got = apply_operator(mix, cfg, field).values
    want = 2.0 * apply_operator(fa, cfg, field).values - 3.0 * apply_operator(fb, cfg, field).values
    assert np.max(np.abs(got - want)) < 1e-10


def test_translation_equivariance_exact_when_stationary():
    freq = freq_for(GroupKind.T2, om_t=0.5, omp_t=0.0)
    field = build_field(GroupKind.T2, 1, 2, freq, hard_disk(1.5), seed=20)
    f = random_signal(GroupKind.T2, (6, 6), None, 1, seed=21)
    cfg = OperatorConfig(padding="circular")
    h = apply_operator(f, cfg, field)
    for delta in [(1, 0), (0, 1), (3, 2), (5, 5)]:
        got = apply_operator(shift_signal(f, delta), cfg, field).values
        want = shift_signal(h, delta).values
        assert np.max(np.abs(got - want)) < 1e-10


def test_soft_breaks_translation_equivariance():
    freq = freq_for(GroupKind.T2, om_t=0.5, omp_t=2.0)
    field = build_field(GroupKind.T2, 1, 2, freq, hard_disk(1.5), seed=22)
    f = random_signal(GroupKind.T2, (6, 6), None, 1, seed=23)
    cfg = OperatorConfig(padding="circular")
    h = apply_operator(f, cfg, field)
    got = apply_operator(shift_signal(f, (1, 0)), cfg, field).values
    want = shift_signal(h, (1, 0)).values
    rel = np.linalg.norm(got - want) / np.linalg.norm(h.values)
    assert rel > 1e-6


def test_rotation_equivariance_exact_when_stationary():
    freq = freq_for(GroupKind.SE2, om_t=0.5, om_r=2, omp_t=0.0, omp_r=0)
    field = build_field(GroupKind.SE2, 1, 2, freq, hard_disk(1.5), seed=24)
    thetas = np.array([t.theta for t in sample_rotations(4, "cyclic-deterministic")])
    f = random_signal(GroupKind.SE2, (6, 6), thetas, 1, seed=25)
    cfg = OperatorConfig(padding="circular")
    h = apply_operator(f, cfg, field)
    for k in (1, 2, 3):
        got = apply_operator(rotate_signal(f, k), cfg, field).values
        want = rotate_signal(h, k).values
        assert np.linalg.norm(got - want) / np.linalg.norm(h.values) < 1e-8


def test_kind_mismatch_raises():
    freq = freq_for(GroupKind.T2)
    field = build_field(GroupKind.T2, 1, 1, freq, hard_disk(1.0), seed=26)
    thetas = np.array([0.0])
    f = GroupSignal(GroupKind.SE2, np.zeros((4, 1)), grid=(2, 2), thetas=thetas)
    with pytest.raises(ValueError):
        apply_operator(f, OperatorConfig(), field)


def test_empty_neighborhood_raises(monkeypatch):
    import softequiv.operator as op

    freq = freq_for(GroupKind.T2)
    field = build_field(GroupKind.T2, 1, 1, freq, hard_disk(1.0), seed=27)
    monkeypatch.setattr(op, "enumerate_offsets", lambda mask, spacing=1.0: np.zeros((0, 2), dtype=np.int64))
    f = random_signal(GroupKind.T2, (3, 3), None, 1, seed=28)
    with pytest.raises(ValueError, match="empty neighborhood"):
        apply_operator(f, OperatorConfig(), field)


def test_float32_signal_stays_float32():
    freq = freq_for(GroupKind.T2, om_t=0.5)
    field = build_field(GroupKind.T2, 1, 1, freq, hard_disk(1.0), seed=29)
    f = GroupSignal(GroupKind.T2, np.random.default_rng(30).normal(size=(9, 1)).astype(np.float32), grid=(3, 3))
    out = apply_operator(f, OperatorConfig(), field)
    assert out.values.dtype == np.float32


def test_operator_config_validation():
    with pytest.raises(ValueError):
        OperatorConfig(padding="reflect")
    with pytest.raises(ValueError):
        OperatorConfig(n_rotation_samples=0)
    with pytest.raises(ValueError):
        OperatorConfig(rotation_mode="fibonacci")
