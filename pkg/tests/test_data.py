import numpy as np
import pytest

from cftalign import data as D
from cftalign import synthetic as S
from cftalign.errors import ConfigurationError, DataError, UsageError


@pytest.fixture
def face():
    return S.generate_synthetic_face(101)


@pytest.fixture
def scheme():
    return S.make_synthetic_scheme(8)


class TestPartitionScheme:
    @pytest.mark.parametrize("name", ["300w_68", "cofw_29", "helen_194"])
    def test_builtin_schemes_validate(self, name):
        s = D.builtin_scheme(name)
        assert len(s.principal) == 12
        if s.flip_map is not None:
            fm = s.flip_map
            assert all(fm[fm[i]] == i for i in range(s.n_landmarks))
            pset = set(s.principal)
            assert all((fm[i] in pset) == (i in pset) for i in range(s.n_landmarks))

    def test_68_point_partition_splits_12_56(self):
        s = D.builtin_scheme("300w_68")
        assert len(s.principal) == 12 and len(s.elaborate) == 56

    def test_synthetic_scheme_flip_closed(self, scheme):
        fm = scheme.flip_map
        assert all(fm[fm[i]] == i for i in range(scheme.n_landmarks))
        pset = set(scheme.principal)
        assert all((fm[i] in pset) == (i in pset) for i in range(scheme.n_landmarks))

    def test_bad_flip_map_rejected(self):
        with pytest.raises(ConfigurationError, match="involution"):
            D.PartitionScheme("x", 4, (0, 1), (0, 1), flip_map=(1, 2, 0, 3))

    def test_subset_breaking_flip_rejected(self):
        with pytest.raises(ConfigurationError, match="principal"):
            D.PartitionScheme("x", 4, (0,), (0, 1), flip_map=(1, 0, 3, 2))

    def test_unknown_keys_rejected(self, tmp_path):
        p = tmp_path / "part.json"
        p.write_text('{"name": "x", "n_landmarks": 2, "principal": [0], '
                     '"interocular": [0, 1], "wat": 3}')
        with pytest.raises(ConfigurationError, match="wat"):
            D.load_scheme(p)


class TestRotateSample:
    def test_zero_angle_is_landmark_identity(self, face):
        out = D.rotate_sample(face, 0.0)
        assert np.array_equal(out.landmarks.points, face.landmarks.points)
        assert np.array_equal(out.image, face.image)

    def test_ninety_degree_convention(self, scheme):
        # center the box at c; a point at c + (r, 0) must land at c + (0, r)
        img = np.full((200, 200, 3), 128, dtype=np.uint8)
        c = np.array([99.5, 99.5])
        r = 20.0
        pts = np.tile(c, (scheme.n_landmarks, 1))
        pts[:, 0] += np.linspace(-r, r, scheme.n_landmarks)
        pts[:, 1] += np.linspace(-10.0, 10.0, scheme.n_landmarks)
        pts[0] = c + [r, 0.0]
        sample = D.AnnotatedImage(img, D.LandmarkSet(pts, scheme), (79.5, 79.5, 40, 40))
        out = D.rotate_sample(sample, 90.0)
        assert np.allclose(out.landmarks.points[0], c + [0.0, r], atol=1e-9)

    def test_all_landmarks_inside_new_box(self, face):
        for angle in (-15, -5, 5, 15):
            out = D.rotate_sample(face, angle)
            assert out.box_contains_landmarks()

    def test_landmarks_leaving_image_skips(self, scheme):
        img = np.full((60, 60, 3), 100, dtype=np.uint8)
        pts = np.column_stack([np.linspace(2, 57, scheme.n_landmarks),
                               np.full(scheme.n_landmarks, 30.0)])
        sample = D.AnnotatedImage(img, D.LandmarkSet(pts, scheme), (1, 24, 57, 12))
        with pytest.raises(D.SampleSkipped):
            D.rotate_sample(sample, 45.0)

    def test_crop_content_comes_from_source(self, face):
        # the rotated box must map inside the original image; corners of a
        # box touching the canvas edge would need fill pixels -> skip
        out = D.rotate_sample(face, 10.0)
        inv = np.array([[np.cos(np.radians(-10)), -np.sin(np.radians(-10))],
                        [np.sin(np.radians(-10)), np.cos(np.radians(-10))]])
        x0, y0, w, h = out.face_box
        bx0, by0, bw, bh = face.face_box
        c = np.array([bx0 + bw / 2, by0 + bh / 2])
        corners = np.array([[x0, y0], [x0 + w, y0], [x0, y0 + h], [x0 + w, y0 + h]])
        src = (corners - c) @ inv.T + c
        hh, ww = face.image.shape[:2]
        assert src[:, 0].min() >= 0 and src[:, 0].max() <= ww - 1
        assert src[:, 1].min() >= 0 and src[:, 1].max() <= hh - 1


class TestTranslateBox:
    def test_zero_offset_identity(self, face):
        out = D.translate_box(face, (0.0, 0.0))
        assert out.face_box == face.face_box
        assert np.array_equal(out.landmarks.points, face.landmarks.points)

    def test_offset_moves_box_and_normalized_targets(self, face):
        x0, y0, w, h = face.face_box
        out = D.translate_box(face, (0.05, 0.0))
        assert out.face_box[0] == pytest.approx(x0 + 0.05 * w)
        before = D.normalize_points(face.landmarks.points, face.face_box)
        after = D.normalize_points(out.landmarks.points, out.face_box)
        assert np.allclose(after[:, 0], before[:, 0] - 0.05, atol=1e-9)
        assert np.allclose(after[:, 1], before[:, 1], atol=1e-12)

    def test_offset_excluding_landmark_skips(self, scheme):
        img = np.full((100, 100, 3), 90, dtype=np.uint8)
        pts = np.column_stack([np.linspace(30, 70, scheme.n_landmarks),
                               np.linspace(30, 70, scheme.n_landmarks)])
        sample = D.AnnotatedImage(img, D.LandmarkSet(pts, scheme), (29.9, 29.9, 40.2, 40.2))
        with pytest.raises(D.SampleSkipped, match="contain"):
            D.translate_box(sample, (0.2, 0.0))


class TestFlipSample:
    def test_involution_bit_exact(self, face):
        out = D.flip_sample(D.flip_sample(face))
        assert np.array_equal(out.landmarks.points, face.landmarks.points)
        assert np.array_equal(out.image, face.image)
        assert out.face_box == face.face_box

    def test_symmetric_face_flip_consistency(self):
        sample = S.generate_synthetic_face(5, S.SyntheticFaceParams(symmetric=True))
        flipped = D.flip_sample(sample)
        assert np.abs(flipped.landmarks.points - sample.landmarks.points).max() < 0.5

    def test_principal_subset_preserved(self, face):
        flipped = D.flip_sample(face)
        assert flipped.landmarks.scheme.principal == face.landmarks.scheme.principal

    def test_missing_flip_map_is_configuration_error(self, face):
        scheme = D.PartitionScheme("noflip", face.landmarks.scheme.n_landmarks,
                                   face.landmarks.scheme.principal,
                                   face.landmarks.scheme.interocular, flip_map=None)
        sample = D.AnnotatedImage(face.image, D.LandmarkSet(face.landmarks.points, scheme),
                                  face.face_box)
        with pytest.raises(ConfigurationError, match="flip"):
            D.flip_sample(sample)


class TestDegradeQuality:
    def test_quality_100_nearly_lossless(self, face):
        out = D.degrade_quality(face, 100)
        diff = np.abs(out.image.astype(int) - face.image.astype(int))
        assert diff.max() <= 2

    def test_landmarks_and_box_unchanged(self, face):
        out = D.degrade_quality(face, 50)
        assert np.array_equal(out.landmarks.points, face.landmarks.points)
        assert out.face_box == face.face_box

    def test_low_quality_actually_degrades(self, face):
        out = D.degrade_quality(face, 10)
        mad = np.abs(out.image.astype(float) - face.image.astype(float)).mean()
        assert mad > 0.5

    def test_quality_range_enforced(self, face):
        for q in (0, 101, -3):
            with pytest.raises(UsageError):
                D.degrade_quality(face, q)


class TestCropAndEncode:
    def test_corner_and_center_targets(self, scheme):
        img = np.full((120, 120, 3), 100, dtype=np.uint8)
        pts = np.tile([60.0, 70.0], (scheme.n_landmarks, 1))
        pts[0] = [10.0, 20.0]   # box corner
        pts[1] = [60.0, 70.0]   # box center
        pts[4] = [40.0, 60.0]   # keep the interocular pair non-degenerate
        pts[7] = [80.0, 60.0]
        sample = D.AnnotatedImage(img, D.LandmarkSet(pts, scheme), (10, 20, 100, 100))
        _, f_b, f_r, _ = D.crop_and_encode(sample)
        norm = D.assemble_points(f_b, f_r, scheme)
        assert np.allclose(norm[0], [0.0, 0.0], atol=1e-12)
        assert np.allclose(norm[1], [0.5, 0.5], atol=1e-12)

    def test_interocular_distance_example(self, scheme):
        img = np.full((120, 120, 3), 100, dtype=np.uint8)
        pts = np.tile([50.0, 50.0], (scheme.n_landmarks, 1))
        pts[4] = [30.0, 40.0]  # left outer eye corner: normalized (0.3, 0.4)
        pts[7] = [70.0, 40.0]  # right outer eye corner: normalized (0.7, 0.4)
        sample = D.AnnotatedImage(img, D.LandmarkSet(pts, scheme), (0, 0, 100, 100))
        _, _, _, d = D.crop_and_encode(sample)
        assert d == pytest.approx(0.4, abs=1e-12)

    def test_decode_round_trip(self, face):
        _, f_b, f_r, _ = D.crop_and_encode(face)
        norm = D.assemble_points(f_b, f_r, face.landmarks.scheme)
        decoded = D.denormalize_points(norm, face.face_box)
        assert np.abs(decoded - face.landmarks.points).max() < 1e-6

    def test_decode_pixel_example(self):
        out = D.denormalize_points(np.array([[0.5, 0.5]]), (10, 20, 100, 100))
        assert np.allclose(out, [[60.0, 70.0]])

    def test_pixels_scaled_to_unit(self, face):
        img, _, _, _ = D.crop_and_encode(face)
        assert img.shape == (3, 50, 50)
        assert img.dtype == np.float32
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_degenerate_box_is_data_error(self, face):
        bad = D.AnnotatedImage(face.image, face.landmarks, (10, 10, 0.5, 40))
        with pytest.raises(DataError):
            D.crop_and_encode(bad)


class TestAugmentDataset:
    def test_multiplicity_bound_and_containment(self):
        samples = S.generate_synthetic_dataset(3, seed=21)
        spec = D.AugmentationSpec(rotation_angles=(-10.0, 0.0, 10.0),
                                  translation_offsets=((0.0, 0.0), (0.04, 0.0)),
                                  compression_qualities=(90, 50))
        emitted, manifest, skips = D.augment_dataset(samples, spec)
        bound = 3 * 3 * 2 * 2 * 2
        assert len(emitted) + 0 <= bound
        assert len(emitted) == len(manifest)
        for s in emitted:
            assert s.box_contains_landmarks()
            s.validate()

    def test_deterministic_manifest(self):
        samples = S.generate_synthetic_dataset(2, seed=3)
        spec = D.AugmentationSpec(rotation_angles=(0.0, 8.0),
                                  translation_offsets=((0.0, 0.0),),
                                  compression_qualities=(80,))
        m1 = D.augment_dataset(samples, spec)[1]
        m2 = D.augment_dataset(samples, spec)[1]
        assert m1 == m2

    def test_skips_are_recorded(self, scheme):
        img = np.full((60, 60, 3), 100, dtype=np.uint8)
        pts = np.column_stack([np.linspace(2, 57, scheme.n_landmarks),
                               np.linspace(20, 40, scheme.n_landmarks)])
        tight = D.AnnotatedImage(img, D.LandmarkSet(pts, scheme), (1.5, 19, 56, 22),
                                 name="tight")
        spec = D.AugmentationSpec(rotation_angles=(0.0, 30.0),
                                  translation_offsets=((0.0, 0.0),),
                                  compression_qualities=(90,), do_flip=False)
        emitted, manifest, skips = D.augment_dataset([tight], spec)
        assert len(skips) >= 1
        assert any("tight" == row[0] for row in skips)


class TestAnnotationIO:
    def test_pts_round_trip(self, tmp_path, face):
        path = tmp_path / "a.pts"
        D.write_pts(face.landmarks.points, path)
        back = D.parse_pts(path)
        assert np.abs(back - face.landmarks.points).max() < 1e-6

    def test_pts_count_mismatch_names_file(self, tmp_path):
        path = tmp_path / "bad.pts"
        path.write_text("version: 1\nn_points: 68\n{\n1.0 2.0\n}\n")
        with pytest.raises(DataError, match="bad.pts"):
            D.parse_pts(path)

    def test_pts_header_errors(self, tmp_path):
        path = tmp_path / "h.pts"
        path.write_text("n_points: 3\n{\n}\n")
        with pytest.raises(DataError, match="version"):
            D.parse_pts(path)

    def test_dataset_round_trip(self, tmp_path):
        samples = S.generate_synthetic_dataset(4, seed=8)
        D.save_dataset(samples, tmp_path / "ds", samples[0].landmarks.scheme)
        back = D.load_dataset(tmp_path / "ds")
        assert len(back) == 4
        for a, b in zip(samples, back):
            assert a.name == b.name
            assert np.abs(a.landmarks.points - b.landmarks.points).max() < 1e-6
            assert np.array_equal(a.image, b.image)
            assert np.allclose(a.face_box, b.face_box, atol=1e-6)

    def test_empty_dataset_warns_not_errors(self, tmp_path, caplog):
        (tmp_path / "empty" / "annotations").mkdir(parents=True)
        scheme = S.make_synthetic_scheme(8)
        D.save_scheme(scheme, tmp_path / "empty" / "partition.json")
        import logging
        with caplog.at_level(logging.WARNING):
            out = D.load_dataset(tmp_path / "empty")
        assert out == []
        assert any("no annotations" in r.message for r in caplog.records)

    def test_empty_csv_warns_not_errors(self, tmp_path, caplog):
        csv_path = tmp_path / "ann.csv"
        csv_path.write_text("")
        scheme = S.make_synthetic_scheme(8)
        import logging
        with caplog.at_level(logging.WARNING):
            out = D.load_dataset(csv_path, scheme=scheme)
        assert out == []

    def test_csv_row_errors_carry_line_numbers(self, tmp_path):
        scheme = S.make_synthetic_scheme(0)  # 12 landmarks
        csv_path = tmp_path / "ann.csv"
        csv_path.write_text("img.npy," + ",".join(["1.0"] * 10) + "\n")
        with pytest.raises(DataError, match=":1:"):
            D.load_dataset(csv_path, scheme=scheme)

    def test_csv_dataset_loads(self, tmp_path):
        sample = S.generate_synthetic_face(77)
        np.save(tmp_path / "img0.npy", sample.image)
        coords = ",".join("%.6f" % v for v in sample.landmarks.points.reshape(-1))
        (tmp_path / "ann.csv").write_text("img0.npy,%s\n" % coords)
        out = D.load_dataset(tmp_path / "ann.csv", scheme=sample.landmarks.scheme)
        assert len(out) == 1
        assert np.abs(out[0].landmarks.points - sample.landmarks.points).max() < 1e-6

    def test_missing_image_is_data_error(self, tmp_path):
        scheme = S.make_synthetic_scheme(8)
        csv_path = tmp_path / "ann.csv"
        coords = ",".join(["5.0"] * (2 * scheme.n_landmarks))
        csv_path.write_text("nothere.npy,%s\n" % coords)
        with pytest.raises(DataError, match="nothere"):
            D.load_dataset(csv_path, scheme=scheme)


class TestSynthetic:
    def test_fixed_seed_bit_identical(self):
        a = S.generate_synthetic_face(42)
        b = S.generate_synthetic_face(42)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.landmarks.points, b.landmarks.points)
        assert a.face_box == b.face_box

    def test_many_samples_pass_invariants(self):
        samples = S.generate_synthetic_dataset(500, seed=1)
        for s in samples:
            s.validate()
            assert s.box_contains_landmarks()
            assert s.landmarks.interocular_distance() > 0

    def test_elaborate_zero_supported(self):
        s = S.generate_synthetic_face(3, S.SyntheticFaceParams(n_elaborate=0))
        assert s.landmarks.scheme.n_landmarks == 12
        assert s.landmarks.scheme.elaborate == ()

    def test_extra_contour_pairs(self):
        s = S.generate_synthetic_face(3, S.SyntheticFaceParams(n_elaborate=12))
        assert s.landmarks.scheme.n_landmarks == 24
        fm = s.landmarks.scheme.flip_map
        assert all(fm[fm[i]] == i for i in range(24))

    def test_odd_elaborate_rejected(self):
        with pytest.raises(ConfigurationError):
            S.make_synthetic_scheme(9)
