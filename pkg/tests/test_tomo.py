import math

import numpy as np
import pytest

from superiorize import (
    Ellipse,
    GridImage,
    PhantomSpec,
    ScanGeometry,
    generate_data,
    make_phantom,
    proximity,
    read_phantom_spec,
    read_sinogram,
    trace_ray,
    tv_value,
    vectorize,
    write_phantom_spec,
    write_sinogram,
)


class TestMakePhantom:
    def test_empty_spec_gives_zero_image(self):
        spec = PhantomSpec(grid=16, pixel_size=0.1, ellipses=(),
                           value_range=(0.0, 0.0))
        img = make_phantom(spec)
        assert img.shape == (16, 16)
        assert np.all(img.values == 0.0)

    def test_single_centered_ellipse(self):
        e = Ellipse(0.0, 0.0, 0.3, 0.3, value=1.0)
        spec = PhantomSpec(grid=9, pixel_size=0.1, ellipses=(e,),
                           value_range=(0.0, 1.0))
        img = make_phantom(spec)
        assert img.values[4, 4] == 1.0  # center pixel inside
        assert img.values[0, 0] == 0.0  # corner outside

    def test_overlap_is_additive(self):
        big = Ellipse(0.0, 0.0, 0.5, 0.5, value=0.2)
        small = Ellipse(0.0, 0.0, 0.2, 0.2, value=0.1)
        spec = PhantomSpec(grid=11, pixel_size=0.1, ellipses=(big, small),
                           value_range=(0.0, 0.3))
        img = make_phantom(spec)
        assert img.values[5, 5] == pytest.approx(0.3)

    def test_rotation_moves_mass(self):
        tall = Ellipse(0.0, 0.0, 0.05, 0.4, angle=0.0, value=1.0)
        flat = Ellipse(0.0, 0.0, 0.05, 0.4, angle=math.pi / 2, value=1.0)
        spec_t = PhantomSpec(grid=9, pixel_size=0.1, ellipses=(tall,),
                             value_range=(0.0, 1.0))
        spec_f = PhantomSpec(grid=9, pixel_size=0.1, ellipses=(flat,),
                             value_range=(0.0, 1.0))
        img_t = make_phantom(spec_t).values
        img_f = make_phantom(spec_f).values
        assert np.array_equal(img_t, img_f.T)

    def test_surrogate_head_defaults(self):
        spec = PhantomSpec.surrogate_head()
        img = make_phantom(spec)
        assert img.shape == (243, 243)
        assert img.pixel_size == pytest.approx(0.0752)
        assert img.values.min() >= 0.0
        assert img.values.max() == pytest.approx(0.5639, abs=1e-12)
        # soft-tissue interior sits inside the narrow display window
        assert np.any((img.values > 0.204) & (img.values < 0.21675))

    def test_surrogate_head_scales_down(self):
        img = make_phantom(PhantomSpec.surrogate_head(63))
        assert img.shape == (63, 63)
        # physical extent preserved: 63 * pixel == 243 * 0.0752
        assert 63 * img.pixel_size == pytest.approx(243 * 0.0752)

    def test_declared_range_enforced(self):
        e = Ellipse(0.0, 0.0, 0.3, 0.3, value=2.0)
        spec = PhantomSpec(grid=9, pixel_size=0.1, ellipses=(e,),
                           value_range=(0.0, 1.0))
        with pytest.raises(ValueError):
            make_phantom(spec)


class TestPhantomSpecFile:
    def test_round_trip(self, tmp_path):
        spec = PhantomSpec.surrogate_head(27)
        path = tmp_path / "head.phantom"
        write_phantom_spec(spec, path)
        back = read_phantom_spec(path)
        assert back.grid == spec.grid
        assert back.pixel_size == pytest.approx(spec.pixel_size)
        assert back.value_range == pytest.approx(spec.value_range)
        assert len(back.ellipses) == len(spec.ellipses)
        for a, b in zip(back.ellipses, spec.ellipses):
            assert (a.cx, a.cy, a.a, a.b, a.angle, a.value) == pytest.approx(
                (b.cx, b.cy, b.a, b.b, b.angle, b.value))

    def test_unknown_key_rejected_with_name(self, tmp_path):
        path = tmp_path / "bad.phantom"
        path.write_text("grid = 9\nwibble = 3\n")
        with pytest.raises(ValueError, match="wibble"):
            read_phantom_spec(path)

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        path = tmp_path / "ok.phantom"
        path.write_text(
            "# a phantom\n\ngrid = 5\npixel_size = 0.1\n"
            "value_range = 0 1\nellipse = 0 0 0.2 0.2 0 1\n")
        spec = read_phantom_spec(path)
        assert spec.grid == 5
        assert len(spec.ellipses) == 1


class TestTraceRay:
    def test_horizontal_ray_through_one_row(self):
        # middle row of a 5x5 grid with pixel 0.2: five chords of 0.2
        idx, lengths = trace_ray(0.0, 0.0, 5, 0.2)
        assert len(idx) == 5
        assert np.allclose(lengths, 0.2)
        rows = idx // 5
        assert np.all(rows == 2)

    def test_diagonal_through_single_pixel(self):
        # 1x1 grid: the 45-degree ray through the center cuts the diagonal
        idx, lengths = trace_ray(math.pi / 4, 0.0, 1, 0.3)
        assert list(idx) == [0]
        assert lengths[0] == pytest.approx(0.3 * math.sqrt(2.0), rel=1e-12)

    def test_vertical_ray(self):
        idx, lengths = trace_ray(math.pi / 2, 0.0, 4, 0.25)
        assert len(idx) == 4
        cols = idx % 4
        assert len(set(cols.tolist())) == 1
        assert np.allclose(lengths, 0.25)

    def test_miss_returns_empty(self):
        idx, lengths = trace_ray(0.0, 10.0, 4, 0.25)
        assert idx.size == 0 and lengths.size == 0

    def test_indices_strictly_increasing_lengths_positive(self):
        rng = np.random.default_rng(181)
        for trial in range(300):
            angle = float(rng.uniform(0.0, math.pi))
            offset = float(rng.uniform(-1.0, 1.0))
            idx, lengths = trace_ray(angle, offset, 12, 0.13)
            assert np.all(np.diff(idx) > 0)
            assert np.all(lengths > 0.0)

    def test_chord_sum_oracle(self):
        # total length equals the segment the line cuts from the square
        rng = np.random.default_rng(182)
        grid, pix = 16, 0.11
        half = grid * pix / 2.0
        for trial in range(2000):
            angle = float(rng.uniform(0.0, math.pi))
            offset = float(rng.uniform(-half * 1.5, half * 1.5))
            idx, lengths = trace_ray(angle, offset, grid, pix)
            u = np.array([math.cos(angle), math.sin(angle)])
            n = np.array([-math.sin(angle), math.cos(angle)])
            p0 = offset * n
            ts = []
            for axis in range(2):
                if abs(u[axis]) > 1e-300:
                    for bound in (-half, half):
                        t = (bound - p0[axis]) / u[axis]
                        q = p0 + t * u
                        other = 1 - axis
                        if abs(q[other]) <= half + 1e-12:
                            ts.append(t)
            if len(ts) < 2:
                assert lengths.sum() == 0.0
                continue
            chord = max(ts) - min(ts)
            assert lengths.sum() == pytest.approx(chord, abs=1e-10)

    def test_reversal_symmetry(self):
        # the same line parametrized in the opposite direction covers the
        # same pixels with the same lengths
        rng = np.random.default_rng(183)
        for trial in range(200):
            angle = float(rng.uniform(0.0, math.pi))
            offset = float(rng.uniform(-0.8, 0.8))
            a, la = trace_ray(angle, offset, 9, 0.2)
            b, lb = trace_ray(angle + math.pi, -offset, 9, 0.2)
            assert np.array_equal(a, b)
            assert np.allclose(la, lb, atol=1e-10)


class TestScanGeometry:
    def test_angles_equally_spaced_over_half_turn(self):
        g = ScanGeometry(num_views=4, rays_per_view=10)
        assert np.allclose(g.angles(), [0.0, math.pi / 4, math.pi / 2,
                                        3 * math.pi / 4])

    def test_row_count_near_paper_total_at_defaults(self):
        img = make_phantom(PhantomSpec.surrogate_head())
        data = generate_data(img, ScanGeometry())
        assert abs(len(data.problem) - 25_452) / 25_452 <= 0.02

    def test_resolve_fills_detector_fields_from_image(self):
        g = ScanGeometry(num_views=5).resolve(pixel_size=0.1, grid_width=2.0)
        assert g.detector_spacing == 0.1
        # bank spans the circumscribed circle of the 2.0-wide square
        assert g.rays_per_view == math.ceil(2.0 * math.sqrt(2.0) / 0.1)
        assert g.rays_per_view * g.detector_spacing >= 2.0 * math.sqrt(2.0)

    def test_resolve_keeps_pinned_fields(self):
        g = ScanGeometry(3, rays_per_view=7, detector_spacing=0.5)
        assert g.resolve(0.1, 2.0) == g

    def test_offsets_symmetric_and_evenly_spaced(self):
        g = ScanGeometry(3, rays_per_view=6, detector_spacing=0.25)
        off = g.offsets()
        assert np.allclose(off, -off[::-1])
        assert np.allclose(np.diff(off), 0.25)

    def test_offsets_require_resolution(self):
        with pytest.raises(ValueError):
            ScanGeometry(num_views=3).offsets()

    def test_validation(self):
        with pytest.raises(ValueError):
            ScanGeometry(num_views=0)
        with pytest.raises(ValueError):
            ScanGeometry(rays_per_view=0)
        with pytest.raises(ValueError):
            ScanGeometry(detector_spacing=-1.0)


class TestGenerateData:
    def test_zero_image_gives_zero_integrals(self):
        img = GridImage(np.zeros((12, 12)), pixel_size=0.2)
        data = generate_data(img, ScanGeometry(num_views=6, rays_per_view=14))
        assert np.all(data.sinogram_values == 0.0)

    def test_phantom_is_consistent_solution(self, desk_data):
        x = vectorize(desk_data.image)
        pr = proximity(desk_data.problem, x)
        assert pr <= 1e-8 * math.sqrt(len(desk_data.problem))

    def test_linearity_doubling_image_doubles_data(self):
        rng = np.random.default_rng(191)
        values = rng.uniform(0.0, 1.0, size=(10, 10))
        geom = ScanGeometry(num_views=5, rays_per_view=12)
        d1 = generate_data(GridImage(values, pixel_size=0.15), geom)
        d2 = generate_data(GridImage(2 * values, pixel_size=0.15), geom)
        assert np.allclose(d2.sinogram_values, 2 * d1.sinogram_values,
                           rtol=1e-12)

    def test_empty_rows_dropped(self):
        img = GridImage(np.ones((8, 8)), pixel_size=0.1)
        geom = ScanGeometry(num_views=3, rays_per_view=40,
                            detector_spacing=0.5)  # bank far wider than grid
        data = generate_data(img, geom)
        assert data.n_dropped > 0
        assert len(data.problem) == 3 * 40 - data.n_dropped

    def test_view_blocks_cover_problem(self, desk_data):
        scheme = desk_data.view_blocks()
        rows = np.concatenate([np.asarray(b) for b in scheme.blocks])
        assert sorted(rows.tolist()) == list(range(len(desk_data.problem)))

    def test_row_metadata_aligned(self, desk_data):
        n = len(desk_data.problem)
        assert desk_data.row_views.shape == (n,)
        assert desk_data.row_detectors.shape == (n,)
        assert desk_data.sinogram_values.shape == (n,)


class TestSinogramFile:
    def test_round_trip(self, tmp_path, desk_data):
        path = tmp_path / "scan.sino"
        write_sinogram(path, desk_data.row_views, desk_data.row_detectors,
                       desk_data.sinogram_values)
        views, detectors, values = read_sinogram(path)
        assert np.array_equal(views, desk_data.row_views)
        assert np.array_equal(detectors, desk_data.row_detectors)
        assert np.array_equal(values, desk_data.sinogram_values)

    def test_header_is_ascii_before_binary(self, tmp_path, desk_data):
        path = tmp_path / "scan.sino"
        write_sinogram(path, desk_data.row_views, desk_data.row_detectors,
                       desk_data.sinogram_values)
        raw = path.read_bytes()
        head, _, _ = raw.partition(b"end\n")
        text = head.decode("ascii")
        assert "sinogram 1" in text
        assert "little" in text

    def test_truncated_payload_rejected(self, tmp_path, desk_data):
        path = tmp_path / "scan.sino"
        write_sinogram(path, desk_data.row_views, desk_data.row_detectors,
                       desk_data.sinogram_values)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ValueError):
            read_sinogram(path)
