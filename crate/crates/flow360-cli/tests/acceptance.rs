//! Release gate: one test per acceptance criterion, each printing
//! `acceptance: <name>: PASS` or `FAIL` (visible with `--nocapture`)
//! before asserting. Tolerances here are the contract; the unit suites
//! pin the sharper values.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flow360::augment::{correct_flow, correction_profile, CorrectionMode};
use flow360::eval::wrapped_epe;
use flow360::raster::{read_flo, read_image, write_flo, write_image, FlowField, Image};
use flow360::sphere::{rotate_equirect, rotation_flow, textured_sphere_image, SphereRotation};
use flow360::warp::{
    backward_warp, mean_abs_error_rows, motion_mask, occlusion_masks, photometric_loss,
    wrap_target_grid, OcclusionMask,
};
use flow360::sphconv::{
    conv2d, fit_transform, interleaved_conv, rowgroup_partition, transform_loss,
    transform_loss_and_gradient, Correspondence, FeatureMap, FitMethod, FitOptions, Kernel,
    Padding,
};

fn verdict(name: &str, ok: bool) -> bool {
    println!("acceptance: {name}: {}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn random_feature_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureMap {
    let data = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureMap::from_data(h, w, c, data).unwrap()
}

fn random_kernel(rng: &mut ChaCha8Rng, kh: usize, kw: usize, ci: usize, co: usize) -> Kernel {
    let data = (0..kh * kw * ci * co)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Kernel::from_data(kh, kw, ci, co, data).unwrap()
}

#[test]
fn rotation_warp_consistency() {
    let started = Instant::now();
    let (h, w) = (128usize, 256usize);
    let margin = h / 20;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ok = true;
    for round in 0..20 {
        let yaw = rng.random_range(-30.0..30.0);
        let pitch = rng.random_range(-30.0..30.0);
        let roll = rng.random_range(-30.0..30.0);
        let rotation = SphereRotation::from_ypr_degrees(yaw, pitch, roll);
        let frame = textured_sphere_image(h, w, 3, round);
        let rotated = rotate_equirect(&frame, &rotation).unwrap();
        let flow = rotation_flow(&rotation, h, w);
        let recon = backward_warp(&rotated, &flow).unwrap();
        let err = mean_abs_error_rows(&frame, &recon, margin, h - margin).unwrap();
        ok &= err < 0.02;
        let self_epe = wrapped_epe(&flow, &flow, None).unwrap();
        ok &= self_epe.value == 0.0;
    }
    ok &= started.elapsed().as_secs_f64() < 30.0;
    assert!(verdict("rotation-warp-consistency", ok));
}

#[test]
fn boundary_semantics() {
    let (h, w) = (16usize, 32usize);
    // A bright pixel pushed 10 px past the right edge re-enters on the
    // left: warping the shifted frame by the constant flow restores the
    // original exactly.
    let mut first = Image::new(h, w, 1);
    first.set(5, 28, 0, 1.0);
    let mut second = Image::new(h, w, 1);
    second.set(5, (28 + 10) % w, 0, 1.0);
    let mut flow = FlowField::new(h, w);
    for i in 0..h {
        for j in 0..w {
            flow.set(i, j, 10.0, 0.0);
        }
    }
    let warped = backward_warp(&second, &flow).unwrap();
    let mut ok = warped == first;

    // Latitude overspill mirrors over the pole and negates longitude:
    // starting at (lat 85, lon 25), moving 15 degrees poleward targets
    // lat 100 and resolves to (lat 80, lon -25). All values are exact
    // in this geometry.
    let (gh, gw) = (18usize, 36usize);
    let mut over = FlowField::new(gh, gw);
    over.set(17, 20, 0.0, 1.5);
    let grid = wrap_target_grid(&over);
    let (lon, lat) = grid.get(17, 20);
    ok &= lat == 80.0 && lon == -25.0;
    assert!(verdict("boundary-semantics", ok));
}

fn iterated_occlusion(
    m1: &OcclusionMask,
    m2: &OcclusionMask,
    rounds: usize,
) -> (OcclusionMask, OcclusionMask) {
    let (h, w) = (m1.height(), m1.width());
    let mut o_fw = OcclusionMask::new(h, w);
    let mut o_bw = OcclusionMask::new(h, w);
    for _ in 0..rounds {
        let mut next_fw = OcclusionMask::new(h, w);
        let mut next_bw = OcclusionMask::new(h, w);
        for i in 0..h {
            for j in 0..w {
                let (a, b) = (m1.get(i, j), m2.get(i, j));
                next_fw.set(i, j, a & ((1 - b) | o_bw.get(i, j)));
                next_bw.set(i, j, b & ((1 - a) | o_fw.get(i, j)));
            }
        }
        o_fw = next_fw;
        o_bw = next_bw;
    }
    (o_fw, o_bw)
}

#[test]
fn occlusion_fixed_point() {
    let eps = 0.5;
    let mut ok = true;

    // One pixel per (static, static) combination of the two frames.
    let mut fw = FlowField::new(1, 4);
    let mut bw = FlowField::new(1, 4);
    fw.set(0, 1, 2.0, 0.0);
    fw.set(0, 3, 2.0, 0.0);
    bw.set(0, 2, 2.0, 0.0);
    bw.set(0, 3, 2.0, 0.0);
    let cases = std::iter::once((fw, bw)).chain((0..100).map(|round| {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + round);
        let mut fw = FlowField::new(6, 10);
        let mut bw = FlowField::new(6, 10);
        for i in 0..6 {
            for j in 0..10 {
                fw.set(i, j, rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
                bw.set(i, j, rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            }
        }
        (fw, bw)
    }));
    for (fw, bw) in cases {
        let (closed_fw, closed_bw) = occlusion_masks(&fw, &bw, eps).unwrap();
        let m1 = motion_mask(&fw, eps).unwrap();
        let m2 = motion_mask(&bw, eps).unwrap();
        let (iter_fw, iter_bw) = iterated_occlusion(&m1, &m2, 4);
        ok &= closed_fw.data() == iter_fw.data() && closed_bw.data() == iter_bw.data();
    }
    assert!(verdict("occlusion-fixed-point", ok));
}

#[test]
fn photometric_calibration() {
    let frame1 = textured_sphere_image(8, 16, 3, 5);
    let frame2 = textured_sphere_image(8, 16, 3, 6);
    let clear = OcclusionMask::new(8, 16);
    let loss = photometric_loss(
        &frame1, &frame1, &frame2, &frame2, &clear, &clear, 0.01, 0.1,
    )
    .unwrap();
    let expected = 2.0 * 0.01f64.powf(0.1);
    assert!(verdict(
        "photometric-calibration",
        (loss - expected).abs() < 1e-6
    ));
}

#[test]
fn interleaving_degeneracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut ok = true;
    for _ in 0..50 {
        let group_rows = rng.random_range(1..=8usize);
        let h = group_rows * rng.random_range(1..=32 / group_rows);
        let w = rng.random_range(1..=16usize);
        let c_in = rng.random_range(1..=3usize);
        let c_out = rng.random_range(1..=2usize);
        let ksize = [1usize, 3, 5][rng.random_range(0..3usize)];
        let interleave = rng.random_range(0..=group_rows);
        let padding = if rng.random_range(0..2) == 0 {
            Padding::Zero
        } else {
            Padding::HorizontalWrap
        };
        let plan = rowgroup_partition(h, group_rows, interleave).unwrap();
        let x = random_feature_map(&mut rng, h, w, c_in);
        let kernel = random_kernel(&mut rng, ksize, ksize, c_in, c_out);
        let plain = conv2d(&x, &kernel, padding).unwrap();
        let kernels = vec![kernel; plan.group_count()];
        let tiled = interleaved_conv(&x, &kernels, &plan, padding).unwrap();
        ok &= plain.data() == tiled.data();
    }

    // Without interleaving, every group is exactly its own convolution's
    // row slice.
    for round in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + round);
        let group_rows = [1usize, 2, 4, 8][rng.random_range(0..4usize)];
        let h = group_rows * rng.random_range(1..=3usize);
        let w = rng.random_range(2..=12usize);
        let plan = rowgroup_partition(h, group_rows, 0).unwrap();
        let x = random_feature_map(&mut rng, h, w, 2);
        let kernels: Vec<Kernel> = (0..plan.group_count())
            .map(|_| random_kernel(&mut rng, 3, 3, 2, 1))
            .collect();
        let out = interleaved_conv(&x, &kernels, &plan, Padding::HorizontalWrap).unwrap();
        for (g, kernel) in kernels.iter().enumerate() {
            let full = conv2d(&x, kernel, Padding::HorizontalWrap).unwrap();
            for row in plan.range(g) {
                for col in 0..w {
                    ok &= out.get(row, col, 0) == full.get(row, col, 0);
                }
            }
        }
    }
    assert!(verdict("interleaving-degeneracy", ok));
}

#[test]
fn transform_fitting() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (h, w, c_in, c_out) = (32usize, 64usize, 3usize, 2usize);
    let maps: Vec<FeatureMap> = (0..8)
        .map(|_| random_feature_map(&mut rng, h, w, c_in))
        .collect();
    let kernel = random_kernel(&mut rng, 3, 3, c_in, c_out);
    let plan = rowgroup_partition(h, 8, 1).unwrap();
    let opts = FitOptions {
        method: FitMethod::LeastSquares,
        correspondence: Correspondence::Identity,
        ..FitOptions::default()
    };
    let result = fit_transform(&maps, &maps, &kernel, &plan, &opts).unwrap();
    let mut ok = result.final_loss < 1e-6 && !result.degenerate;
    let source_norm: f64 = kernel.data().iter().map(|&v| (v as f64).powi(2)).sum();
    for recovered in &result.kernels {
        let diff: f64 = recovered
            .data()
            .iter()
            .zip(kernel.data())
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum();
        ok &= (diff / source_norm).sqrt() < 1e-3;
    }

    // Analytic gradients against central differences of the direct loss
    // evaluation, probed per group at a generic (non-optimal) point.
    let mut set = result.projections.clone();
    for matrix in &mut set.groups {
        for value in matrix.data_mut() {
            *value += rng.random_range(-0.05..0.05);
        }
    }
    let (_, grads) = transform_loss_and_gradient(&maps, &maps, &kernel, &plan, &opts, &set).unwrap();
    for (group, grad) in grads.iter().enumerate() {
        let entries = set.groups[group].data().len();
        for &index in &[0usize, 7, entries / 2, entries - 1] {
            let base = set.groups[group].data()[index];
            let probe = |offset: f32| -> (f64, f64) {
                let mut bumped = set.clone();
                bumped.groups[group].data_mut()[index] = base + offset;
                let stored = bumped.groups[group].data()[index];
                let loss =
                    transform_loss(&maps, &maps, &kernel, &plan, &opts, &bumped).unwrap();
                (loss, (stored - base) as f64)
            };
            let (lp, hp) = probe(1e-4);
            let (lm, hm) = probe(-1e-4);
            let fd = (lp - lm) / (hp - hm);
            let analytic = grad[index];
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            ok &= ((analytic - fd) / denom).abs() < 1e-4;
        }
    }
    ok &= started.elapsed().as_secs_f64() < 60.0;
    assert!(verdict("transform-fitting", ok));
}

#[test]
fn correction_profile_shape() {
    let mut ok = true;
    // h = 4 reference values, symmetric.
    let four = correction_profile(4, 8, CorrectionMode::BothAxes).unwrap();
    let expected = [0.3826834f32, 0.9238795, 0.9238795, 0.3826834];
    for (got, want) in four.row_scale().iter().zip(expected) {
        ok &= (got - want).abs() < 1e-5;
    }
    for i in 0..4 {
        ok &= four.row_scale()[i] == four.row_scale()[3 - i];
    }
    // Odd height: the equator row scales by exactly one.
    let five = correction_profile(5, 10, CorrectionMode::BothAxes).unwrap();
    ok &= five.row_scale()[2] == 1.0;

    // Linearity is exact for power-of-two coefficients on fields with
    // disjoint support.
    let (h, w) = (6usize, 8usize);
    let profile = correction_profile(h, w, CorrectionMode::BothAxes).unwrap();
    let mut left = FlowField::new(h, w);
    let mut right = FlowField::new(h, w);
    let mut combined = FlowField::new(h, w);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (a, b) = (2.0f32, 0.5f32);
    for i in 0..h {
        for j in 0..w {
            let (u, v) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            if j < w / 2 {
                left.set(i, j, u, v);
                combined.set(i, j, a * u, a * v);
            } else {
                right.set(i, j, u, v);
                combined.set(i, j, b * u, b * v);
            }
        }
    }
    let corrected = correct_flow(&combined, &profile).unwrap();
    let from_left = correct_flow(&left, &profile).unwrap();
    let from_right = correct_flow(&right, &profile).unwrap();
    for i in 0..h {
        for j in 0..w {
            let (cu, cv) = corrected.get(i, j);
            let (lu, lv) = from_left.get(i, j);
            let (ru, rv) = from_right.get(i, j);
            ok &= cu == a * lu + b * ru && cv == a * lv + b * rv;
        }
    }
    assert!(verdict("correction-profile", ok));
}

#[test]
fn io_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut ok = true;
    for round in 0..100 {
        let (h, w) = (rng.random_range(1..=12usize), rng.random_range(1..=12usize));
        let mut flow = FlowField::new(h, w);
        for i in 0..h {
            for j in 0..w {
                flow.set(i, j, rng.random_range(-1e4..1e4), rng.random_range(-1e4..1e4));
            }
        }
        let path = dir.path().join(format!("f{round}.flo"));
        write_flo(&flow, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let back = read_flo(&path).unwrap();
        write_flo(&back, &path).unwrap();
        ok &= bytes == fs::read(&path).unwrap();
        ok &= flow.data().iter().zip(back.data()).all(|(&x, &y)| x.to_bits() == y.to_bits());

        let mut img = Image::new(h, w, 3);
        for value in img.data_mut() {
            *value = rng.random_range(0..=255u16) as f32 / 255.0;
        }
        let path = dir.path().join(format!("i{round}.ppm"));
        write_image(&img, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let back = read_image(&path).unwrap();
        write_image(&back, &path).unwrap();
        ok &= bytes == fs::read(&path).unwrap();
    }
    assert!(verdict("io-round-trip", ok));
}

fn run_pipeline(dir: &Path) {
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_flow360"))
            .current_dir(dir)
            .args(args)
            .output()
            .expect("binary runs");
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    };
    run(&[
        "synth", "--height", "128", "--yaw", "14", "--pitch", "-6", "--roll", "4", "--first",
        "a.ppm", "--second", "b.ppm", "--flow", "gt.flo",
    ]);
    run(&["warp", "--image", "b.ppm", "--flow", "gt.flo", "--out", "recon.ppm"]);
    let eval = run(&["eval", "--pred", "gt.flo", "--gt", "gt.flo"]);
    let stdout = String::from_utf8_lossy(&eval.stdout);
    for line in stdout.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(record["value"], 0.0, "self-EPE must be exact: {line}");
    }
}

#[test]
fn cli_pipeline() {
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    run_pipeline(one.path());
    run_pipeline(two.path());

    let first = read_image(one.path().join("a.ppm")).unwrap();
    let recon = read_image(one.path().join("recon.ppm")).unwrap();
    let margin = 128 / 20;
    let err = mean_abs_error_rows(&first, &recon, margin, 128 - margin).unwrap();
    let mut ok = err < 0.02;
    for name in ["a.ppm", "b.ppm", "gt.flo", "recon.ppm"] {
        ok &= fs::read(one.path().join(name)).unwrap() == fs::read(two.path().join(name)).unwrap();
    }
    assert!(verdict("cli-pipeline", ok));
}
