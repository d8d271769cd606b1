//! End-to-end geometric checks on synthetic spheres: analytic rotation
//! flows must actually move pixels where the resampled frames say they
//! went, before and after spherical augmentation.

use flow360::augment::{augment_flow, augment_image, CorrectionMode};
use flow360::eval::wrapped_epe;
use flow360::sphere::{rotate_equirect, rotation_flow, textured_sphere_image, SphereRotation};
use flow360::warp::{backward_warp, brightness_error_rows, mean_abs_error_rows};

const H: usize = 64;
const W: usize = 128;

/// Yaw/pitch/roll triples within 30 degrees, mixing pure and combined
/// axes.
const ROTATIONS: [(f64, f64, f64); 6] = [
    (10.0, 0.0, 0.0),
    (0.0, 8.0, 0.0),
    (0.0, 0.0, 12.0),
    (15.0, -7.0, 3.0),
    (-25.0, 12.0, -8.0),
    (28.0, 20.0, 17.0),
];

#[test]
fn rotation_flow_puts_pixels_where_the_rotated_frame_has_them() {
    for (index, &(yaw, pitch, roll)) in ROTATIONS.iter().enumerate() {
        let rotation = SphereRotation::from_ypr_degrees(yaw, pitch, roll);
        let frame1 = textured_sphere_image(H, W, 3, 40 + index as u64);
        let frame2 = rotate_equirect(&frame1, &rotation).unwrap();
        let flow = rotation_flow(&rotation, H, W);
        let warped = backward_warp(&frame2, &flow).unwrap();
        // Skip 5% of rows at each pole, where a pixel spans a huge
        // solid-angle range and resampling is legitimately lossy.
        let margin = H / 20;
        let err = mean_abs_error_rows(&frame1, &warped, margin, H - margin).unwrap();
        assert!(
            err < 0.04,
            "rotation {index} ({yaw},{pitch},{roll}): mean abs {err}"
        );
    }
}

#[test]
fn rotation_flow_agrees_with_itself_everywhere() {
    for &(yaw, pitch, roll) in &ROTATIONS {
        let rotation = SphereRotation::from_ypr_degrees(yaw, pitch, roll);
        let flow = rotation_flow(&rotation, H, W);
        let report = wrapped_epe(&flow, &flow, None).unwrap();
        assert_eq!(report.value, 0.0);
        assert_eq!(report.count, H * W);
    }
}

#[test]
fn augmented_pairs_stay_photometrically_consistent_mid_sphere() {
    // (rotation, extra slack): the corrected flow is an approximation,
    // so augmentation may cost a little alignment; it must stay small
    // away from the poles.
    let cases = [
        ((10.0, 0.0, 0.0), 0.02),
        ((8.0, 4.0, 3.0), 0.03),
    ];
    for (index, &((yaw, pitch, roll), slack)) in cases.iter().enumerate() {
        let rotation = SphereRotation::from_ypr_degrees(yaw, pitch, roll);
        let frame1 = textured_sphere_image(H, W, 3, 60 + index as u64);
        let frame2 = rotate_equirect(&frame1, &rotation).unwrap();
        let flow = rotation_flow(&rotation, H, W);
        let (lo, hi) = (3 * H / 8, 5 * H / 8);
        let before = brightness_error_rows(&frame1, &frame2, &flow, lo, hi).unwrap();
        let aug1 = augment_image(&frame1);
        let aug2 = augment_image(&frame2);
        let aug_flow = augment_flow(&flow, CorrectionMode::BothAxes);
        let after = brightness_error_rows(&aug1, &aug2, &aug_flow, lo, hi).unwrap();
        assert!(
            after <= before + slack,
            "case {index}: before {before}, after {after}"
        );
    }
}
