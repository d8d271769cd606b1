//! Perspective-to-spherical augmentation.
//!
//! A perspective frame pair and its flow become spherical training data
//! in three steps: resize to the 2:1 equirectangular aspect, scale the
//! flow by a latitude/longitude correction profile, then redistribute
//! rows with [`project_omega`](crate::sphere::project_omega)'s vertical
//! map. Images skip the correction step; flow components are resampled
//! through the identical coordinate map as image channels.

use thiserror::Error;

use crate::raster::{FlowField, Image};
use crate::sphere::{project_omega_planes, SampleMode};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("zero-sized raster dimension")]
    ZeroDimension,
    #[error("profile is {profile_height}x{profile_width}, flow is {flow_height}x{flow_width}")]
    DimensionMismatch {
        profile_height: usize,
        profile_width: usize,
        flow_height: usize,
        flow_width: usize,
    },
}

/// How the vertical flow component is scaled by [`correct_flow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectionMode {
    /// Scale `v` by a per-column sine profile, mirroring the horizontal
    /// treatment.
    #[default]
    BothAxes,
    /// Leave `v` untouched: only horizontal displacements shrink toward
    /// the poles, where lines of latitude are short.
    HorizontalOnly,
}

/// Per-row and per-column flow scale factors.
///
/// All scales are in `(0, 1]`, peak at the center, and are symmetric
/// about it by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionProfile {
    mode: CorrectionMode,
    row_scale: Vec<f32>,
    col_scale: Vec<f32>,
}

impl CorrectionProfile {
    pub fn mode(&self) -> CorrectionMode {
        self.mode
    }

    /// Scale applied to `u` in each row.
    pub fn row_scale(&self) -> &[f32] {
        &self.row_scale
    }

    /// Scale applied to `v` in each column (all ones in
    /// [`CorrectionMode::HorizontalOnly`]).
    pub fn col_scale(&self) -> &[f32] {
        &self.col_scale
    }
}

/// Half-sine profile over `len` samples, mirrored so symmetry is exact.
fn sine_profile(len: usize) -> Vec<f32> {
    let mut scale = vec![0.0f32; len];
    for (i, slot) in scale.iter_mut().enumerate() {
        let k = i.min(len - 1 - i);
        let angle = std::f64::consts::PI * (k as f64 + 0.5) / len as f64;
        *slot = angle.sin() as f32;
    }
    scale
}

/// Build the flow correction profile for an `h x w` raster.
pub fn correction_profile(
    height: usize,
    width: usize,
    mode: CorrectionMode,
) -> Result<CorrectionProfile, AugmentError> {
    if height == 0 || width == 0 {
        return Err(AugmentError::ZeroDimension);
    }
    let row_scale = sine_profile(height);
    let col_scale = match mode {
        CorrectionMode::BothAxes => sine_profile(width),
        CorrectionMode::HorizontalOnly => vec![1.0; width],
    };
    Ok(CorrectionProfile {
        mode,
        row_scale,
        col_scale,
    })
}

/// Scale flow magnitudes by a correction profile:
/// `u' = u * row_scale[i]`, `v' = v * col_scale[j]`.
///
/// Linear in the flow; products accumulate in `f64` and round once.
pub fn correct_flow(
    flow: &FlowField,
    profile: &CorrectionProfile,
) -> Result<FlowField, AugmentError> {
    if profile.row_scale.len() != flow.height() || profile.col_scale.len() != flow.width() {
        return Err(AugmentError::DimensionMismatch {
            profile_height: profile.row_scale.len(),
            profile_width: profile.col_scale.len(),
            flow_height: flow.height(),
            flow_width: flow.width(),
        });
    }
    let mut out = FlowField::new(flow.height(), flow.width());
    for i in 0..flow.height() {
        let rs = profile.row_scale[i] as f64;
        for j in 0..flow.width() {
            let cs = profile.col_scale[j] as f64;
            let (u, v) = flow.get(i, j);
            out.set(i, j, (u as f64 * rs) as f32, (v as f64 * cs) as f32);
        }
    }
    Ok(out)
}

/// Augment an image at its own height: resize to `h x 2h`, then apply
/// the spherical row redistribution.
pub fn augment_image(img: &Image) -> Image {
    augment_image_to(img, img.height())
}

/// [`augment_image`] with an explicit output height.
///
/// # Panics
/// If `out_height` is zero.
pub fn augment_image_to(img: &Image, out_height: usize) -> Image {
    let resized = img
        .resize_nearest(out_height, 2 * out_height)
        .expect("non-zero output size");
    let data = project_omega_planes(
        resized.data(),
        resized.height(),
        resized.width(),
        resized.channels(),
        SampleMode::Bilinear,
        true,
    );
    Image::from_data(resized.height(), resized.width(), resized.channels(), data)
        .expect("same shape")
}

/// Augment a flow field at its own height.
pub fn augment_flow(flow: &FlowField, mode: CorrectionMode) -> FlowField {
    augment_flow_to(flow, flow.height(), mode)
}

/// Resize to `out_height x 2 out_height` (rescaling displacements),
/// apply the correction profile, then resample both components through
/// the spherical row redistribution.
///
/// # Panics
/// If `out_height` is zero.
pub fn augment_flow_to(flow: &FlowField, out_height: usize, mode: CorrectionMode) -> FlowField {
    let resized = flow
        .resize_nearest(out_height, 2 * out_height)
        .expect("non-zero output size");
    let profile = correction_profile(resized.height(), resized.width(), mode)
        .expect("non-zero output size");
    let corrected = correct_flow(&resized, &profile).expect("matching profile");
    let data = project_omega_planes(
        corrected.data(),
        corrected.height(),
        corrected.width(),
        2,
        SampleMode::Bilinear,
        false,
    );
    FlowField::from_data(corrected.height(), corrected.width(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_h4_matches_half_sine() {
        let p = correction_profile(4, 8, CorrectionMode::HorizontalOnly).unwrap();
        let expected = [0.38268, 0.92388, 0.92388, 0.38268];
        for (got, want) in p.row_scale().iter().zip(expected) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
        assert!(p.col_scale().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn profile_is_symmetric_and_peaks_at_one() {
        let p = correction_profile(9, 19, CorrectionMode::BothAxes).unwrap();
        let rs = p.row_scale();
        for i in 0..9 {
            assert_eq!(rs[i], rs[8 - i]);
            assert!(rs[i] > 0.0 && rs[i] <= 1.0);
        }
        // Odd length: exact unit peak at the center sample.
        assert_eq!(rs[4], 1.0);
        assert_eq!(p.col_scale()[9], 1.0);
        // Even length peaks at the two middle samples, just below one.
        let even = correction_profile(4, 8, CorrectionMode::BothAxes).unwrap();
        let cs = even.col_scale();
        for i in 0..8 {
            assert_eq!(cs[i], cs[7 - i]);
        }
        assert!(cs[3] < 1.0 && cs[3] > 0.98);
    }

    #[test]
    fn profile_rejects_zero_dimension() {
        assert!(matches!(
            correction_profile(0, 4, CorrectionMode::BothAxes),
            Err(AugmentError::ZeroDimension)
        ));
    }

    #[test]
    fn correct_flow_scales_u_by_row() {
        let mut flow = FlowField::new(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                flow.set(i, j, 1.0, 1.0);
            }
        }
        let p = correction_profile(4, 4, CorrectionMode::HorizontalOnly).unwrap();
        let out = correct_flow(&flow, &p).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let (u, v) = out.get(i, j);
                assert_eq!(u, p.row_scale()[i]);
                assert_eq!(v, 1.0); // geometric mode leaves v untouched
            }
        }
    }

    #[test]
    fn correct_flow_both_axes_mode_scales_v_by_column() {
        let mut flow = FlowField::new(2, 4);
        for i in 0..2 {
            for j in 0..4 {
                flow.set(i, j, 0.0, 2.0);
            }
        }
        let p = correction_profile(2, 4, CorrectionMode::BothAxes).unwrap();
        let out = correct_flow(&flow, &p).unwrap();
        for i in 0..2 {
            for j in 0..4 {
                let (u, v) = out.get(i, j);
                assert_eq!(u, 0.0);
                assert_eq!(v, (2.0f64 * p.col_scale()[j] as f64) as f32);
            }
        }
    }

    #[test]
    fn correct_flow_zero_stays_zero() {
        let flow = FlowField::new(3, 6);
        let p = correction_profile(3, 6, CorrectionMode::BothAxes).unwrap();
        let out = correct_flow(&flow, &p).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn correct_flow_rejects_mismatched_profile() {
        let flow = FlowField::new(3, 6);
        let p = correction_profile(4, 6, CorrectionMode::BothAxes).unwrap();
        assert!(matches!(
            correct_flow(&flow, &p),
            Err(AugmentError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn augment_constant_image_is_unchanged() {
        let mut img = Image::new(6, 6, 3);
        img.data_mut().fill(0.25);
        let out = augment_image(&img);
        assert_eq!((out.height(), out.width()), (6, 12));
        assert!(out.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn augment_center_row_of_odd_height_matches_resize() {
        let img = crate::sphere::textured_sphere_image(9, 18, 1, 2);
        let out = augment_image(&img);
        for j in 0..18 {
            assert_eq!(out.get(4, j, 0), img.get(4, j, 0));
        }
    }

    #[test]
    fn augment_stretches_polar_content() {
        // A step at a quarter height moves to a third: the map spends a
        // third of the output rows on the source's top quarter.
        let h = 12;
        let mut img = Image::new(h, 2 * h, 1);
        for i in 3..h {
            for j in 0..2 * h {
                img.set(i, j, 0, 1.0);
            }
        }
        let out = augment_image(&img);
        for j in 0..2 * h {
            assert_eq!(out.get(3, j, 0), 0.0);
            assert_eq!(out.get(4, j, 0), 1.0);
        }
    }

    #[test]
    fn augment_flow_zero_stays_zero() {
        let out = augment_flow(&FlowField::new(5, 10), CorrectionMode::BothAxes);
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn augment_flow_constant_field_hand_values() {
        // 4x4 constant (2, 1) geometric -> resized 4x8 scales u to 4;
        // correction leaves v at 1 and u rows at 4 * sin profile; the row
        // redistribution then blends neighbouring rows.
        let mut flow = FlowField::new(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                flow.set(i, j, 2.0, 1.0);
            }
        }
        let out = augment_flow(&flow, CorrectionMode::HorizontalOnly);
        assert_eq!((out.height(), out.width()), (4, 8));
        let s0 = 4.0 * (std::f64::consts::PI * 0.125).sin(); // 1.53073
        let s1 = 4.0 * (std::f64::consts::PI * 0.375).sin(); // 3.69552
        // Row 0 reads y = -0.348: both blended rows carry s0.
        let (u0, v0) = out.get(0, 0);
        assert!((u0 as f64 - s0).abs() < 1e-4);
        assert_eq!(v0, 1.0);
        // Row 1 reads y = 0.735: blend of s0 and s1.
        let (u1, v1) = out.get(1, 3);
        let expected = 0.2654 * s0 + 0.7346 * s1;
        assert!((u1 as f64 - expected).abs() < 1e-3, "{u1} vs {expected}");
        assert_eq!(v1, 1.0);
        // Vertical symmetry of the constant input survives the pipeline.
        let (u3, _) = out.get(3, 0);
        assert_eq!(u0, u3);
    }

    #[test]
    fn flow_components_use_the_image_coordinate_map() {
        // Horizontal-only correction leaves v untouched, so the v plane
        // goes through the row redistribution exactly like an image
        // channel.
        let img = crate::sphere::textured_sphere_image(8, 16, 1, 13);
        let mut flow = FlowField::new(8, 16);
        for i in 0..8 {
            for j in 0..16 {
                flow.set(i, j, 0.0, img.get(i, j, 0));
            }
        }
        let img_out = crate::sphere::project_omega(&img).unwrap();
        let flow_out = augment_flow(&flow, CorrectionMode::HorizontalOnly);
        for i in 0..8 {
            for j in 0..16 {
                assert_eq!(flow_out.get(i, j).1, img_out.get(i, j, 0));
            }
        }
    }

    #[test]
    fn augment_flow_respects_magnitude_bound() {
        // Scales are <= 1 and resampling is convex, so magnitudes never
        // grow beyond the resize rescale.
        let mut flow = FlowField::new(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                flow.set(i, j, (i as f32 - 2.5) * 3.0, (j as f32 - 2.5) * 2.0);
            }
        }
        let max_u = flow.data().chunks_exact(2).map(|p| p[0].abs()).fold(0.0, f32::max);
        let max_v = flow.data().chunks_exact(2).map(|p| p[1].abs()).fold(0.0, f32::max);
        let out = augment_flow(&flow, CorrectionMode::BothAxes);
        // Resize to 6x12 doubles u, keeps v.
        for pair in out.data().chunks_exact(2) {
            assert!(pair[0].abs() <= max_u * 2.0 + 1e-6);
            assert!(pair[1].abs() <= max_v + 1e-6);
        }
    }
}
