//! Geometric and loss primitives for optical flow on 360-degree video.
//!
//! Everything operates on equirectangular rasters: `width == 2 * height`,
//! longitude increasing left to right across the full circle, latitude from
//! the north pole (top row) to the south pole (bottom row). Horizontal
//! neighbours wrap around the seam; walking off the top or bottom edge
//! crosses the pole, which lands on the antipodal column of the same row
//! band. All resampling in this crate follows those two rules.
//!
//! Flow fields use the Middlebury convention: per-pixel `(u, v)`
//! displacements in pixels, `u` positive rightward, `v` positive downward,
//! mapping pixels of the first frame to positions in the second.
//!
//! The crate splits into:
//!
//! * [`raster`]: image/flow containers, resampling, file formats,
//!   flow visualisation.
//! * [`sphere`]: sphere <-> plane maps, rotations, analytic rotation flow.
//! * [`augment`]: perspective-to-spherical augmentation with flow
//!   magnitude correction.
//! * [`warp`]: wrap-aware backward warping, occlusion masks, photometric
//!   losses.
//! * [`sphconv`]: row-group interleaved convolution and kernel transform
//!   fitting.
//! * [`eval`]: endpoint-error metrics and structured reports.

pub mod augment;
pub mod eval;
pub mod raster;
pub mod sphconv;
pub mod sphere;
pub mod warp;

pub use augment::{augment_flow, augment_image, correction_profile, CorrectionMode, CorrectionProfile};
pub use eval::{epe, latitude_band_report, wrapped_epe, MetricReport};
pub use raster::{
    flow_to_color, read_flo, read_image, write_flo, write_image, EdgePolicy, FlowField,
    HorizontalEdge, Image, VerticalEdge,
};
pub use sphconv::{
    apply_projection, conv2d, fit_transform, interleaved_conv, rowgroup_partition, FeatureMap,
    FitMethod, FitOptions, FitResult, Kernel, Padding, ProjectionMatrix, ProjectionMatrixSet,
    RowGroupPlan,
};
pub use sphere::{
    equirect_map, forward_map, project_omega, rotate_equirect, rotation_flow,
    textured_sphere_image, SampleMode, SphereRotation, SphericalCoord,
};
pub use warp::{
    backward_warp, brightness_error, motion_mask, occlusion_masks, photometric_loss, DegreeFlow,
    DegreeGrid, OcclusionMask,
};
