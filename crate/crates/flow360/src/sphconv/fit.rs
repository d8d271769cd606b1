//! Fitting per-row-group projection matrices to a shared kernel.
//!
//! Given source inputs, their augmented counterparts, and one source
//! kernel, find per-group matrices `P_r` so that convolving the
//! augmented input with the projected kernels `P_r * kernel` reproduces
//! the reference output on each group's exclusive rows. The objective
//! is quadratic in every `P_r`, so the normal equations give the exact
//! minimizer; gradient descent is kept as an alternative with an
//! automatic step size.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::sphere::{project_omega_planes, SampleMode};

use super::{
    apply_projection, conv2d, ConvError, FeatureMap, Kernel, Padding, ProjectionMatrix,
    ProjectionMatrixSet, RowGroupPlan,
};

/// Diagonal of a group's normal matrix at or below this marks the group
/// as having no usable signal (all-zero patches).
const DEGENERATE_DIAG: f64 = 1e-12;

/// Consecutive loss increases beyond the tolerance before gradient
/// descent gives up.
const DIVERGENCE_STREAK: usize = 5;

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Conv(#[from] ConvError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty training batch")]
    EmptyBatch,
    #[error("gradient descent diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("normal equations are singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMethod {
    /// Solve the per-group normal equations directly.
    #[default]
    LeastSquares,
    /// Fixed-step gradient descent on the same objective.
    GradientDescent,
}

/// How augmented inputs correspond to source inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Correspondence {
    /// Augmented inputs share the source pixel grid; the reference
    /// output is the source convolution itself.
    #[default]
    Identity,
    /// Augmented inputs went through the forward sphere-to-plane
    /// vertical remap, so the reference is the source convolution
    /// pushed through the same remap. Requires 2:1 rasters.
    Projection,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub method: FitMethod,
    pub correspondence: Correspondence,
    pub padding: Padding,
    /// Spatial size of the projected kernels; `None` keeps the source
    /// kernel's size. Both dims must be odd.
    pub target_size: Option<(usize, usize)>,
    /// Tikhonov weight added to the normal-equation diagonal.
    pub ridge: f64,
    /// Gradient-descent iteration count.
    pub iterations: usize,
    /// Gradient-descent step; `None` uses `1/L` with `L` estimated by
    /// power iteration on the normal matrices.
    pub step: Option<f64>,
    /// Loss increase tolerated per iteration before it counts toward
    /// divergence.
    pub divergence_tol: f64,
}

impl Default for FitOptions {
    fn default() -> FitOptions {
        FitOptions {
            method: FitMethod::LeastSquares,
            correspondence: Correspondence::Identity,
            padding: Padding::HorizontalWrap,
            target_size: None,
            ridge: 1e-8,
            iterations: 200,
            step: None,
            divergence_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub projections: ProjectionMatrixSet,
    /// Source kernel pushed through each fitted projection.
    pub kernels: Vec<Kernel>,
    /// Loss per gradient-descent iteration (index 0 is the starting
    /// loss); a single entry for the direct solve.
    pub loss_trace: Vec<f64>,
    pub final_loss: f64,
    /// Some group saw no input signal; its matrix is the ridge solution
    /// of an all-zero system.
    pub degenerate: bool,
}

/// Per-group quadratic form: loss_r(p) = p'Gp - 2c'p + bb.
struct GroupSystem {
    g: DMatrix<f64>,
    c: DVector<f64>,
    bb: f64,
}

fn validate_batch(
    x_src: &[FeatureMap],
    x_aug: &[FeatureMap],
    kernel: &Kernel,
    plan: &RowGroupPlan,
    correspondence: Correspondence,
) -> Result<(), FitError> {
    if x_src.is_empty() {
        return Err(FitError::EmptyBatch);
    }
    if x_src.len() != x_aug.len() {
        return Err(FitError::ShapeMismatch(format!(
            "{} source maps vs {} augmented maps",
            x_src.len(),
            x_aug.len()
        )));
    }
    let (h, w, c) = (x_src[0].height(), x_src[0].width(), x_src[0].channels());
    for x in x_src.iter().chain(x_aug.iter()) {
        if (x.height(), x.width(), x.channels()) != (h, w, c) {
            return Err(FitError::ShapeMismatch(format!(
                "batch shapes differ: {}x{}x{} vs {h}x{w}x{c}",
                x.height(),
                x.width(),
                x.channels()
            )));
        }
    }
    if kernel.c_in() != c {
        return Err(FitError::ShapeMismatch(format!(
            "kernel expects {} input channels, batch has {c}",
            kernel.c_in()
        )));
    }
    if plan.height() != h {
        return Err(FitError::ShapeMismatch(format!(
            "plan height {} vs batch height {h}",
            plan.height()
        )));
    }
    if correspondence == Correspondence::Projection && w != 2 * h {
        return Err(FitError::ShapeMismatch(format!(
            "vertical remap correspondence needs 2:1 rasters, got {h}x{w}"
        )));
    }
    Ok(())
}

fn target_dims(kernel: &Kernel, opts: &FitOptions) -> Result<(usize, usize), FitError> {
    let (t_h, t_w) = opts
        .target_size
        .unwrap_or((kernel.kernel_height(), kernel.kernel_width()));
    if t_h % 2 == 0 || t_w % 2 == 0 || t_h == 0 || t_w == 0 {
        return Err(FitError::Conv(ConvError::EvenKernel {
            kernel_height: t_h,
            kernel_width: t_w,
        }));
    }
    Ok((t_h, t_w))
}

/// Reference output the projected kernels must reproduce.
fn reference_map(
    src: &FeatureMap,
    kernel: &Kernel,
    padding: Padding,
    correspondence: Correspondence,
) -> Result<FeatureMap, FitError> {
    let y = conv2d(src, kernel, padding)?;
    match correspondence {
        Correspondence::Identity => Ok(y),
        Correspondence::Projection => {
            let data = project_omega_planes(
                y.data(),
                y.height(),
                y.width(),
                y.channels(),
                SampleMode::Bilinear,
                false,
            );
            Ok(FeatureMap::from_data(y.height(), y.width(), y.channels(), data)?)
        }
    }
}

/// Augmented-input patch around `(row, col)`, one flattened `t`-tap
/// window per input channel, padded exactly like the convolution.
fn fill_patches(
    x: &FeatureMap,
    row: usize,
    col: usize,
    t_h: usize,
    t_w: usize,
    padding: Padding,
    out: &mut [f64],
) {
    let t = t_h * t_w;
    let pad_h = (t_h / 2) as i64;
    let pad_w = (t_w / 2) as i64;
    for dy in 0..t_h {
        let sy = row as i64 + dy as i64 - pad_h;
        for dx in 0..t_w {
            let sx = col as i64 + dx as i64 - pad_w;
            let q = dy * t_w + dx;
            for ci in 0..x.channels() {
                out[ci * t + q] = super::fetch_padded(x, sy, sx, ci, padding);
            }
        }
    }
}

/// Accumulate each group's normal equations over the batch.
///
/// With `phi(p, co)[q, m] = sum_ci patch_ci(p)[q] * kernel[m, ci, co]`,
/// the model output is `<P, phi>` and the residual objective expands to
/// `p'Gp - 2c'p + bb` with
/// `G = sum_{ci,cj} C_{ci,cj} (x) S_{ci,cj}` (Kronecker product of
/// patch and kernel Gram matrices) and `c = sum_ci B_ci` flattened.
fn assemble_systems(
    x_aug: &[FeatureMap],
    refs: &[FeatureMap],
    kernel: &Kernel,
    plan: &RowGroupPlan,
    padding: Padding,
    t_h: usize,
    t_w: usize,
) -> Vec<GroupSystem> {
    let t = t_h * t_w;
    let s = kernel.kernel_height() * kernel.kernel_width();
    let cc = kernel.c_in();
    let c_out = kernel.c_out();
    let kdata = kernel.data();
    let sigma = |m: usize, ci: usize, co: usize| kdata[(m * cc + ci) * c_out + co] as f64;

    // Kernel Gram matrices, shared by every group.
    let mut smats = vec![DMatrix::<f64>::zeros(s, s); cc * cc];
    for ci in 0..cc {
        for cj in 0..cc {
            let smat = &mut smats[ci * cc + cj];
            for m in 0..s {
                for m2 in 0..s {
                    let mut acc = 0.0;
                    for co in 0..c_out {
                        acc += sigma(m, ci, co) * sigma(m2, cj, co);
                    }
                    smat[(m, m2)] = acc;
                }
            }
        }
    }

    let width = x_aug[0].width();
    let mut systems = Vec::with_capacity(plan.group_count());
    let mut patch = vec![0.0f64; cc * t];
    let mut wvec = vec![0.0f64; s];
    for group in 0..plan.group_count() {
        let rows = plan.exclusive_range(group);
        let mut cmats = vec![DMatrix::<f64>::zeros(t, t); cc * cc];
        let mut bmats = vec![DMatrix::<f64>::zeros(t, s); cc];
        let mut bb = 0.0f64;
        for (aug, y) in x_aug.iter().zip(refs) {
            for row in rows.clone() {
                for col in 0..width {
                    fill_patches(aug, row, col, t_h, t_w, padding, &mut patch);
                    for co in 0..c_out {
                        let yv = y.get(row, col, co) as f64;
                        bb += yv * yv;
                    }
                    for ci in 0..cc {
                        for cj in 0..cc {
                            let cmat = &mut cmats[ci * cc + cj];
                            for q in 0..t {
                                let a = patch[ci * t + q];
                                if a == 0.0 {
                                    continue;
                                }
                                for q2 in 0..t {
                                    cmat[(q, q2)] += a * patch[cj * t + q2];
                                }
                            }
                        }
                    }
                    for ci in 0..cc {
                        for (m, slot) in wvec.iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for co in 0..c_out {
                                acc += y.get(row, col, co) as f64 * sigma(m, ci, co);
                            }
                            *slot = acc;
                        }
                        let bmat = &mut bmats[ci];
                        for q in 0..t {
                            let a = patch[ci * t + q];
                            if a == 0.0 {
                                continue;
                            }
                            for (m, &wm) in wvec.iter().enumerate() {
                                bmat[(q, m)] += a * wm;
                            }
                        }
                    }
                }
            }
        }
        let mut g = DMatrix::<f64>::zeros(t * s, t * s);
        for ci in 0..cc {
            for cj in 0..cc {
                let cmat = &cmats[ci * cc + cj];
                let smat = &smats[ci * cc + cj];
                for q in 0..t {
                    for q2 in 0..t {
                        let cqq = cmat[(q, q2)];
                        if cqq == 0.0 {
                            continue;
                        }
                        for m in 0..s {
                            for m2 in 0..s {
                                g[(q * s + m, q2 * s + m2)] += cqq * smat[(m, m2)];
                            }
                        }
                    }
                }
            }
        }
        let mut c = DVector::<f64>::zeros(t * s);
        for bmat in &bmats {
            for q in 0..t {
                for m in 0..s {
                    c[q * s + m] += bmat[(q, m)];
                }
            }
        }
        systems.push(GroupSystem { g, c, bb });
    }
    systems
}

fn quadratic_loss(systems: &[GroupSystem], ps: &[DVector<f64>]) -> f64 {
    let total: f64 = systems
        .iter()
        .zip(ps)
        .map(|(sys, p)| {
            let quad = (p.transpose() * &sys.g * p)[(0, 0)];
            (quad - 2.0 * sys.c.dot(p) + sys.bb).max(0.0)
        })
        .sum();
    total / systems.len() as f64
}

/// Dominant eigenvalue of a symmetric PSD matrix by power iteration.
fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..60 {
        let mv = m * &v;
        let norm = mv.norm();
        if norm <= 1e-300 {
            return 0.0;
        }
        v = mv / norm;
        lambda = (v.transpose() * m * &v)[(0, 0)];
    }
    lambda
}

fn build_result(
    ps: Vec<DVector<f64>>,
    kernel: &Kernel,
    t_h: usize,
    t_w: usize,
    loss_trace: Vec<f64>,
    degenerate: bool,
) -> Result<FitResult, FitError> {
    let groups = ps
        .into_iter()
        .map(|p| {
            ProjectionMatrix::from_data(
                t_h,
                t_w,
                kernel.kernel_height(),
                kernel.kernel_width(),
                p.iter().map(|&v| v as f32).collect(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let projections = ProjectionMatrixSet { groups };
    let kernels = apply_projection(&projections, kernel)?;
    let final_loss = *loss_trace.last().expect("non-empty trace");
    Ok(FitResult {
        projections,
        kernels,
        loss_trace,
        final_loss,
        degenerate,
    })
}

/// Fit one projection matrix per row group.
pub fn fit_transform(
    x_src: &[FeatureMap],
    x_aug: &[FeatureMap],
    kernel: &Kernel,
    plan: &RowGroupPlan,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    validate_batch(x_src, x_aug, kernel, plan, opts.correspondence)?;
    let (t_h, t_w) = target_dims(kernel, opts)?;
    let refs = x_src
        .iter()
        .map(|src| reference_map(src, kernel, opts.padding, opts.correspondence))
        .collect::<Result<Vec<_>, _>>()?;
    let systems = assemble_systems(x_aug, &refs, kernel, plan, opts.padding, t_h, t_w);
    let degenerate = systems
        .iter()
        .any(|sys| sys.g.diagonal().amax() <= DEGENERATE_DIAG);
    let size = t_h * t_w * kernel.kernel_height() * kernel.kernel_width();
    match opts.method {
        FitMethod::LeastSquares => {
            let mut ps = Vec::with_capacity(systems.len());
            for sys in &systems {
                let mut a = sys.g.clone();
                for i in 0..size {
                    a[(i, i)] += opts.ridge;
                }
                let solved = match a.clone().cholesky() {
                    Some(ch) => Some(ch.solve(&sys.c)),
                    None => a.lu().solve(&sys.c),
                };
                ps.push(solved.ok_or(FitError::Singular)?);
            }
            let final_loss = quadratic_loss(&systems, &ps);
            build_result(ps, kernel, t_h, t_w, vec![final_loss], degenerate)
        }
        FitMethod::GradientDescent => {
            let group_count = systems.len() as f64;
            let mut ps: Vec<DVector<f64>> =
                systems.iter().map(|_| DVector::zeros(size)).collect();
            let step = match opts.step {
                Some(step) => step,
                None => {
                    let lmax = systems
                        .iter()
                        .map(|sys| max_eigenvalue(&sys.g))
                        .fold(0.0f64, f64::max);
                    let lipschitz = 2.0 * lmax / group_count;
                    if lipschitz > 0.0 {
                        1.0 / lipschitz
                    } else {
                        0.0
                    }
                }
            };
            let mut trace = vec![quadratic_loss(&systems, &ps)];
            let mut streak = 0usize;
            for iteration in 1..=opts.iterations {
                for (p, sys) in ps.iter_mut().zip(&systems) {
                    let grad = (&sys.g * &*p - &sys.c) * (2.0 / group_count);
                    p.axpy(-step, &grad, 1.0);
                }
                let loss = quadratic_loss(&systems, &ps);
                if loss > *trace.last().expect("non-empty") + opts.divergence_tol {
                    streak += 1;
                    if streak >= DIVERGENCE_STREAK {
                        return Err(FitError::Diverged { iteration });
                    }
                } else {
                    streak = 0;
                }
                trace.push(loss);
            }
            build_result(ps, kernel, t_h, t_w, trace, degenerate)
        }
    }
}

fn validate_set(
    set: &ProjectionMatrixSet,
    kernel: &Kernel,
    plan: &RowGroupPlan,
) -> Result<(usize, usize), FitError> {
    if set.groups.len() != plan.group_count() {
        return Err(FitError::ShapeMismatch(format!(
            "{} projection matrices for {} groups",
            set.groups.len(),
            plan.group_count()
        )));
    }
    let (t_h, t_w) = (set.groups[0].target_height(), set.groups[0].target_width());
    for p in &set.groups {
        if p.source_height() != kernel.kernel_height() || p.source_width() != kernel.kernel_width()
        {
            return Err(FitError::ShapeMismatch(format!(
                "projection source {}x{} vs kernel {}x{}",
                p.source_height(),
                p.source_width(),
                kernel.kernel_height(),
                kernel.kernel_width()
            )));
        }
        if p.target_height() != t_h || p.target_width() != t_w {
            return Err(FitError::ShapeMismatch(
                "projection target sizes differ between groups".into(),
            ));
        }
    }
    Ok((t_h, t_w))
}

/// Fitting objective at a given projection set, evaluated directly:
/// project the kernel in `f64`, convolve the augmented inputs, and sum
/// squared residuals against the reference over each group's exclusive
/// rows, averaged over groups. Independent of the normal-equation
/// assembly, which makes it a finite-difference probe for the gradient.
pub fn transform_loss(
    x_src: &[FeatureMap],
    x_aug: &[FeatureMap],
    kernel: &Kernel,
    plan: &RowGroupPlan,
    opts: &FitOptions,
    set: &ProjectionMatrixSet,
) -> Result<f64, FitError> {
    validate_batch(x_src, x_aug, kernel, plan, opts.correspondence)?;
    let (t_h, t_w) = validate_set(set, kernel, plan)?;
    let t = t_h * t_w;
    let s = kernel.kernel_height() * kernel.kernel_width();
    let cc = kernel.c_in();
    let c_out = kernel.c_out();
    let kdata = kernel.data();
    let refs = x_src
        .iter()
        .map(|src| reference_map(src, kernel, opts.padding, opts.correspondence))
        .collect::<Result<Vec<_>, _>>()?;
    let width = x_aug[0].width();
    let mut patch = vec![0.0f64; cc * t];
    let mut total = 0.0f64;
    for group in 0..plan.group_count() {
        // kappa[q, ci, co] = sum_m P[q, m] * kernel[m, ci, co], in f64.
        let proj = &set.groups[group];
        let mut kappa = vec![0.0f64; t * cc * c_out];
        for q in 0..t {
            for m in 0..s {
                let pqm = proj.get(q, m) as f64;
                if pqm == 0.0 {
                    continue;
                }
                for ci in 0..cc {
                    for co in 0..c_out {
                        kappa[(q * cc + ci) * c_out + co] +=
                            pqm * kdata[(m * cc + ci) * c_out + co] as f64;
                    }
                }
            }
        }
        for (aug, y) in x_aug.iter().zip(&refs) {
            for row in plan.exclusive_range(group) {
                for col in 0..width {
                    fill_patches(aug, row, col, t_h, t_w, opts.padding, &mut patch);
                    for co in 0..c_out {
                        let mut out = 0.0f64;
                        for q in 0..t {
                            for ci in 0..cc {
                                out += kappa[(q * cc + ci) * c_out + co] * patch[ci * t + q];
                            }
                        }
                        let r = out - y.get(row, col, co) as f64;
                        total += r * r;
                    }
                }
            }
        }
    }
    Ok(total / plan.group_count() as f64)
}

/// Objective value and per-group gradient with respect to each
/// projection matrix (row-major `t*s` layout), from the assembled
/// quadratic form.
pub fn transform_loss_and_gradient(
    x_src: &[FeatureMap],
    x_aug: &[FeatureMap],
    kernel: &Kernel,
    plan: &RowGroupPlan,
    opts: &FitOptions,
    set: &ProjectionMatrixSet,
) -> Result<(f64, Vec<Vec<f64>>), FitError> {
    validate_batch(x_src, x_aug, kernel, plan, opts.correspondence)?;
    let (t_h, t_w) = validate_set(set, kernel, plan)?;
    let refs = x_src
        .iter()
        .map(|src| reference_map(src, kernel, opts.padding, opts.correspondence))
        .collect::<Result<Vec<_>, _>>()?;
    let systems = assemble_systems(x_aug, &refs, kernel, plan, opts.padding, t_h, t_w);
    let group_count = systems.len() as f64;
    let ps: Vec<DVector<f64>> = set
        .groups
        .iter()
        .map(|p| DVector::from_iterator(p.data().len(), p.data().iter().map(|&v| v as f64)))
        .collect();
    let loss = quadratic_loss(&systems, &ps);
    let grads = systems
        .iter()
        .zip(&ps)
        .map(|(sys, p)| {
            let g = (&sys.g * p - &sys.c) * (2.0 / group_count);
            g.iter().copied().collect()
        })
        .collect();
    Ok((loss, grads))
}
