//! Flow visualisation with the standard 55-entry optical-flow color wheel
//! (hue encodes direction, saturation encodes magnitude, zero flow is
//! white).

use super::{FlowField, Image};

const SEGMENTS: [(usize, [f32; 3], usize); 6] = [
    // (length, base color, ramp channel): each segment ramps one channel
    // between the six primary/secondary hues.
    (15, [255.0, 0.0, 0.0], 1),   // red -> yellow
    (6, [255.0, 255.0, 0.0], 0),  // yellow -> green (ramp down)
    (4, [0.0, 255.0, 0.0], 2),    // green -> cyan
    (11, [0.0, 255.0, 255.0], 1), // cyan -> blue (ramp down)
    (13, [0.0, 0.0, 255.0], 0),   // blue -> magenta
    (6, [255.0, 0.0, 255.0], 2),  // magenta -> red (ramp down)
];

fn color_wheel() -> Vec<[f32; 3]> {
    let mut wheel = Vec::with_capacity(55);
    for &(len, base, ramp) in &SEGMENTS {
        let down = base[ramp] > 0.0;
        for i in 0..len {
            let mut color = base;
            let step = (255 * i / len) as f32;
            color[ramp] = if down { 255.0 - step } else { step };
            wheel.push([color[0] / 255.0, color[1] / 255.0, color[2] / 255.0]);
        }
    }
    wheel
}

fn percentile_99_magnitude(flow: &FlowField) -> f64 {
    let mut mags: Vec<f64> = flow
        .data()
        .chunks_exact(2)
        .map(|uv| ((uv[0] as f64).powi(2) + (uv[1] as f64).powi(2)).sqrt())
        .collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = mags.len();
    let index = ((n as f64 * 0.99).ceil() as usize).clamp(1, n) - 1;
    mags[index]
}

/// Render a flow field as an RGB image.
///
/// `max_magnitude` normalizes saturation; `None` uses the field's 99th
/// percentile magnitude. Magnitudes above the maximum saturate.
pub fn flow_to_color(flow: &FlowField, max_magnitude: Option<f64>) -> Image {
    let wheel = color_wheel();
    let ncols = wheel.len();
    let max = max_magnitude
        .unwrap_or_else(|| percentile_99_magnitude(flow))
        .max(1e-12);
    let mut out = Image::new(flow.height(), flow.width(), 3);
    for i in 0..flow.height() {
        for j in 0..flow.width() {
            let (u, v) = flow.get(i, j);
            let (u, v) = (u as f64, v as f64);
            let rad = ((u * u + v * v).sqrt() / max).min(1.0);
            let angle = (-v).atan2(-u) / std::f64::consts::PI; // (-1, 1]
            let fk = (angle + 1.0) / 2.0 * (ncols - 1) as f64;
            let k0 = (fk.floor() as usize).min(ncols - 1);
            let k1 = (k0 + 1) % ncols;
            let f = fk - k0 as f64;
            for (c, (&a, &b)) in wheel[k0].iter().zip(&wheel[k1]).enumerate() {
                let col = a as f64 + f * (b as f64 - a as f64);
                let col = 1.0 - rad * (1.0 - col);
                out.set(i, j, c, col as f32);
            }
        }
    }
    out
}
