//! Colour coding of flow fields.

use std::f64::consts::PI;

use flowfill_core::{FlowField, ImageBuffer};

/// Hue from the direction of each vector, saturation from its magnitude
/// relative to `max_magnitude` (the field's own maximum when `None`), value
/// fixed at 1. Zero vectors come out white; opposite directions sit half a
/// turn apart on the wheel, so their hues are complementary.
pub fn flow_to_color(flow: &FlowField, max_magnitude: Option<f64>) -> ImageBuffer {
    let (w, h) = flow.dims();
    let scale = max_magnitude.unwrap_or_else(|| flow.max_magnitude());
    let mut data = Vec::with_capacity(w * h * 3);
    for v in flow.vectors() {
        let mag = v[0].hypot(v[1]);
        let sat = if scale > 0.0 { (mag / scale).min(1.0) } else { 0.0 };
        let hue = v[1].atan2(v[0]).rem_euclid(2.0 * PI) / (2.0 * PI) * 6.0;
        data.extend(hsv_to_rgb(hue, sat));
    }
    ImageBuffer::from_vec(w, h, 3, data).expect("colours are in range")
}

/// `hue` in sextants `[0, 6)`, value 1.
fn hsv_to_rgb(hue: f64, sat: f64) -> [f64; 3] {
    let sector = hue.floor();
    let f = hue - sector;
    let (p, q, t) = (1.0 - sat, 1.0 - sat * f, 1.0 - sat * (1.0 - f));
    match sector as u8 % 6 {
        0 => [1.0, t, p],
        1 => [q, 1.0, p],
        2 => [p, 1.0, t],
        3 => [p, q, 1.0],
        4 => [t, p, 1.0],
        _ => [1.0, p, q],
    }
}

/// Hue angle in degrees of an RGB colour, `None` for greys.
pub fn hue_degrees(rgb: &[f64]) -> Option<f64> {
    let (r, g, b) = (rgb[0], rgb[1], rgb[2]);
    let max = r.max(g).max(b);
    let d = max - r.min(g).min(b);
    if d <= 0.0 {
        return None;
    }
    let h = if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    Some(h * 60.0)
}
