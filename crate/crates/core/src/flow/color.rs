//! Flow visualization: hue = direction, saturation = magnitude, zero = white.

use image::{Rgb, RgbImage};

use super::{FlowField, FlowSequence};
use crate::scalar::Real;

/// Saturation reference for [`flow_to_color`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxMagnitude<S> {
    /// Largest valid magnitude in the input (1 px if the input is all zero).
    Auto,
    Fixed(S),
}

/// HSV to RGB, `h` in degrees, `s`/`v` in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

fn resolve_max<S: Real>(max: MaxMagnitude<S>, observed: S) -> f64 {
    let m = match max {
        MaxMagnitude::Auto => observed.as_f64(),
        MaxMagnitude::Fixed(m) => m.as_f64(),
    };
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

fn color_field<S: Real>(field: &FlowField<S>, max: f64) -> RgbImage {
    let (w, h) = (field.width() as u32, field.height() as u32);
    RgbImage::from_fn(w, h, |x, y| {
        let i = y as usize * field.width() + x as usize;
        if !field.is_valid_index(i) {
            return Rgb([0, 0, 0]);
        }
        let [u, v] = field.data()[i];
        let (u, v) = (u.as_f64(), v.as_f64());
        let mag = u.hypot(v);
        let sat = (mag / max).min(1.0);
        let hue = v.atan2(u).to_degrees();
        let rgb = hsv_to_rgb(hue, sat, 1.0);
        Rgb(rgb.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8))
    })
}

pub fn flow_to_color<S: Real>(field: &FlowField<S>, max: MaxMagnitude<S>) -> RgbImage {
    color_field(field, resolve_max(max, field.max_magnitude()))
}

/// Colors every frame against one shared saturation reference.
pub fn sequence_to_color<S: Real>(seq: &FlowSequence<S>, max: MaxMagnitude<S>) -> Vec<RgbImage> {
    let m = resolve_max(max, seq.max_magnitude());
    seq.frames().iter().map(|f| color_field(f, m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb_oracle(u: f64, v: f64, max: f64) -> [u8; 3] {
        // Independent sextant-free HSV evaluation.
        let hue = v.atan2(u).to_degrees().rem_euclid(360.0);
        let s = (u.hypot(v) / max).min(1.0);
        let f = |n: f64| {
            let k = (n + hue / 60.0) % 6.0;
            1.0 - s * k.min(4.0 - k).clamp(0.0, 1.0)
        };
        [f(5.0), f(3.0), f(1.0)].map(|c| (c * 255.0).round() as u8)
    }

    #[test]
    fn zero_flow_is_white() {
        let img = flow_to_color(&FlowField::<f64>::zeros(5, 3), MaxMagnitude::Auto);
        assert!(img.pixels().all(|p| p.0 == [255, 255, 255]));
    }

    #[test]
    fn magnitude_clips_at_max() {
        let a = FlowField::<f64>::constant(2, 2, 3.0, 4.0);
        let b = FlowField::<f64>::constant(2, 2, 30.0, 40.0);
        let ca = flow_to_color(&a, MaxMagnitude::Fixed(5.0));
        let cb = flow_to_color(&b, MaxMagnitude::Fixed(5.0));
        assert_eq!(ca, cb);
    }

    #[test]
    fn rotation_shifts_hue_uniformly() {
        let base = FlowField::<f64>::from_fn(9, 7, |x, y| {
            [x as f64 - 4.0 + 0.25, 0.7 * (y as f64 - 3.0) + 0.1]
        })
        .unwrap();
        let theta = 0.9f64;
        let (s, c) = theta.sin_cos();
        let rotated = FlowField::from_fn(9, 7, |x, y| {
            let [u, v] = base.get(x, y);
            [c * u - s * v, s * u + c * v]
        })
        .unwrap();
        let max = 3.0;
        let img = flow_to_color(&rotated, MaxMagnitude::Fixed(max));
        for y in 0..7 {
            for x in 0..9 {
                let [u, v] = base.get(x, y);
                // Direct per-pixel evaluation with the hue advanced by theta.
                let mag = u.hypot(v);
                let ang = v.atan2(u) + theta;
                let want = rgb_oracle(mag * ang.cos(), mag * ang.sin(), max);
                let got = img.get_pixel(x as u32, y as u32).0;
                for k in 0..3 {
                    assert!((got[k] as i32 - want[k] as i32).abs() <= 1, "{x},{y}: {got:?} vs {want:?}");
                }
            }
        }
    }

    #[test]
    fn order_independent_per_pixel() {
        let f = FlowField::<f64>::from_fn(6, 4, |x, y| [x as f64 - 2.0, 1.0 - y as f64]).unwrap();
        let whole = flow_to_color(&f, MaxMagnitude::Fixed(4.0));
        for y in 0..4 {
            for x in 0..6 {
                let [u, v] = f.get(x, y);
                let single = FlowField::constant(1, 1, u, v);
                let one = flow_to_color(&single, MaxMagnitude::Fixed(4.0));
                assert_eq!(one.get_pixel(0, 0), whole.get_pixel(x as u32, y as u32));
            }
        }
    }

    #[test]
    fn invalid_pixels_are_black() {
        let f = FlowField::<f64>::zeros(2, 1).with_mask(vec![true, false]).unwrap();
        let img = flow_to_color(&f, MaxMagnitude::Auto);
        assert_eq!(img.get_pixel(1, 0).0, [0, 0, 0]);
    }
}
