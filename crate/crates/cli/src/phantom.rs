//! The bundled 128x128 test image and the recipe that produced it.

use std::f64::consts::TAU;

use tds_core::io::decode_pgm;
use tds_core::{Grid, Result};

pub const SIDE: usize = 128;

static PHANTOM_PGM: &[u8] = include_bytes!("../assets/phantom.pgm");

/// The bundled image, scaled to `[0, 1]`.
pub fn bundled() -> Result<Grid> {
    Ok(decode_pgm(PHANTOM_PGM)?.grid)
}

pub fn bundled_bytes() -> &'static [u8] {
    PHANTOM_PGM
}

fn soft_step(d: f64) -> f64 {
    1.0 / (1.0 + (-(1.0 - d) / 0.03).exp())
}

/// Shaded background, a bright tilted ellipse, a dark disc, a stripe block,
/// a grid of small dots and low-amplitude texture, before 8-bit quantization.
pub fn recipe() -> Grid {
    let (cx, cy, rx, ry, tilt) = (0.55f64, 0.45f64, 0.28f64, 0.16f64, 0.5f64);
    let (ct, st) = (tilt.cos(), tilt.sin());
    Grid::from_fn(SIDE, SIDE, |i, j| {
        let u = (j as f64 + 0.5) / SIDE as f64;
        let v = (i as f64 + 0.5) / SIDE as f64;
        let mut value = 0.25 + 0.30 * u + 0.15 * v;
        let (du, dv) = (u - cx, v - cy);
        let (a, b) = (du * ct + dv * st, -du * st + dv * ct);
        value += 0.35 * soft_step(((a / rx).powi(2) + (b / ry).powi(2)).sqrt());
        let d = ((u - 0.25).powi(2) + (v - 0.75).powi(2)).sqrt() / 0.12;
        value -= 0.20 * soft_step(d);
        if u < 0.4 && v < 0.35 {
            value += 0.084 * (TAU * 10.0 * (u + 0.5 * v)).sin().signum();
        }
        value += 0.028 * (TAU * 9.0 * u + 1.3).sin() * (TAU * 7.0 * v).sin();
        value += 0.021 * (TAU * 17.0 * (0.8 * u + 0.6 * v)).sin();
        for k in 0..5 {
            for l in 0..3 {
                let (px, py) = (0.58 + 0.08 * k as f64, 0.12 + 0.08 * l as f64);
                let r = ((u - px).powi(2) + (v - py).powi(2)).sqrt() / 0.025;
                value += 0.105 / (1.0 + (-(1.0 - r) / 0.05).exp());
            }
        }
        if u > 0.7 && v > 0.7 {
            value += 0.05 * (TAU * 6.0 * u).sin() * (TAU * 6.0 * v).sin();
        }
        value.clamp(0.0, 1.0)
    })
    .expect("recipe values are finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use tds_core::io::encode_pgm;

    #[test]
    fn bundled_asset_matches_recipe() {
        let bytes = encode_pgm(&recipe(), 255, false).unwrap();
        if std::env::var_os("TDS_REGEN_PHANTOM").is_some() {
            std::fs::write(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/phantom.pgm"), &bytes).unwrap();
        }
        assert_eq!(bytes, PHANTOM_PGM);
    }

    #[test]
    fn bundled_image_is_unit_range() {
        let g = bundled().unwrap();
        assert_eq!(g.shape(), (SIDE, SIDE));
        assert!(g.min() >= 0.0 && g.max() <= 1.0);
        assert!(g.max() - g.min() > 0.4);
    }
}
