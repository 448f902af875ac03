//! Lamperti time change between excursions.
//!
//! `forward(e) = h` with `h(∫_0^t e) = e(t)`, and `inverse(e) = h` solving
//! `h(t) = e(∫_0^t h)`. Both are exact for step excursions: a value `v` held
//! for `Δ` becomes `v` held for `v·Δ` (forward) or `Δ/v` (inverse). Affine
//! pieces get exact clock durations with the piece itself replaced by its
//! chord, which keeps breakpoints, values at breakpoints and lifetimes exact.

use thiserror::Error;

use crate::paths::{Excursion, PathBuilder, PathError};

#[derive(Debug, Error, PartialEq)]
pub enum LampertiError {
    #[error("excursion is outside the inverse domain: 1/e is not integrable near t = {at}")]
    NotInDomain { at: f64 },
    #[error(transparent)]
    Path(#[from] PathError),
}

/// `L(e)`. Its lifetime is `∫ e`.
pub fn forward(e: &Excursion) -> Excursion {
    let mut out = PathBuilder::new();
    let mut clock = 0.0;
    for (s, d) in e.live_segments() {
        let dur = d * (s.value + 0.5 * s.slope * d);
        if dur <= 0.0 {
            continue;
        }
        let slope = if s.slope == 0.0 {
            0.0
        } else {
            s.slope * d / dur
        };
        out.push(clock, s.value, slope);
        clock += dur;
    }
    out.push(clock, 0.0, 0.0);
    // A positive lifetime forces some positive value, so `clock > 0`.
    Excursion::new(out.finish(f64::INFINITY)).expect("forward image is an excursion")
}

/// `L⁻¹(e)`, defined when `∫ 1/e < ∞`. Its lifetime is that integral.
pub fn inverse(e: &Excursion) -> Result<Excursion, LampertiError> {
    let mut out = PathBuilder::new();
    let mut clock = 0.0;
    for (s, d) in e.live_segments() {
        let v1 = s.value + s.slope * d;
        if s.value <= 0.0 || v1 <= 0.0 {
            return Err(LampertiError::NotInDomain {
                at: if s.value <= 0.0 { s.start } else { s.start + d },
            });
        }
        let dur = if s.slope == 0.0 {
            d / s.value
        } else {
            (v1 / s.value).ln() / s.slope
        };
        let slope = if s.slope == 0.0 {
            0.0
        } else {
            (v1 - s.value) / dur
        };
        out.push(clock, s.value, slope);
        clock += dur;
    }
    out.push(clock, 0.0, 0.0);
    Ok(Excursion::new(out.finish(f64::INFINITY))?)
}

/// `∫_0^{T_e} 1/e`, or infinity outside the inverse domain.
pub fn reciprocal_integral(e: &Excursion) -> f64 {
    e.live_segments()
        .map(|(s, d)| {
            let v1 = s.value + s.slope * d;
            if s.value <= 0.0 || v1 <= 0.0 {
                f64::INFINITY
            } else if s.slope == 0.0 {
                d / s.value
            } else {
                (v1 / s.value).ln() / s.slope
            }
        })
        .sum()
}
