//! Angle canonicalization and parsing helpers.
//!
//! Squeeze directions live on a half turn (a covariance ellipse has no
//! orientation), displacement directions on a full turn. Estimation errors
//! for angles are always taken on the wrapped difference.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("invalid angle literal {input:?}: {reason}")]
pub struct AngleParseError {
    pub input: String,
    pub reason: &'static str,
}

/// Wraps an angle into `[0, pi)`.
pub fn wrap_half_turn(a: f64) -> f64 {
    let w = a.rem_euclid(PI);
    // rem_euclid can return the period itself when `a` is a tiny negative.
    if w >= PI {
        w - PI
    } else {
        w
    }
}

/// Wraps an angle into `[0, 2*pi)`.
pub fn wrap_full_turn(a: f64) -> f64 {
    let tau = 2.0 * PI;
    let w = a.rem_euclid(tau);
    if w >= tau {
        w - tau
    } else {
        w
    }
}

/// Signed difference `a - b` wrapped into `(-period/2, period/2]`.
pub fn wrapped_diff(a: f64, b: f64, period: f64) -> f64 {
    let mut d = (a - b).rem_euclid(period);
    if d > period / 2.0 {
        d -= period;
    }
    d
}

/// Parses an angle given either as a float or as a fraction of pi.
///
/// Accepted forms: `0.7`, `1e-3`, `pi`, `-pi`, `pi/4`, `3pi/4`, `0.5pi`,
/// `2pi/3`. Case-insensitive; whitespace around the literal is ignored.
pub fn parse_angle(input: &str) -> Result<f64, AngleParseError> {
    let err = |reason| AngleParseError {
        input: input.to_string(),
        reason,
    };
    let s = input.trim().to_ascii_lowercase();
    if s.is_empty() {
        return Err(err("empty string"));
    }
    let (sign, s) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest.trim_start()),
        None => (1.0, s.as_str()),
    };
    let Some(pi_at) = s.find("pi") else {
        return s
            .parse::<f64>()
            .map(|v| sign * v)
            .map_err(|_| err("not a number"));
    };
    let (coef_str, rest) = (&s[..pi_at], &s[pi_at + 2..]);
    let coef = match coef_str.trim_end_matches('*').trim() {
        "" => 1.0,
        c => c.parse::<f64>().map_err(|_| err("bad pi coefficient"))?,
    };
    let div = match rest.trim() {
        "" => 1.0,
        r => {
            let r = r
                .strip_prefix('/')
                .ok_or(err("expected '/' after pi"))?
                .trim();
            let d = r.parse::<f64>().map_err(|_| err("bad pi divisor"))?;
            if d == 0.0 {
                return Err(err("division by zero"));
            }
            d
        }
    };
    Ok(sign * coef * PI / div)
}

/// Parses a comma-separated list of angle literals.
pub fn parse_angle_list(input: &str) -> Result<Vec<f64>, AngleParseError> {
    input
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse_angle)
        .collect()
}
