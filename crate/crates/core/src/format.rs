//! Numeric formatting shared by every CSV writer.
//!
//! Reals are written with 17 significant digits in scientific notation, which
//! round-trips every `f64` exactly and is stable across platforms.

use serde::Serializer;

pub fn sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&sig17(*x))
}

pub fn ser_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_str(&sig17(*v)),
        None => s.serialize_str(""),
    }
}
