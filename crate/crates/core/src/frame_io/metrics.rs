use std::fmt;

use super::{FrameError, FramePlane};

const PEAK: f64 = 255.0;

/// PSNR in decibels. Zero MSE is represented by `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PsnrValue(f64);

impl PsnrValue {
    pub const INFINITE: PsnrValue = PsnrValue(f64::INFINITY);

    pub fn from_mse(mse: f64) -> Self {
        if mse == 0.0 {
            Self::INFINITE
        } else {
            PsnrValue(10.0 * (PEAK * PEAK / mse).log10())
        }
    }

    pub fn from_db(db: f64) -> Self {
        PsnrValue(db)
    }

    pub fn db(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Parses the CSV cell form written by `Display`.
    pub fn parse(s: &str) -> Option<Self> {
        if s == "inf" {
            Some(Self::INFINITE)
        } else {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).map(PsnrValue)
        }
    }
}

/// Four decimals, or the literal `inf`.
impl fmt::Display for PsnrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{:.4}", self.0)
        }
    }
}

fn sse(a: &FramePlane, b: &FramePlane) -> Result<u64, FrameError> {
    if a.dims() != b.dims() {
        return Err(FrameError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    Ok(a.samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum())
}

/// Mean squared error, accumulated exactly in integers.
pub fn mse(a: &FramePlane, b: &FramePlane) -> Result<f64, FrameError> {
    let total = sse(a, b)?;
    Ok(total as f64 / a.samples().len() as f64)
}

pub fn psnr(a: &FramePlane, b: &FramePlane) -> Result<PsnrValue, FrameError> {
    Ok(PsnrValue::from_mse(mse(a, b)?))
}

/// PSNR over the pooled squared error of several plane pairs.
pub fn sequence_psnr<'a>(
    pairs: impl IntoIterator<Item = (&'a FramePlane, &'a FramePlane)>,
) -> Result<PsnrValue, FrameError> {
    let mut total = 0u64;
    let mut count = 0usize;
    for (a, b) in pairs {
        total += sse(a, b)?;
        count += a.samples().len();
    }
    if count == 0 {
        return Ok(PsnrValue::INFINITE);
    }
    Ok(PsnrValue::from_mse(total as f64 / count as f64))
}
