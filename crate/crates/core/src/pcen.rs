//! Per-channel energy normalization.
//!
//! Each magnitude is divided by an exponential moving average of the
//! preceding frames in its band, then root-compressed:
//!
//! ```text
//! M[t,f]    = s·E[t-1,f] + (1-s)·M[t-1,f],        M[0,f] = E[0,f]
//! PCEN[t,f] = ((E/(ε+M)^α + δ)^r - δ^r) / r
//! ```
//!
//! The `1/r` factor keeps the output finite as `r → 0`, where it becomes
//! `ln(δ + E/(ε+M)^α) - ln δ`. With `(s, ε, α, r) = (1, 0, 1, 0)` and δ = 1 that
//! is the softplus flux `ln(E[t] + E[t-1]) - ln E[t-1]`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::Spectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcenParams {
    /// Smoothing coefficient in (0, 1].
    pub s: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub delta: f64,
    /// Root exponent; 0 selects the logarithmic limit.
    pub r: f64,
}

impl PcenParams {
    /// The logarithmic operating point `(ε, α, δ, r) = (0, 1, 1, 0)`.
    pub fn log_limit(s: f64) -> Self {
        Self {
            s,
            epsilon: 0.0,
            alpha: 1.0,
            delta: 1.0,
            r: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_smoothing(self.s)?;
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("alpha", self.alpha),
            ("delta", self.delta),
            ("r", self.r),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.r == 0.0 && self.delta == 0.0 {
            return Err(Error::config(
                "r = 0 requires delta > 0 (the limit ln(x/δ) is undefined)",
            ));
        }
        Ok(())
    }
}

pub(crate) fn check_smoothing(s: f64) -> Result<()> {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "smoothing coefficient s={s} must lie in (0, 1]"
        )))
    }
}

/// Approximate smoothing coefficient for an averaging time scale of
/// `time_sec` at `frame_rate` frames per second.
///
/// This is one of several conventions in use and does not reproduce every
/// published (s, T) pair; treat `s` as the authoritative parameter.
pub fn s_from_time(time_sec: f64, frame_rate: f64) -> f64 {
    1.0 - (-1.0 / (time_sec * frame_rate)).exp()
}

/// Frame-at-a-time first-order IIR smoother along time, one state per band.
#[derive(Debug, Clone)]
pub struct Smoother {
    s: f64,
    state: Option<(Vec<f64>, Vec<f64>)>,
}

impl Smoother {
    pub fn new(s: f64) -> Result<Self> {
        check_smoothing(s)?;
        Ok(Self { s, state: None })
    }

    /// Feeds frame `E[t]` and returns `M[t]`, which depends on `E[..t]` only
    /// (except at t = 0, where `M[0] = E[0]`).
    pub fn push(&mut self, frame: &[f64]) -> &[f64] {
        match &mut self.state {
            None => {
                self.state = Some((frame.to_vec(), frame.to_vec()));
            }
            Some((m, prev)) => {
                for ((m, p), e) in m.iter_mut().zip(prev.iter_mut()).zip(frame) {
                    *m = self.s * *p + (1.0 - self.s) * *m;
                    *p = *e;
                }
            }
        }
        &self.state.as_ref().expect("state set above").0
    }
}

/// The gain-control matrix `M` of the same shape as its input.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedSpectrogram {
    values: Array2<f64>,
}

impl SmoothedSpectrogram {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

pub fn smooth(e: &Spectrogram, s: f64) -> Result<SmoothedSpectrogram> {
    let mut smoother = Smoother::new(s)?;
    let mut values = Array2::zeros(e.values().raw_dim());
    for (t, row) in e.values().rows().into_iter().enumerate() {
        let m = smoother.push(row.as_slice().expect("standard layout"));
        values.row_mut(t).assign(&ndarray::ArrayView1::from(m));
    }
    Ok(SmoothedSpectrogram { values })
}

/// Entrywise PCEN.
pub fn pcen(e: &Spectrogram, p: &PcenParams) -> Result<Array2<f64>> {
    p.validate()?;
    let m = smooth(e, p.s)?.into_values();
    let mut out = Array2::zeros(e.values().raw_dim());
    for ((t, f), o) in out.indexed_iter_mut() {
        let gain = (p.epsilon + m[[t, f]]).powf(p.alpha);
        if gain == 0.0 {
            return Err(Error::ZeroDivisor { frame: t, band: f });
        }
        *o = compress(e.values()[[t, f]] / gain, p.delta, p.r);
    }
    Ok(out)
}

/// `((x + δ)^r - δ^r) / r`, or `ln(1 + x/δ)` at r = 0.
fn compress(x: f64, delta: f64, r: f64) -> f64 {
    if r == 0.0 {
        (x / delta).ln_1p()
    } else if delta > 0.0 {
        // δ^r·((1 + x/δ)^r - 1)/r, without cancellation for small r
        delta.powf(r) * (r * (x / delta).ln_1p()).exp_m1() / r
    } else {
        x.powf(r) / r
    }
}

/// `ln(E[t] + E[t-1]) - ln E[t-1]` for t ≥ 1; row 0 is zero.
pub fn softplus_flux(e: &Spectrogram) -> Result<Array2<f64>> {
    let v = e.values();
    let mut out = Array2::zeros(v.raw_dim());
    for t in 1..v.nrows() {
        for f in 0..v.ncols() {
            let prev = v[[t - 1, f]];
            if prev <= 0.0 {
                return Err(Error::ZeroDivisor { frame: t, band: f });
            }
            out[[t, f]] = (v[[t, f]] / prev).ln_1p();
        }
    }
    Ok(out)
}
