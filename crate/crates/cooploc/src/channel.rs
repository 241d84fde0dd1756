//! RSS path-loss models, shadowing noise, and log-distance parameter fitting.
//!
//! All RSS values are dBm, all distances are meters. Models predict received
//! signal strength as a function of transmitter-receiver distance; higher
//! path-loss exponents mean faster decay. Shadowing is zero-mean Gaussian in
//! the dB domain, so sampled RSS stays Gaussian around the prediction.

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::Deserialize;
use thiserror::Error;

/// Transmit power assumed by the 802.15.4 piecewise model (dBm).
pub const IEEE802154_TX_DBM: f64 = -0.1;
/// Shadowing deviation observed for 802.15.4 hardware (dB).
pub const IEEE802154_SIGMA_DB: f64 = 2.3662;
/// Breakpoint of the 802.15.4 piecewise model (m).
pub const IEEE802154_BREAK_M: f64 = 8.0;

/// Intercept of the indoor-calibrated log-distance model (dBm at 1 m).
pub const CALIBRATED_A_DBM: f64 = -37.3420;
/// Path-loss exponent of the indoor-calibrated log-distance model.
pub const CALIBRATED_EXPONENT: f64 = 1.9236;
/// Shadowing deviation of the indoor-calibrated log-distance model (dB).
pub const CALIBRATED_SIGMA_DB: f64 = 3.0130;
/// Range beyond which the indoor calibration stops tracking measurements (m).
pub const CALIBRATED_VALIDITY_M: f64 = 8.1;

const LOG10_E: f64 = std::f64::consts::LOG10_E;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("distance must be positive and finite, got {0}")]
    InvalidDistance(f64),
    #[error("rss must be finite, got {0}")]
    NonFiniteRss(f64),
    #[error("invalid model parameters: {0}")]
    InvalidModel(String),
    #[error("need at least two samples to fit, got {0}")]
    TooFewSamples(usize),
    #[error("all sample distances are identical; slope is unidentifiable")]
    DegenerateDesign,
    #[error("sample {index}: {source}")]
    BadSample {
        index: usize,
        source: Box<ChannelError>,
    },
}

/// Deterministic or sampled RSS value, with a range-validity flag.
///
/// `within_validity` is false only for `LogDistanceClamped` past its fitted
/// range; the value is still computed so callers decide drop-or-keep policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RssValue {
    pub dbm: f64,
    pub within_validity: bool,
}

/// Distance recovered from an RSS value.
///
/// `ambiguous` is true when an 802.15.4 reading falls in the gap of the
/// piecewise model, where neither branch is consistent with its own domain;
/// the near-branch result is returned in that case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeEstimate {
    pub meters: f64,
    pub ambiguous: bool,
}

/// One calibration observation, as read from a `distance_m,rss_dbm` CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct RssSample {
    pub distance_m: f64,
    pub rss_dbm: f64,
}

/// Log-distance parameters recovered by [`fit_log_model`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, Deserialize)]
pub struct FitResult {
    /// Intercept: predicted RSS at 1 m (dBm).
    pub a: f64,
    /// Path-loss exponent (positive for decaying signals).
    pub n: f64,
    /// Sample standard deviation of fit residuals (dB).
    pub sigma: f64,
    pub n_samples: usize,
}

/// Distance-to-RSS model. Predictions decay with distance for positive
/// exponents: `LogDistance` gives `a - 10 n log10(d)`, and `Ieee802154` is
/// piecewise with a deliberate discontinuity at the 8 m breakpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathLossModel {
    /// 802.15.4 reference model: `tx - 40.2 - 20 log10(d)` up to 8 m, then
    /// `tx - 58.5 - 33 log10(d)`.
    Ieee802154 { tx_power_dbm: f64 },
    /// Single-slope log-distance model with shadowing deviation `sigma`.
    LogDistance { a: f64, n: f64, sigma: f64 },
    /// Log-distance model fitted over a bounded range; predictions past
    /// `d_max` are flagged out-of-validity but still computed.
    LogDistanceClamped {
        a: f64,
        n: f64,
        sigma: f64,
        d_max: f64,
    },
}

impl PathLossModel {
    /// 802.15.4 model at its reference transmit power.
    pub fn ieee802154() -> Self {
        PathLossModel::Ieee802154 {
            tx_power_dbm: IEEE802154_TX_DBM,
        }
    }

    /// Indoor-calibrated log-distance model, valid at any range.
    pub fn calibrated_log() -> Self {
        PathLossModel::LogDistance {
            a: CALIBRATED_A_DBM,
            n: CALIBRATED_EXPONENT,
            sigma: CALIBRATED_SIGMA_DB,
        }
    }

    /// Indoor-calibrated log-distance model restricted to its fitted range.
    pub fn calibrated_log_clamped() -> Self {
        PathLossModel::LogDistanceClamped {
            a: CALIBRATED_A_DBM,
            n: CALIBRATED_EXPONENT,
            sigma: CALIBRATED_SIGMA_DB,
            d_max: CALIBRATED_VALIDITY_M,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ChannelError::InvalidModel(format!("{name} must be finite")))
            }
        };
        match *self {
            PathLossModel::Ieee802154 { tx_power_dbm } => finite(tx_power_dbm, "tx_power_dbm"),
            PathLossModel::LogDistance { a, n, sigma } => {
                finite(a, "a")?;
                finite(n, "n")?;
                finite(sigma, "sigma")?;
                if n <= 0.0 {
                    return Err(ChannelError::InvalidModel(format!(
                        "exponent n must be positive, got {n}"
                    )));
                }
                if sigma < 0.0 {
                    return Err(ChannelError::InvalidModel(format!(
                        "sigma must be nonnegative, got {sigma}"
                    )));
                }
                Ok(())
            }
            PathLossModel::LogDistanceClamped { a, n, sigma, d_max } => {
                PathLossModel::LogDistance { a, n, sigma }.validate()?;
                finite(d_max, "d_max")?;
                if d_max <= 0.0 {
                    return Err(ChannelError::InvalidModel(format!(
                        "d_max must be positive, got {d_max}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Shadowing deviation used by [`Self::sample_rss`] (dB).
    pub fn sigma(&self) -> f64 {
        match *self {
            PathLossModel::Ieee802154 { .. } => IEEE802154_SIGMA_DB,
            PathLossModel::LogDistance { sigma, .. } => sigma,
            PathLossModel::LogDistanceClamped { sigma, .. } => sigma,
        }
    }

    /// Noise-free RSS at `distance` meters.
    pub fn predict_rss(&self, distance: f64) -> Result<RssValue, ChannelError> {
        if !(distance.is_finite() && distance > 0.0) {
            return Err(ChannelError::InvalidDistance(distance));
        }
        let (dbm, within_validity) = match *self {
            PathLossModel::Ieee802154 { tx_power_dbm } => {
                let dbm = if distance <= IEEE802154_BREAK_M {
                    tx_power_dbm - 40.2 - 20.0 * distance.log10()
                } else {
                    tx_power_dbm - 58.5 - 33.0 * distance.log10()
                };
                (dbm, true)
            }
            PathLossModel::LogDistance { a, n, .. } => (a - 10.0 * n * distance.log10(), true),
            PathLossModel::LogDistanceClamped { a, n, d_max, .. } => {
                (a - 10.0 * n * distance.log10(), distance <= d_max)
            }
        };
        Ok(RssValue {
            dbm,
            within_validity,
        })
    }

    /// RSS at `distance` with one draw of Gaussian shadowing added.
    pub fn sample_rss<R: Rng + ?Sized>(
        &self,
        distance: f64,
        rng: &mut R,
    ) -> Result<RssValue, ChannelError> {
        let clean = self.predict_rss(distance)?;
        let z: f64 = rng.sample(StandardNormal);
        Ok(RssValue {
            dbm: clean.dbm + self.sigma() * z,
            within_validity: clean.within_validity,
        })
    }

    /// Distance whose prediction equals `rss`.
    ///
    /// For the piecewise 802.15.4 model the branch consistent with its own
    /// domain is used; readings inside the discontinuity gap return the
    /// near-branch inversion flagged ambiguous.
    pub fn invert_rss(&self, rss: f64) -> Result<RangeEstimate, ChannelError> {
        if !rss.is_finite() {
            return Err(ChannelError::NonFiniteRss(rss));
        }
        match *self {
            PathLossModel::Ieee802154 { tx_power_dbm } => {
                let near = 10f64.powf((tx_power_dbm - 40.2 - rss) / 20.0);
                let far = 10f64.powf((tx_power_dbm - 58.5 - rss) / 33.0);
                if near <= IEEE802154_BREAK_M {
                    Ok(RangeEstimate {
                        meters: near,
                        ambiguous: false,
                    })
                } else if far > IEEE802154_BREAK_M {
                    Ok(RangeEstimate {
                        meters: far,
                        ambiguous: false,
                    })
                } else {
                    Ok(RangeEstimate {
                        meters: near,
                        ambiguous: true,
                    })
                }
            }
            PathLossModel::LogDistance { a, n, .. }
            | PathLossModel::LogDistanceClamped { a, n, .. } => Ok(RangeEstimate {
                meters: 10f64.powf((a - rss) / (10.0 * n)),
                ambiguous: false,
            }),
        }
    }

    /// Derivative of predicted RSS with respect to distance (dB per meter).
    /// Negative for positive exponents. The 802.15.4 breakpoint itself uses
    /// the near branch.
    pub fn rss_slope(&self, distance: f64) -> Result<f64, ChannelError> {
        if !(distance.is_finite() && distance > 0.0) {
            return Err(ChannelError::InvalidDistance(distance));
        }
        let n_eff = match *self {
            PathLossModel::Ieee802154 { .. } => {
                if distance <= IEEE802154_BREAK_M {
                    2.0
                } else {
                    3.3
                }
            }
            PathLossModel::LogDistance { n, .. } => n,
            PathLossModel::LogDistanceClamped { n, .. } => n,
        };
        Ok(-10.0 * n_eff * LOG10_E / distance)
    }
}

impl std::fmt::Display for PathLossModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            PathLossModel::Ieee802154 { tx_power_dbm } => {
                write!(f, "ieee802154(tx={tx_power_dbm} dBm)")
            }
            PathLossModel::LogDistance { a, n, sigma } => {
                write!(f, "log_distance(a={a} dBm, n={n}, sigma={sigma} dB)")
            }
            PathLossModel::LogDistanceClamped { a, n, sigma, d_max } => {
                write!(
                    f,
                    "log_distance_clamped(a={a} dBm, n={n}, sigma={sigma} dB, d_max={d_max} m)"
                )
            }
        }
    }
}

/// Difference of two RSS readings taken by different nodes from the same
/// transmitter. The shared intercept cancels, which is what makes the
/// differenced measurement usable without knowing transmit power.
pub fn drss(rss_ij: f64, rss_anchor_j: f64) -> Result<f64, ChannelError> {
    if !rss_ij.is_finite() {
        return Err(ChannelError::NonFiniteRss(rss_ij));
    }
    if !rss_anchor_j.is_finite() {
        return Err(ChannelError::NonFiniteRss(rss_anchor_j));
    }
    Ok(rss_ij - rss_anchor_j)
}

/// Ordinary least squares fit of `rss = a - n * (10 log10 d)` over
/// calibration samples. Returns the intercept, exponent, and the sample
/// standard deviation of the residuals.
pub fn fit_log_model(samples: &[RssSample]) -> Result<FitResult, ChannelError> {
    if samples.len() < 2 {
        return Err(ChannelError::TooFewSamples(samples.len()));
    }
    let mut u = Vec::with_capacity(samples.len());
    for (index, s) in samples.iter().enumerate() {
        let bad = |source: ChannelError| ChannelError::BadSample {
            index,
            source: Box::new(source),
        };
        if !(s.distance_m.is_finite() && s.distance_m > 0.0) {
            return Err(bad(ChannelError::InvalidDistance(s.distance_m)));
        }
        if !s.rss_dbm.is_finite() {
            return Err(bad(ChannelError::NonFiniteRss(s.rss_dbm)));
        }
        u.push(10.0 * s.distance_m.log10());
    }

    let len = samples.len() as f64;
    let u_mean = u.iter().sum::<f64>() / len;
    let y_mean = samples.iter().map(|s| s.rss_dbm).sum::<f64>() / len;
    let mut s_uu = 0.0;
    let mut s_uy = 0.0;
    for (ui, s) in u.iter().zip(samples) {
        s_uu += (ui - u_mean) * (ui - u_mean);
        s_uy += (ui - u_mean) * (s.rss_dbm - y_mean);
    }
    if s_uu < 1e-12 {
        return Err(ChannelError::DegenerateDesign);
    }

    let slope = s_uy / s_uu;
    let a = y_mean - slope * u_mean;
    let n = -slope;

    let ss_res: f64 = u
        .iter()
        .zip(samples)
        .map(|(ui, s)| {
            let r = s.rss_dbm - (a + slope * ui);
            r * r
        })
        .sum();
    let sigma = (ss_res / (len - 1.0)).sqrt();

    Ok(FitResult {
        a,
        n,
        sigma,
        n_samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ieee_matches_hand_values() {
        let m = PathLossModel::ieee802154();
        assert_abs_diff_eq!(m.predict_rss(1.0).unwrap().dbm, -40.3, epsilon = 1e-12);
        assert_abs_diff_eq!(
            m.predict_rss(8.0).unwrap().dbm,
            -58.36179973983887,
            epsilon = 1e-11
        );
        assert_abs_diff_eq!(
            m.predict_rss(8.0001).unwrap().dbm,
            -88.40214871608827,
            epsilon = 1e-11
        );
    }

    #[test]
    fn ieee_breakpoint_jump_is_about_30_db() {
        let m = PathLossModel::ieee802154();
        let near = m.predict_rss(8.0).unwrap().dbm;
        let far = m.predict_rss(8.0 + 1e-9).unwrap().dbm;
        assert_abs_diff_eq!(near - far, 30.04016983089527, epsilon = 1e-6);
    }

    #[test]
    fn log_model_matches_hand_values() {
        let m = PathLossModel::calibrated_log();
        assert_abs_diff_eq!(m.predict_rss(1.0).unwrap().dbm, -37.3420, epsilon = 0.0);
        assert_abs_diff_eq!(m.predict_rss(10.0).unwrap().dbm, -56.578, epsilon = 1e-12);
        assert_abs_diff_eq!(
            m.predict_rss(5.0).unwrap().dbm,
            -50.78738700340766,
            epsilon = 1e-11
        );
    }

    #[test]
    fn clamped_model_flags_but_still_computes() {
        let m = PathLossModel::calibrated_log_clamped();
        let inside = m.predict_rss(8.1).unwrap();
        assert!(inside.within_validity);
        let outside = m.predict_rss(8.1001).unwrap();
        assert!(!outside.within_validity);
        let unclamped = PathLossModel::calibrated_log()
            .predict_rss(8.1001)
            .unwrap();
        assert_eq!(outside.dbm, unclamped.dbm);
    }

    #[test]
    fn invalid_distances_are_rejected() {
        let m = PathLossModel::calibrated_log();
        for d in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                m.predict_rss(d),
                Err(ChannelError::InvalidDistance(_))
            ));
            assert!(m.rss_slope(d).is_err());
        }
    }

    #[test]
    fn invert_matches_hand_value() {
        let m = PathLossModel::LogDistance {
            a: -40.0,
            n: 2.0,
            sigma: 0.0,
        };
        let est = m.invert_rss(-60.0).unwrap();
        assert_abs_diff_eq!(est.meters, 10.0, epsilon = 1e-12);
        assert!(!est.ambiguous);
    }

    #[test]
    fn invert_ieee_picks_consistent_branch() {
        let m = PathLossModel::ieee802154();
        // Near branch: exact reference power at 1 m.
        let near = m.invert_rss(-40.3).unwrap();
        assert_abs_diff_eq!(near.meters, 1.0, epsilon = 1e-12);
        assert!(!near.ambiguous);
        // Far branch: just past the discontinuity.
        let far = m.invert_rss(-90.0).unwrap();
        assert!(far.meters > 8.0 && !far.ambiguous);
        assert_abs_diff_eq!(m.predict_rss(far.meters).unwrap().dbm, -90.0, epsilon = 1e-9);
        // Gap reading: neither branch self-consistent, near result flagged.
        let gap = m.invert_rss(-70.0).unwrap();
        assert!(gap.ambiguous);
        assert_abs_diff_eq!(gap.meters, 30.549211132155132, epsilon = 1e-9);
    }

    #[test]
    fn sample_with_zero_sigma_is_exact() {
        let m = PathLossModel::LogDistance {
            a: -40.0,
            n: 2.0,
            sigma: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = m.sample_rss(3.0, &mut rng).unwrap();
        assert_eq!(s.dbm, m.predict_rss(3.0).unwrap().dbm);
    }

    #[test]
    fn sample_statistics_match_model() {
        let m = PathLossModel::calibrated_log();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let clean = m.predict_rss(5.0).unwrap().dbm;
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| m.sample_rss(5.0, &mut rng).unwrap().dbm)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        assert_abs_diff_eq!(mean, clean, epsilon = 0.05);
        assert_abs_diff_eq!(var.sqrt(), CALIBRATED_SIGMA_DB, epsilon = 0.05);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let m = PathLossModel::ieee802154();
        let once: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..32)
                .map(|_| m.sample_rss(4.0, &mut rng).unwrap().dbm)
                .collect()
        };
        let twice: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..32)
                .map(|_| m.sample_rss(4.0, &mut rng).unwrap().dbm)
                .collect()
        };
        assert_eq!(once, twice);
    }

    #[test]
    fn drss_rejects_non_finite() {
        assert!(drss(f64::NAN, -40.0).is_err());
        assert!(drss(-40.0, f64::INFINITY).is_err());
        assert_eq!(drss(-50.0, -40.0).unwrap(), -10.0);
    }

    #[test]
    fn fit_two_samples_exactly() {
        let samples = [
            RssSample {
                distance_m: 1.0,
                rss_dbm: -40.0,
            },
            RssSample {
                distance_m: 10.0,
                rss_dbm: -60.0,
            },
        ];
        let fit = fit_log_model(&samples).unwrap();
        assert_abs_diff_eq!(fit.a, -40.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.n, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.sigma, 0.0, epsilon = 1e-12);
        assert_eq!(fit.n_samples, 2);
    }

    #[test]
    fn fit_recovers_noiseless_parameters() {
        let model = PathLossModel::LogDistance {
            a: -37.3420,
            n: 1.9236,
            sigma: 0.0,
        };
        let samples: Vec<RssSample> = [1.0, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&d| RssSample {
                distance_m: d,
                rss_dbm: model.predict_rss(d).unwrap().dbm,
            })
            .collect();
        let fit = fit_log_model(&samples).unwrap();
        assert_abs_diff_eq!(fit.a, -37.3420, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.n, 1.9236, epsilon = 1e-9);
        assert!(fit.sigma < 1e-9);
    }

    #[test]
    fn fit_recovers_noisy_parameters_within_band() {
        let model = PathLossModel::calibrated_log();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let samples: Vec<RssSample> = (0..1000)
            .map(|_| {
                let d = rng.random_range(1.0..18.0);
                RssSample {
                    distance_m: d,
                    rss_dbm: model.sample_rss(d, &mut rng).unwrap().dbm,
                }
            })
            .collect();
        let fit = fit_log_model(&samples).unwrap();
        assert_abs_diff_eq!(fit.a, CALIBRATED_A_DBM, epsilon = 1.0);
        assert_abs_diff_eq!(fit.n, CALIBRATED_EXPONENT, epsilon = 0.10);
        assert_abs_diff_eq!(fit.sigma, CALIBRATED_SIGMA_DB, epsilon = 0.15);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(matches!(
            fit_log_model(&[]),
            Err(ChannelError::TooFewSamples(0))
        ));
        let same = [
            RssSample {
                distance_m: 3.0,
                rss_dbm: -50.0,
            },
            RssSample {
                distance_m: 3.0,
                rss_dbm: -51.0,
            },
        ];
        assert!(matches!(
            fit_log_model(&same),
            Err(ChannelError::DegenerateDesign)
        ));
        let bad = [
            RssSample {
                distance_m: 1.0,
                rss_dbm: -40.0,
            },
            RssSample {
                distance_m: -2.0,
                rss_dbm: -50.0,
            },
        ];
        assert!(matches!(
            fit_log_model(&bad),
            Err(ChannelError::BadSample { index: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn prediction_decreases_with_distance(
            a in -60.0..-20.0f64,
            n in 0.5..4.0f64,
            d1 in 0.1..100.0f64,
            scale in 1.01..10.0f64,
        ) {
            let m = PathLossModel::LogDistance { a, n, sigma: 0.0 };
            let r1 = m.predict_rss(d1).unwrap().dbm;
            let r2 = m.predict_rss(d1 * scale).unwrap().dbm;
            prop_assert!(r2 < r1);
        }

        #[test]
        fn ieee_decreases_within_each_branch(
            d1 in 0.1..7.9f64,
            d2 in 8.01..60.0f64,
        ) {
            let m = PathLossModel::ieee802154();
            let near1 = m.predict_rss(d1).unwrap().dbm;
            let near2 = m.predict_rss(d1 + 0.05).unwrap().dbm;
            prop_assert!(near2 < near1);
            let far1 = m.predict_rss(d2).unwrap().dbm;
            let far2 = m.predict_rss(d2 * 1.1).unwrap().dbm;
            prop_assert!(far2 < far1);
        }

        #[test]
        fn invert_round_trips_prediction(
            a in -60.0..-20.0f64,
            n in 0.5..4.0f64,
            d in 0.1..100.0f64,
        ) {
            let m = PathLossModel::LogDistance { a, n, sigma: 1.0 };
            let rss = m.predict_rss(d).unwrap().dbm;
            let back = m.invert_rss(rss).unwrap().meters;
            prop_assert!((back - d).abs() < 1e-9 * d.max(1.0));
        }

        #[test]
        fn drss_cancels_the_intercept(
            a1 in -80.0..-20.0f64,
            a2 in -80.0..-20.0f64,
            n in 0.5..4.0f64,
            d1 in 0.5..50.0f64,
            d2 in 0.5..50.0f64,
        ) {
            let m1 = PathLossModel::LogDistance { a: a1, n, sigma: 0.0 };
            let m2 = PathLossModel::LogDistance { a: a2, n, sigma: 0.0 };
            let delta1 = drss(
                m1.predict_rss(d1).unwrap().dbm,
                m1.predict_rss(d2).unwrap().dbm,
            ).unwrap();
            let delta2 = drss(
                m2.predict_rss(d1).unwrap().dbm,
                m2.predict_rss(d2).unwrap().dbm,
            ).unwrap();
            prop_assert!((delta1 - delta2).abs() < 1e-9);
        }

        #[test]
        fn slope_matches_finite_difference(
            n in 0.5..4.0f64,
            d in 0.5..50.0f64,
        ) {
            let m = PathLossModel::LogDistance { a: -40.0, n, sigma: 0.0 };
            let h = 1e-6 * d.max(1.0);
            let fd = (m.predict_rss(d + h).unwrap().dbm - m.predict_rss(d - h).unwrap().dbm)
                / (2.0 * h);
            let analytic = m.rss_slope(d).unwrap();
            prop_assert!((fd - analytic).abs() < 1e-5 * analytic.abs().max(1e-3));
        }
    }
}
