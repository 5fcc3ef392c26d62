//! Knockoff-augmented importance statistics shared by the simulation study
//! and the real-data commands.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{compute_w, WStatistics};
use crate::forest::{fit_forest, oob_mda_importance, ForestConfig};
use crate::knockoff::{estimate_correlation, KnockoffModel};
use crate::neural::{fit_ard_bnn, group_l2_importance, train_mlp, TrainConfig};
use crate::numerics::{vector_moments, Mat, RngStream, Standardizer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Statistic {
    #[serde(rename = "ARD_L2")]
    ArdL2,
    #[serde(rename = "MLP_L2")]
    MlpL2,
    #[serde(rename = "RF_MDA")]
    RfMda,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Statistic::ArdL2, Statistic::MlpL2, Statistic::RfMda];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::ArdL2 => "ARD_L2",
            Statistic::MlpL2 => "MLP_L2",
            Statistic::RfMda => "RF_MDA",
        }
    }

    /// Stable label for deriving the model-fitting stream.
    pub(crate) fn stream_label(self) -> u64 {
        match self {
            Statistic::ArdL2 => 101,
            Statistic::MlpL2 => 102,
            Statistic::RfMda => 103,
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Statistic::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("statistic", format!("unknown statistic `{s}`")))
    }
}

/// Model settings used when computing any of the statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImportanceSettings {
    pub train: TrainConfig,
    pub forest: ForestConfig,
}

/// Importances of the `2p` columns of the standardized design `[X, X̃]`
/// against the standardized response.
pub fn augmented_importance(
    augmented: &Mat,
    y: &[f64],
    statistic: Statistic,
    settings: &ImportanceSettings,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    let xs = Standardizer::fit(augmented).transform(augmented)?;
    let (mean, sd) = vector_moments(y);
    let ys: Vec<f64> = y.iter().map(|v| (v - mean) / sd).collect();
    let mut model_rng = rng.clone();
    match statistic {
        Statistic::ArdL2 => Ok(fit_ard_bnn(&xs, &ys, &settings.train, &mut model_rng)?.importance()),
        Statistic::MlpL2 => Ok(group_l2_importance(&train_mlp(
            &xs,
            &ys,
            &settings.train,
            &mut model_rng,
        )?)),
        Statistic::RfMda => {
            let forest = fit_forest(&xs, &ys, &settings.forest, &model_rng)?;
            let mda = oob_mda_importance(&forest, &xs, &ys, &model_rng.derive(u64::MAX))?;
            // Z must be nonnegative; a negative MSE increase carries no importance.
            Ok(mda.into_iter().map(|v| v.max(0.0)).collect())
        }
    }
}

/// Fits the statistic on `[X, X̃]` and splits the importances into `W`.
pub fn knockoff_statistics(
    x: &Mat,
    x_knockoff: &Mat,
    y: &[f64],
    statistic: Statistic,
    settings: &ImportanceSettings,
    rng: &RngStream,
) -> Result<WStatistics> {
    if x.shape() != x_knockoff.shape() {
        return Err(Error::dims(format!("{:?}", x.shape()), format!("{:?}", x_knockoff.shape())));
    }
    let p = x.cols();
    let z = augmented_importance(&x.hstack(x_knockoff)?, y, statistic, settings, rng)?;
    compute_w(&z[..p], &z[p..])
}

/// Knockoffs for observed data: columns are standardized, their correlation
/// estimated and ridged if needed, and `X̃` sampled on the standardized
/// scale. Returns `(standardized X, X̃)`.
pub fn empirical_knockoffs(x: &Mat, rng: &mut RngStream) -> Result<(Mat, Mat)> {
    let xs = Standardizer::fit(x).transform(x)?;
    let corr = estimate_correlation(&xs)?;
    let model = KnockoffModel::fit_second_order(&corr)?;
    let xk = model.sample_knockoffs(&xs, rng)?;
    Ok((xs, xk))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistic_names_round_trip() {
        for st in Statistic::ALL {
            assert_eq!(st.name().parse::<Statistic>().unwrap(), st);
            let json = serde_json::to_string(&st).unwrap();
            assert_eq!(json, format!("\"{}\"", st.name()));
        }
        assert!("LASSO".parse::<Statistic>().is_err());
    }
}
