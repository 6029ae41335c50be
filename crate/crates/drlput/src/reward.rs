//! The reward family R0–R4.
//!
//! Every variant decomposes into estimated revenue plus estimated user value.
//! Variants differ in which campaigns carry a user-value term and how
//! impression revenue is scaled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::{AdCandidate, CampaignType};

/// User-value coefficients for one campaign type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Coeffs {
    pub const ZERO: Coeffs = Coeffs { alpha: 0.0, beta: 0.0, gamma: 0.0 };
}

/// Engagement probabilities as used in the user-value term; either raw from
/// the ad or min-max normalized over a training batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Engagement {
    pub p_click: f64,
    pub p_click30: f64,
    pub p_conversion: f64,
}

impl From<&AdCandidate> for Engagement {
    fn from(ad: &AdCandidate) -> Self {
        Engagement { p_click: ad.p_click, p_click30: ad.p_click30, p_conversion: ad.p_conversion }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardVariant {
    R0,
    R1,
    R2,
    R3,
    R4,
}

impl std::fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RewardVariant::R0 => "r0",
            RewardVariant::R1 => "r1",
            RewardVariant::R2 => "r2",
            RewardVariant::R3 => "r3",
            RewardVariant::R4 => "r4",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for RewardVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "R0" => Ok(RewardVariant::R0),
            "R1" => Ok(RewardVariant::R1),
            "R2" => Ok(RewardVariant::R2),
            "R3" => Ok(RewardVariant::R3),
            "R4" => Ok(RewardVariant::R4),
            other => Err(Error::Config(format!("unknown reward variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerCampaignCoeffs {
    pub clickthrough: Coeffs,
    pub conversion: Coeffs,
    pub impression: Coeffs,
}

impl PerCampaignCoeffs {
    pub fn get(&self, campaign: CampaignType) -> &Coeffs {
        match campaign {
            CampaignType::ClickThrough => &self.clickthrough,
            CampaignType::Conversion => &self.conversion,
            CampaignType::Impression => &self.impression,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub variant: RewardVariant,
    pub per_campaign: PerCampaignCoeffs,
    /// R3/R4 only: impression campaigns use `impression_revenue_scale * revenue`
    /// and no user-value term.
    pub impression_revenue_scale: f64,
    /// Min-max batch normalization of engagement probabilities before the
    /// user-value term.
    pub normalization: bool,
}

impl RewardConfig {
    pub fn r0() -> RewardConfig {
        RewardConfig {
            variant: RewardVariant::R0,
            per_campaign: PerCampaignCoeffs {
                clickthrough: Coeffs { alpha: 1.0, beta: 0.5, gamma: 0.0 },
                conversion: Coeffs { alpha: 0.1, beta: 0.4, gamma: 0.5 },
                impression: Coeffs::ZERO,
            },
            impression_revenue_scale: 10.0,
            normalization: true,
        }
    }

    /// Revenue only.
    pub fn r1() -> RewardConfig {
        RewardConfig {
            variant: RewardVariant::R1,
            per_campaign: PerCampaignCoeffs {
                clickthrough: Coeffs::ZERO,
                conversion: Coeffs::ZERO,
                impression: Coeffs::ZERO,
            },
            ..RewardConfig::r0()
        }
    }

    /// Click-value coefficients shared across all campaign types.
    pub fn r2() -> RewardConfig {
        let shared = Coeffs { alpha: 1.0, beta: 0.5, gamma: 0.0 };
        RewardConfig {
            variant: RewardVariant::R2,
            per_campaign: PerCampaignCoeffs { clickthrough: shared, conversion: shared, impression: shared },
            ..RewardConfig::r0()
        }
    }

    /// Like R0 but impression campaigns use scaled revenue, no user value.
    pub fn r3() -> RewardConfig {
        RewardConfig { variant: RewardVariant::R3, ..RewardConfig::r0() }
    }

    /// Like R3 but conversion campaigns reward conversions only.
    pub fn r4() -> RewardConfig {
        let mut cfg = RewardConfig::r3();
        cfg.variant = RewardVariant::R4;
        cfg.per_campaign.conversion = Coeffs { alpha: 0.0, beta: 0.0, gamma: 0.5 };
        cfg
    }

    pub fn preset(variant: RewardVariant) -> RewardConfig {
        match variant {
            RewardVariant::R0 => RewardConfig::r0(),
            RewardVariant::R1 => RewardConfig::r1(),
            RewardVariant::R2 => RewardConfig::r2(),
            RewardVariant::R3 => RewardConfig::r3(),
            RewardVariant::R4 => RewardConfig::r4(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, c) in [
            ("clickthrough", &self.per_campaign.clickthrough),
            ("conversion", &self.per_campaign.conversion),
            ("impression", &self.per_campaign.impression),
        ] {
            if c.alpha < 0.0 || c.beta < 0.0 || c.gamma < 0.0 {
                return Err(Error::Config(format!("reward: {name} coefficients must be >= 0")));
            }
        }
        if self.impression_revenue_scale < 0.0 {
            return Err(Error::Config("reward: impression_revenue_scale must be >= 0".into()));
        }
        match self.variant {
            RewardVariant::R1 => {
                let all = [self.per_campaign.clickthrough, self.per_campaign.conversion, self.per_campaign.impression];
                if all.iter().any(|c| *c != Coeffs::ZERO) {
                    return Err(Error::Config("reward: R1 requires all coefficients to be 0".into()));
                }
            }
            RewardVariant::R4 => {
                let c = self.per_campaign.conversion;
                if c.alpha != 0.0 || c.beta != 0.0 {
                    return Err(Error::Config(
                        "reward: R4 requires conversion coefficients of the form <0, 0, gamma>".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A scalar reward with its two components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reward {
    pub value: f64,
    pub estimated_revenue: f64,
    pub estimated_user_value: f64,
}

/// Weighted sum of engagement probabilities: `alpha*p_click + beta*p_click30
/// + gamma*p_conversion`.
pub fn estimated_user_value(probs: &Engagement, coeffs: &Coeffs) -> f64 {
    coeffs.alpha * probs.p_click + coeffs.beta * probs.p_click30 + coeffs.gamma * probs.p_conversion
}

/// Min-max normalization over one batch: `(v - min) / (max - min)`. A
/// constant batch maps to all zeros.
pub fn normalize_batch(values: &[f64]) -> Vec<f64> {
    debug_assert!(!values.is_empty());
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return vec![0.0; values.len()];
    }
    // Endpoints map to 0 and 1 exactly; interior points use a fused
    // multiply-add, which keeps simple decimal inputs exact as well.
    let inv = 1.0 / (max - min);
    let shift = -min * inv;
    values
        .iter()
        .map(|&v| {
            if v == min {
                0.0
            } else if v == max {
                1.0
            } else {
                v.mul_add(inv, shift)
            }
        })
        .collect()
}

/// Computes the reward for one winning ad under a variant config.
///
/// `normalized` carries the batch-normalized engagement probabilities and is
/// required when `config.normalization` is on; with normalization off the
/// ad's raw probabilities are used.
pub fn compute_reward(
    winner: &AdCandidate,
    config: &RewardConfig,
    normalized: Option<&Engagement>,
) -> Result<Reward> {
    let probs = match (config.normalization, normalized) {
        (true, Some(n)) => *n,
        (true, None) => {
            return Err(Error::Config(
                "reward: normalization is on but no normalized probabilities were supplied".into(),
            ))
        }
        (false, _) => Engagement::from(winner),
    };
    let rev = winner.estimated_revenue();
    let (revenue, user_value) = match config.variant {
        RewardVariant::R1 => (rev, 0.0),
        RewardVariant::R0 | RewardVariant::R2 => {
            (rev, estimated_user_value(&probs, config.per_campaign.get(winner.campaign)))
        }
        RewardVariant::R3 | RewardVariant::R4 => match winner.campaign {
            CampaignType::Impression => (config.impression_revenue_scale * rev, 0.0),
            _ => (rev, estimated_user_value(&probs, config.per_campaign.get(winner.campaign))),
        },
    };
    Ok(Reward { value: revenue + user_value, estimated_revenue: revenue, estimated_user_value: user_value })
}
