//! Ad candidates and the ranking utility.
//!
//! The utility of an ad is its estimated revenue plus the weighted sum of
//! engagement probabilities, gated by the reserve price: ads whose estimated
//! revenue falls below the reserve score zero and cannot win.

use serde::{Deserialize, Serialize};

use crate::action::UtilityParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum CampaignType {
    #[serde(rename = "clickthrough")]
    ClickThrough,
    Conversion,
    Impression,
}

impl CampaignType {
    pub const ALL: [CampaignType; 3] =
        [CampaignType::ClickThrough, CampaignType::Conversion, CampaignType::Impression];
}

/// One ad in a request: predicted engagement probabilities plus the
/// advertiser's bid for the campaign's optimized action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdCandidate {
    pub ad_id: u64,
    pub campaign: CampaignType,
    pub p_click: f64,
    pub p_click30: f64,
    pub p_conversion: f64,
    pub bid: f64,
}

impl AdCandidate {
    /// Projected revenue from showing this ad: probability of the campaign's
    /// optimized action times the bid (the bid itself for impressions).
    pub fn estimated_revenue(&self) -> f64 {
        match self.campaign {
            CampaignType::ClickThrough => self.p_click * self.bid,
            CampaignType::Conversion => self.p_conversion * self.bid,
            CampaignType::Impression => self.bid,
        }
    }

    /// Predicted probability for an engagement-weight name.
    pub fn engagement_prob(&self, weight_name: &str) -> f64 {
        match weight_name {
            "w_click" => self.p_click,
            "w_click30" => self.p_click30,
            "w_conversion" => self.p_conversion,
            _ => 0.0,
        }
    }
}

/// Ranking utility score. The reserve-price indicator uses `>=`, so an ad
/// exactly at the reserve still passes.
pub fn utility(ad: &AdCandidate, params: &UtilityParams) -> f64 {
    let est_rev = ad.estimated_revenue();
    if est_rev < params.reserve {
        return 0.0;
    }
    let user_value: f64 = params
        .weights
        .iter()
        .map(|(name, w)| ad.engagement_prob(name) * w)
        .sum();
    est_rev + user_value
}

/// Picks the candidate with maximal utility. Ties break to the lowest list
/// position. Returns `None` on an empty list or when every candidate is
/// gated out by the reserve price.
pub fn rank<'a>(candidates: &'a [AdCandidate], params: &UtilityParams) -> Option<&'a AdCandidate> {
    let mut best: Option<(&AdCandidate, f64)> = None;
    for ad in candidates {
        if ad.estimated_revenue() < params.reserve {
            continue;
        }
        let u = utility(ad, params);
        match best {
            Some((_, bu)) if u <= bu => {}
            _ => best = Some((ad, u)),
        }
    }
    best.map(|(ad, _)| ad)
}
