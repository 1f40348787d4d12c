use std::collections::BTreeMap;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureColumn, WeeklyFeatureRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeGroup {
    Year,
    Company,
    Sector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSlope {
    pub group: String,
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SlopeReport {
    pub groups: Vec<GroupSlope>,
    pub positive: usize,
    pub negative: usize,
    /// Groups with fewer than three points or no spread in the predictor.
    pub skipped: Vec<String>,
}

fn group_of(row: &WeeklyFeatureRow, group: SlopeGroup) -> Option<String> {
    match group {
        SlopeGroup::Year => Some(row.week_end.year().to_string()),
        SlopeGroup::Company => Some(row.ticker.clone()),
        SlopeGroup::Sector => row.sector.map(|s| s.to_string()),
    }
}

/// Per-group OLS of next week's return on `x`. Rows missing either value
/// are excluded rather than filled.
pub fn slope_diagnostics(rows: &[WeeklyFeatureRow], x: FeatureColumn, group: SlopeGroup) -> SlopeReport {
    let mut points: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        if let (Some(g), Some(xv), Some(yv)) = (group_of(row, group), row.get(x), row.target) {
            points.entry(g).or_default().push((xv, yv));
        }
    }
    let mut report = SlopeReport::default();
    for (name, pts) in points {
        let n = pts.len();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if n < 3 || sxx <= f64::EPSILON * mx.abs().max(1.0) * n as f64 {
            log::info!("slope group {name} skipped: {n} points, x variance {sxx:e}");
            report.skipped.push(name);
            continue;
        }
        let slope = sxy / sxx;
        if slope > 0.0 {
            report.positive += 1;
        } else if slope < 0.0 {
            report.negative += 1;
        }
        report.groups.push(GroupSlope { group: name, slope, intercept: my - slope * mx, n });
    }
    report
}
