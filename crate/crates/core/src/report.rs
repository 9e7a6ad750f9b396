//! Per-platform summaries of classifier output and monthly misinformation
//! series, written as CSV plus a self-contained plot description.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::annotate::Label;
use crate::error::{Error, Result};
use crate::ingest::Platform;
use crate::prevalence::pct1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub post_id: String,
    pub platform: Platform,
    pub author_id: String,
    pub created_at: DateTime<Utc>,
    /// Final label after both stages: irrelevant from stage 1, otherwise
    /// stage 2 decides misinformation or security_privacy.
    pub label: Label,
}

impl Prediction {
    pub fn relevant(&self) -> bool {
        self.label != Label::Irrelevant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformRow {
    pub platform: Platform,
    pub posts: u64,
    /// Security/privacy related posts, misinformation included.
    pub relevant: u64,
    pub relevant_pct: f64,
    pub irrelevant: u64,
    pub misinformation: u64,
    /// Share of relevant posts.
    pub misinformation_pct: f64,
    pub misinformation_users: u64,
}

/// One row per platform that has predictions, in platform order.
pub fn platform_summary(predictions: &[Prediction]) -> Vec<PlatformRow> {
    let mut rows = Vec::new();
    for platform in Platform::ALL {
        let ps: Vec<&Prediction> = predictions.iter().filter(|p| p.platform == platform).collect();
        if ps.is_empty() {
            continue;
        }
        let relevant = ps.iter().filter(|p| p.relevant()).count() as u64;
        let misinfo: Vec<&&Prediction> = ps.iter().filter(|p| p.label == Label::Misinformation).collect();
        let users: BTreeSet<&str> = misinfo.iter().map(|p| p.author_id.as_str()).collect();
        let posts = ps.len() as u64;
        rows.push(PlatformRow {
            platform,
            posts,
            relevant,
            relevant_pct: pct1(relevant, posts),
            irrelevant: posts - relevant,
            misinformation: misinfo.len() as u64,
            misinformation_pct: pct1(misinfo.len() as u64, relevant),
            misinformation_users: users.len() as u64,
        });
    }
    rows
}

/// Integer percentage, or one decimal below 1%.
pub fn human_pct(p: f64) -> String {
    if p > 0.0 && p < 1.0 {
        format!("{p:.1}%")
    } else {
        format!("{}%", p.round() as i64)
    }
}

fn thousands(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn summary_csv(rows: &[PlatformRow]) -> String {
    let mut s = String::from(
        "platform,posts,relevant,relevant_pct,irrelevant,misinformation,misinformation_pct,misinformation_users\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.1},{},{},{:.1},{}\n",
            r.platform, r.posts, r.relevant, r.relevant_pct, r.irrelevant, r.misinformation, r.misinformation_pct,
            r.misinformation_users
        ));
    }
    s
}

pub fn summary_table(rows: &[PlatformRow]) -> String {
    let mut s = format!(
        "{:<10} {:>18} {:>10} {:>18} {:>12}\n",
        "Platform", "Security/privacy", "Irrelevant", "Misinformation", "Unique users"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<10} {:>18} {:>10} {:>18} {:>12}\n",
            r.platform.as_str(),
            format!("{} ({})", thousands(r.relevant), human_pct(r.relevant_pct)),
            thousands(r.irrelevant),
            format!("{} ({})", thousands(r.misinformation), human_pct(r.misinformation_pct)),
            thousands(r.misinformation_users),
        ));
    }
    s
}

// ---------------------------------------------------------------------------
// growth series

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Month,
}

impl std::str::FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "month" => Ok(Bucket::Month),
            other => Err(Error::InvalidArgument(format!("unsupported bucket {other:?}; only month"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthPoint {
    pub platform: Platform,
    /// First day of the bucket.
    pub bucket: NaiveDate,
    pub relevant: u64,
    pub misinformation: u64,
    /// None when the bucket has no relevant posts.
    pub pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSeries {
    pub bucket: Bucket,
    pub normalization: String,
    pub markers: Vec<NaiveDate>,
    pub points: Vec<GrowthPoint>,
}

fn month_start(d: NaiveDate) -> NaiveDate {
    NaiveDate::from_ymd_opt(d.year(), d.month(), 1).expect("valid month")
}

fn next_month(d: NaiveDate) -> NaiveDate {
    if d.month() == 12 {
        NaiveDate::from_ymd_opt(d.year() + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(d.year(), d.month() + 1, 1)
    }
    .expect("valid month")
}

/// Percent misinformation among relevant posts per platform and month.
/// Every month between a platform's first and last post gets a point.
pub fn growth_series(predictions: &[Prediction], bucket: Bucket, markers: &[NaiveDate]) -> GrowthSeries {
    let mut points = Vec::new();
    for platform in Platform::ALL {
        let mut per: BTreeMap<NaiveDate, (u64, u64)> = BTreeMap::new();
        for p in predictions.iter().filter(|p| p.platform == platform) {
            let e = per.entry(month_start(p.created_at.date_naive())).or_default();
            if p.relevant() {
                e.0 += 1;
            }
            if p.label == Label::Misinformation {
                e.1 += 1;
            }
        }
        let (Some(&first), Some(&last)) = (per.keys().next(), per.keys().next_back()) else {
            continue;
        };
        let mut m = first;
        while m <= last {
            let (relevant, misinformation) = per.get(&m).copied().unwrap_or_default();
            points.push(GrowthPoint {
                platform,
                bucket: m,
                relevant,
                misinformation,
                pct: (relevant > 0).then(|| pct1(misinformation, relevant)),
            });
            m = next_month(m);
        }
    }
    GrowthSeries {
        bucket,
        normalization: "per_platform: misinformation / relevant posts of that platform in the bucket".into(),
        markers: markers.to_vec(),
        points,
    }
}

impl GrowthSeries {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# normalization: {}\n", self.normalization);
        for m in &self.markers {
            s.push_str(&format!("# marker: {m}\n"));
        }
        s.push_str("platform,month,relevant,misinformation,pct\n");
        for p in &self.points {
            let pct = p.pct.map_or(String::new(), |v| format!("{v:.1}"));
            s.push_str(&format!(
                "{},{},{},{},{pct}\n",
                p.platform,
                p.bucket.format("%Y-%m"),
                p.relevant,
                p.misinformation
            ));
        }
        s
    }

    /// Vega-Lite line chart with the data inlined; null points break the line.
    pub fn plot_spec(&self) -> serde_json::Value {
        let values: Vec<serde_json::Value> = self
            .points
            .iter()
            .map(|p| {
                serde_json::json!({
                    "platform": p.platform.as_str(),
                    "month": p.bucket.format("%Y-%m").to_string(),
                    "pct": p.pct,
                })
            })
            .collect();
        let rules: Vec<serde_json::Value> =
            self.markers.iter().map(|m| serde_json::json!({"date": m.to_string()})).collect();
        serde_json::json!({
            "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
            "title": "Misinformation growth rate",
            "description": self.normalization,
            "markers": self.markers,
            "layer": [
                {
                    "data": {"values": values},
                    "mark": {"type": "line", "point": true},
                    "encoding": {
                        "x": {"field": "month", "type": "temporal", "title": "Month"},
                        "y": {"field": "pct", "type": "quantitative", "title": "% misinformation (per platform)"},
                        "color": {"field": "platform", "type": "nominal"}
                    }
                },
                {
                    "data": {"values": rules},
                    "mark": {"type": "rule", "color": "black"},
                    "encoding": {"x": {"field": "date", "type": "temporal"}}
                }
            ]
        })
    }
}
