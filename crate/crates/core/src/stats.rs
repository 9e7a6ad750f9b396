//! Two-sample tests, descriptive statistics and inter-annotator agreement.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Default total sample size up to which Mann-Whitney p-values are exact.
pub const EXACT_CUTOFF: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
    Pearson,
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// First sample stochastically smaller.
    Less,
    Greater,
}

impl std::str::FromStr for Alternative {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-sided" | "two_sided" => Ok(Self::TwoSided),
            "less" => Ok(Self::Less),
            "greater" => Ok(Self::Greater),
            _ => Err(Error::InvalidArgument(format!("unknown alternative '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct MannWhitneyOptions {
    pub alternative: Alternative,
    pub exact_cutoff: usize,
    /// Overrides the cutoff rule when set.
    pub force: Option<Method>,
}

impl Default for MannWhitneyOptions {
    fn default() -> Self {
        Self {
            alternative: Alternative::TwoSided,
            exact_cutoff: EXACT_CUTOFF,
            force: None,
        }
    }
}

/// Midranks (1-based) of the pooled sample, in input order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn check_sample(name: &str, s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidArgument(format!("sample {name} is empty")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sample {name} has non-finite values"
        )));
    }
    Ok(())
}

/// Numeric values of one column of a headed CSV file; blank cells are
/// skipped.
pub fn load_column(path: &std::path::Path, column: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    })?;
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| Error::Validation(format!("{}: no column {column:?}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(idx).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        out.push(cell.parse::<f64>().map_err(|_| {
            Error::Validation(format!("{} row {}: {column} value {cell:?} is not a number", path.display(), i + 2))
        })?);
    }
    Ok(out)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    mann_whitney_u_with(
        a,
        b,
        MannWhitneyOptions {
            alternative,
            ..Default::default()
        },
    )
}

/// U is the statistic of the first sample: pairs (x in a, y in b) with x > y,
/// ties counting one half.
pub fn mann_whitney_u_with(a: &[f64], b: &[f64], opts: MannWhitneyOptions) -> Result<TestResult> {
    check_sample("a", a)?;
    check_sample("b", b)?;
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    let method = match opts.force {
        Some(m @ (Method::Exact | Method::NormalApprox)) => m,
        Some(other) => {
            return Err(Error::InvalidArgument(format!(
                "{other:?} is not a Mann-Whitney method"
            )))
        }
        None if n1 + n2 <= opts.exact_cutoff => Method::Exact,
        None => Method::NormalApprox,
    };
    let p = match method {
        Method::Exact => exact_p(&ranks, n1, u, opts.alternative),
        _ => normal_p(&ranks, n1, n2, u, opts.alternative),
    };
    Ok(TestResult {
        statistic: u,
        p_value: p.clamp(0.0, 1.0),
        method,
        n1,
        n2,
    })
}

/// Null distribution of twice the first-sample rank sum, by dynamic
/// programming over subsets of the pooled midranks. Returns probabilities
/// indexed by doubled rank sum.
fn rank_sum_distribution(ranks: &[f64], n1: usize) -> Vec<f64> {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[k][s]: number of k-subsets with doubled sum s
    let mut ways = vec![vec![0.0f64; max_sum + 1]; n1 + 1];
    ways[0][0] = 1.0;
    for (seen, &d) in doubled.iter().enumerate() {
        for k in (1..=n1.min(seen + 1)).rev() {
            let (lo, hi) = ways.split_at_mut(k);
            let prev = &lo[k - 1];
            let cur = &mut hi[0];
            for s in (d..=max_sum).rev() {
                if prev[s - d] != 0.0 {
                    cur[s] += prev[s - d];
                }
            }
        }
    }
    let total: f64 = ways[n1].iter().sum();
    ways.swap_remove(n1)
        .into_iter()
        .map(|w| w / total)
        .collect()
}

fn exact_p(ranks: &[f64], n1: usize, u: f64, alt: Alternative) -> f64 {
    let dist = rank_sum_distribution(ranks, n1);
    let offset = (n1 * (n1 + 1)) as f64; // doubled minimum rank sum
    let obs = 2.0 * u + offset;
    let mut lower = 0.0;
    let mut upper = 0.0;
    for (s, &p) in dist.iter().enumerate() {
        let s = s as f64;
        if s <= obs + 1e-9 {
            lower += p;
        }
        if s >= obs - 1e-9 {
            upper += p;
        }
    }
    match alt {
        Alternative::Less => lower,
        Alternative::Greater => upper,
        Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
    }
}

fn normal_p(ranks: &[f64], n1: usize, n2: usize, u: f64, alt: Alternative) -> f64 {
    let n = (n1 + n2) as f64;
    let mean = (n1 * n2) as f64 / 2.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        // every value tied: no evidence either way
        return 1.0;
    }
    let sd = var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    match alt {
        Alternative::Less => std_normal.cdf((u - mean + 0.5) / sd),
        Alternative::Greater => std_normal.sf((u - mean - 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((u - mean).abs() - 0.5).max(0.0) / sd;
            (2.0 * std_normal.sf(z)).min(1.0)
        }
    }
}

/// Pearson chi-square on a 2x2 table, no continuity correction.
pub fn chi_square_2x2(table: [[f64; 2]; 2]) -> Result<TestResult> {
    if table.iter().flatten().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(Error::InvalidArgument(
            "cell counts must be finite and non-negative".into(),
        ));
    }
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let total = rows[0] + rows[1];
    let mut x2 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            let expected = rows[r] * cols[c] / total;
            if !(expected > 0.0) {
                return Err(Error::DegenerateTable(format!(
                    "expected count for cell ({r},{c}) is zero"
                )));
            }
            x2 += (table[r][c] - expected).powi(2) / expected;
        }
    }
    let p = ChiSquared::new(1.0).expect("df 1").sf(x2);
    Ok(TestResult {
        statistic: x2,
        p_value: p.clamp(0.0, 1.0),
        method: Method::Pearson,
        n1: rows[0] as usize,
        n2: rows[1] as usize,
    })
}

fn mean_var(s: &[f64]) -> (f64, f64) {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    check_sample("a", a)?;
    check_sample("b", b)?;
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(
            "each sample needs at least two values".into(),
        ));
    }
    let (m1, v1) = mean_var(a);
    let (m2, v2) = mean_var(b);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let se2 = v1 / n1 + v2 / n2;
    if se2 <= 0.0 {
        return Err(Error::ZeroVariance("both samples are constant".into()));
    }
    let t = (m1 - m2) / se2.sqrt();
    let df = se2 * se2 / ((v1 / n1).powi(2) / (n1 - 1.0) + (v2 / n2).powi(2) / (n2 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p = 2.0 * dist.sf(t.abs());
    Ok(TestResult {
        statistic: t,
        p_value: p.clamp(0.0, 1.0),
        method: Method::Welch,
        n1: a.len(),
        n2: b.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

pub fn describe(sample: &[f64]) -> Result<Summary> {
    check_sample("sample", sample)?;
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    };
    Ok(Summary {
        n,
        mean: s.iter().sum::<f64>() / n as f64,
        min: s[0],
        max: s[n - 1],
        median,
    })
}

/// Cohen's kappa. When chance agreement is 1 (both coders constant on the
/// same label) kappa is defined as 1.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "label sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("no labels".into()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let mut ma: HashMap<&T, f64> = HashMap::new();
    let mut mb: HashMap<&T, f64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1.0;
        *mb.entry(y).or_default() += 1.0;
    }
    let po = agree / n;
    let pe: f64 = ma
        .iter()
        .map(|(k, ca)| ca * mb.get(k).copied().unwrap_or(0.0))
        .sum::<f64>()
        / (n * n);
    if (1.0 - pe).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Score of a single item: 1 if two coders gave identical label sets,
/// otherwise the number of labels chosen by two or more coders divided by
/// `possible_values`.
pub fn item_agreement<L: Ord>(coders: &[BTreeSet<L>], possible_values: usize) -> f64 {
    for i in 0..coders.len() {
        for j in i + 1..coders.len() {
            if coders[i] == coders[j] {
                return 1.0;
            }
        }
    }
    let mut counts: std::collections::BTreeMap<&L, usize> = Default::default();
    for set in coders {
        for l in set {
            *counts.entry(l).or_default() += 1;
        }
    }
    let shared = counts.values().filter(|&&c| c >= 2).count();
    (shared as f64 / possible_values as f64).min(1.0)
}

/// Mean item score over an items x coders matrix of label sets.
pub fn multi_coder_agreement<L: Ord>(
    items: &[Vec<BTreeSet<L>>],
    possible_values: usize,
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("no items".into()));
    }
    if possible_values == 0 {
        return Err(Error::InvalidArgument(
            "possible_values must be positive".into(),
        ));
    }
    if let Some(i) = items.iter().position(|c| c.len() < 2) {
        return Err(Error::InvalidArgument(format!(
            "item {i} has fewer than two coders"
        )));
    }
    let total: f64 = items
        .iter()
        .map(|c| item_agreement(c, possible_values))
        .sum();
    Ok(total / items.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn separated_pair_one_sided() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0], Alternative::Less).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.method, Method::Exact);
        assert_abs_diff_eq!(r.p_value, 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_samples_two_sided_p_is_one() {
        let a = [1.0, 2.0, 2.0, 5.0];
        let r = mann_whitney_u(&a, &a, Alternative::TwoSided).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(matches!(
            mann_whitney_u(&[], &[1.0], Alternative::TwoSided),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn chi_square_hand_case() {
        let r = chi_square_2x2([[10.0, 20.0], [20.0, 10.0]]).unwrap();
        assert_abs_diff_eq!(r.statistic, 20.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_value, 0.0098, epsilon = 5e-4);
    }

    #[test]
    fn chi_square_independent_and_degenerate() {
        let r = chi_square_2x2([[5.0, 10.0], [10.0, 20.0]]).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);
        assert!(matches!(
            chi_square_2x2([[0.0, 0.0], [1.0, 1.0]]),
            Err(Error::DegenerateTable(_))
        ));
    }

    #[test]
    fn welch_identical_and_constant() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);
        assert!(matches!(
            welch_t_test(&[4.0, 4.0], &[4.0, 4.0]),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn describe_examples() {
        let s = describe(&[302.0]).unwrap();
        assert_eq!(
            (s.mean, s.min, s.max, s.median),
            (302.0, 302.0, 302.0, 302.0)
        );
        assert_eq!(describe(&[4.0, 1.0, 3.0, 2.0]).unwrap().median, 2.5);
    }

    #[test]
    fn kappa_cases() {
        assert_eq!(
            cohen_kappa(&["a", "b", "a"], &["a", "b", "a"]).unwrap(),
            1.0
        );
        assert_eq!(
            cohen_kappa(&["A", "A", "A", "A"], &["A", "A", "B", "B"]).unwrap(),
            0.0
        );
        assert_eq!(cohen_kappa(&["x", "x"], &["x", "x"]).unwrap(), 1.0);
    }

    #[test]
    fn multi_coder_rule() {
        let set = |ls: &[&'static str]| ls.iter().copied().collect::<BTreeSet<_>>();
        let item = vec![set(&["a", "b"]), set(&["a", "c"])];
        assert_eq!(item_agreement(&item, 4), 0.25);
        let same = vec![vec![set(&["a"]), set(&["a"]), set(&["b"])]];
        assert_eq!(multi_coder_agreement(&same, 4).unwrap(), 1.0);
    }
}
