//! Win rates and rank correlation.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::domain::{EvaluationRecordStore, TaskId, TransferEdge};
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

/// Per-image scores keyed by image id.
pub type ScoreSeries = BTreeMap<String, f64>;

/// Fraction of shared images on which `policy` scores strictly higher than
/// `baseline`.
pub fn win_rate(policy: &ScoreSeries, baseline: &ScoreSeries) -> Result<f64> {
    if policy.is_empty() {
        return Err(Error::EmptyImageSet("win rate".into()));
    }
    if policy.len() != baseline.len() || !policy.keys().all(|k| baseline.contains_key(k)) {
        return Err(Error::ImageSetMismatch {
            target: "win rate".into(),
            edge: "baseline".into(),
        });
    }
    let wins = policy
        .iter()
        .filter(|(image, score)| **score > baseline[*image])
        .count();
    Ok(wins as f64 / policy.len() as f64)
}

/// Baseline scores per target, e.g. networks trained from scratch on the
/// same limited data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BaselineScores {
    pub targets: BTreeMap<TaskId, ScoreSeries>,
}

#[derive(Serialize, Deserialize)]
struct BaselineLine {
    target: String,
    image: String,
    score: f64,
}

impl BaselineScores {
    /// Reads `{"target": .., "image": .., "score": ..}` lines.
    pub fn read_ndjson(reader: impl BufRead, negate: bool) -> Result<Self> {
        let mut targets: BTreeMap<TaskId, ScoreSeries> = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let locator = format!("line {}", i + 1);
            let line = line.map_err(|e| Error::io(&locator, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: BaselineLine = serde_json::from_str(&line).map_err(|e| Error::json(&locator, e))?;
            if !raw.score.is_finite() {
                return Err(Error::NonFiniteScore { locator: Some(locator) });
            }
            let score = if negate { -raw.score } else { raw.score };
            let series = targets.entry(TaskId::new(raw.target)?).or_default();
            if series.insert(raw.image.clone(), score).is_some() {
                return Err(Error::DuplicateRecord {
                    edge: "baseline".into(),
                    image: raw.image,
                    locator: Some(locator),
                });
            }
        }
        Ok(BaselineScores { targets })
    }

    /// Fully supervised scores taken from the self-edges of a record store.
    pub fn fully_supervised(store: &EvaluationRecordStore) -> Self {
        let targets = store
            .targets()
            .filter_map(|(t, _)| {
                store
                    .series(&TransferEdge::self_edge(t.clone()))
                    .map(|s| (t.clone(), s))
            })
            .collect();
        BaselineScores { targets }
    }
}

/// Win rate of each target's chosen transfer against its baseline. Targets
/// without a baseline are left out. Against from-scratch baselines this is
/// the Gain of a policy; against fully supervised ones, its Quality.
pub fn policy_win_rates(
    taxonomy: &Taxonomy,
    store: &EvaluationRecordStore,
    baseline: &BaselineScores,
) -> Result<BTreeMap<TaskId, f64>> {
    let mut out = BTreeMap::new();
    for (target, entry) in &taxonomy.policy {
        let Some(base) = baseline.targets.get(target) else {
            continue;
        };
        let series = store
            .series(&entry.edge)
            .ok_or_else(|| Error::MissingCompetitor(entry.edge.to_string()))?;
        out.insert(target.clone(), win_rate(&series, base)?);
    }
    Ok(out)
}

/// Ranks starting at 1, with tied values sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho between two scorings of the same items: Pearson
/// correlation of average ranks.
pub fn spearman_rho<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> Result<f64> {
    if a.len() != b.len() || !a.keys().all(|k| b.contains_key(k)) {
        return Err(Error::Schema("rankings cover different item sets".into()));
    }
    if a.len() < 2 {
        return Err(Error::Schema("rank correlation needs at least two items".into()));
    }
    let xs: Vec<f64> = a.values().copied().collect();
    let ys: Vec<f64> = a.keys().map(|k| b[k]).collect();
    let rx = average_ranks(&xs);
    let ry = average_ranks(&ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in rx.iter().zip(&ry) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Schema("rank correlation undefined for a constant ranking".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho between two orderings (best first) of the same items.
pub fn spearman_from_orders<K: Ord + Clone>(a: &[K], b: &[K]) -> Result<f64> {
    let ranks = |order: &[K]| -> Result<BTreeMap<K, f64>> {
        let mut m = BTreeMap::new();
        for (i, item) in order.iter().enumerate() {
            if m.insert(item.clone(), i as f64).is_some() {
                return Err(Error::Schema("ranking lists an item twice".into()));
            }
        }
        Ok(m)
    };
    spearman_rho(&ranks(a)?, &ranks(b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> ScoreSeries {
        values.iter().enumerate().map(|(i, v)| (format!("{i:03}"), *v)).collect()
    }

    #[test]
    fn win_rate_counts_strict_wins() {
        let policy = series(&(0..100).map(|i| if i < 88 { 1.0 } else { 0.0 }).collect::<Vec<_>>());
        let baseline = series(&[0.5; 100]);
        assert_eq!(win_rate(&policy, &baseline).unwrap(), 0.88);
        assert_eq!(win_rate(&baseline, &baseline).unwrap(), 0.0);
    }

    #[test]
    fn win_rate_requires_shared_images() {
        let a = series(&[1.0, 2.0]);
        let b = series(&[1.0]);
        assert!(matches!(win_rate(&a, &b), Err(Error::ImageSetMismatch { .. })));
        assert!(win_rate(&ScoreSeries::new(), &ScoreSeries::new()).is_err());
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_extremes() {
        let items = ["a", "b", "c", "d"];
        let rev: Vec<&str> = items.iter().rev().copied().collect();
        assert_eq!(spearman_from_orders(&items, &items).unwrap(), 1.0);
        assert_eq!(spearman_from_orders(&items, &rev).unwrap(), -1.0);
        assert!(spearman_from_orders(&items, &items[..3]).is_err());
    }

    #[test]
    fn baseline_file_parsing() {
        let text = "{\"target\":\"t\",\"image\":\"1\",\"score\":0.5}\n{\"target\":\"t\",\"image\":\"2\",\"score\":0.25}\n";
        let b = BaselineScores::read_ndjson(text.as_bytes(), false).unwrap();
        assert_eq!(b.targets[&TaskId::from("t")].len(), 2);
        let dup = "{\"target\":\"t\",\"image\":\"1\",\"score\":0.5}\n{\"target\":\"t\",\"image\":\"1\",\"score\":0.25}\n";
        assert!(BaselineScores::read_ndjson(dup.as_bytes(), false).is_err());
    }
}
