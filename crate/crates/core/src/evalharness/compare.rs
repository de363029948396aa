use std::collections::BTreeSet;
use std::io::{self, Write};

use super::{EvalError, Summary};

pub const COMPARISON_HEADER: &str = "condition,policy,mean_reward,se_reward,reward_rank,mean_distance,se_distance,distance_rank";

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub condition: String,
    pub policy: String,
    pub mean_reward: f64,
    pub se_reward: f64,
    pub reward_rank: usize,
    pub mean_distance: f64,
    pub se_distance: f64,
    pub distance_rank: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Competition ranks, highest value first: equal values share a rank and
/// the next distinct value skips ahead (1, 1, 3).
pub fn rank_with_ties(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|&&other| other > *v).count())
        .collect()
}

/// Ranks policies within each condition by mean reward and by distance.
///
/// Every policy must have been evaluated on exactly the same conditions.
pub fn compare(summaries: &[Summary]) -> Result<ComparisonTable, EvalError> {
    let policies: BTreeSet<&str> = summaries.iter().map(|s| s.policy.as_str()).collect();
    if policies.len() < 2 {
        return Err(EvalError::Mismatch("need at least two policies".into()));
    }
    let mut conditions: Vec<&str> = Vec::new();
    for s in summaries {
        if !conditions.contains(&s.condition.as_str()) {
            conditions.push(&s.condition);
        }
    }
    let mut table = ComparisonTable::default();
    for cond in conditions {
        let group: Vec<&Summary> = summaries.iter().filter(|s| s.condition == cond).collect();
        let names: BTreeSet<&str> = group.iter().map(|s| s.policy.as_str()).collect();
        if names != policies || group.len() != policies.len() {
            return Err(EvalError::Mismatch(format!(
                "condition {cond:?} is not covered exactly once by every policy"
            )));
        }
        let rewards: Vec<f64> = group.iter().map(|s| s.mean_reward).collect();
        let distances: Vec<f64> = group.iter().map(|s| s.mean_distance).collect();
        let reward_ranks = rank_with_ties(&rewards);
        let distance_ranks = rank_with_ties(&distances);
        for (i, s) in group.iter().enumerate() {
            table.rows.push(ComparisonRow {
                condition: cond.to_string(),
                policy: s.policy.clone(),
                mean_reward: s.mean_reward,
                se_reward: s.se_reward,
                reward_rank: reward_ranks[i],
                mean_distance: s.mean_distance,
                se_distance: s.se_distance,
                distance_rank: distance_ranks[i],
            });
        }
    }
    Ok(table)
}

impl ComparisonTable {
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COMPARISON_HEADER.split(','))?;
        for r in &self.rows {
            w.write_record([
                r.condition.clone(),
                r.policy.clone(),
                r.mean_reward.to_string(),
                r.se_reward.to_string(),
                r.reward_rank.to_string(),
                r.mean_distance.to_string(),
                r.se_distance.to_string(),
                r.distance_rank.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn conditions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.condition.as_str()) {
                out.push(&r.condition);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(policy: &str, condition: &str, reward: f64, distance: f64) -> Summary {
        Summary {
            policy: policy.into(),
            condition: condition.into(),
            mean_reward: reward,
            se_reward: 0.1,
            mean_distance: distance,
            se_distance: 0.01,
        }
    }

    #[test]
    fn ties_share_a_rank() {
        assert_eq!(rank_with_ties(&[3.0, 5.0, 3.0, 1.0]), vec![2, 1, 2, 4]);
        let table = compare(&[summary("a", "plain", 4.0, 1.0), summary("b", "plain", 4.0, 1.0)]).unwrap();
        assert!(table.rows.iter().all(|r| r.reward_rank == 1 && r.distance_rank == 1));
    }

    #[test]
    fn dominant_policy_ranks_first() {
        let table = compare(&[
            summary("weak", "broken", 10.0, 0.5),
            summary("strong", "broken", 30.0, 0.2),
            summary("weak", "plain", 5.0, 1.0),
            summary("strong", "plain", 6.0, 2.0),
        ])
        .unwrap();
        let row = |c: &str, p: &str| table.rows.iter().find(|r| r.condition == c && r.policy == p).unwrap().clone();
        assert_eq!(row("broken", "strong").reward_rank, 1);
        assert_eq!(row("broken", "weak").distance_rank, 1);
        assert_eq!(table.conditions(), vec!["broken", "plain"]);
    }

    #[test]
    fn mismatched_conditions_are_rejected() {
        assert!(compare(&[summary("a", "plain", 1.0, 1.0)]).is_err());
        assert!(compare(&[summary("a", "plain", 1.0, 1.0), summary("b", "broken", 1.0, 1.0)]).is_err());
    }
}
