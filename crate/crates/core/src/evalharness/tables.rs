use std::io::{self, Write};

use super::{CurvePoint, EvalError, EvalReport, Summary};

pub const TRIALS_HEADER: &str = "policy,condition,seed,trial,k,leg,reward,distance";
pub const SUMMARY_HEADER: &str = "policy,condition,mean_reward,se_reward,mean_distance,se_distance";
pub const CURVE_HEADER: &str = "policy,condition,k,mean_reward,se_reward,mean_distance,se_distance";

pub fn write_trials_csv<W: Write>(reports: &[EvalReport], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIALS_HEADER.split(','))?;
    for r in reports {
        for t in &r.trials {
            w.write_record([
                r.policy.clone(),
                r.condition.name.clone(),
                t.seed.to_string(),
                t.trial.to_string(),
                t.k.to_string(),
                t.leg.to_string(),
                t.reward.to_string(),
                t.distance.to_string(),
            ])?;
        }
    }
    w.flush()
}

pub fn write_summary_csv<'a, W: Write>(summaries: impl IntoIterator<Item = &'a Summary>, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER.split(','))?;
    for s in summaries {
        w.write_record([
            s.policy.clone(),
            s.condition.clone(),
            s.mean_reward.to_string(),
            s.se_reward.to_string(),
            s.mean_distance.to_string(),
            s.se_distance.to_string(),
        ])?;
    }
    w.flush()
}

pub fn write_curve_csv<W: Write>(reports: &[EvalReport], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER.split(','))?;
    for r in reports {
        for p in &r.curve {
            w.write_record([
                r.policy.clone(),
                r.condition.name.clone(),
                p.k.to_string(),
                p.mean_reward.to_string(),
                p.se_reward.to_string(),
                p.mean_distance.to_string(),
                p.se_distance.to_string(),
            ])?;
        }
    }
    w.flush()
}

/// Data records of `text` after checking its header row.
fn records(text: &str, header: &str) -> Result<Vec<(u64, csv::StringRecord)>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| EvalError::Parse(e.to_string()))?;
    if !found.iter().eq(header.split(',')) {
        return Err(EvalError::Parse(format!("expected header {header:?}")));
    }
    let width = header.split(',').count();
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|e| EvalError::Parse(e.to_string()))?;
            let line = r.position().map_or(0, |p| p.line());
            if r.len() != width {
                return Err(EvalError::Parse(format!("line {line}: expected {width} fields, got {}", r.len())));
            }
            Ok((line, r))
        })
        .collect()
}

fn num(line: u64, field: &str) -> Result<f64, EvalError> {
    field
        .parse()
        .map_err(|_| EvalError::Parse(format!("line {line}: cannot parse {field:?}")))
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<Summary>, EvalError> {
    records(text, SUMMARY_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            Ok(Summary {
                policy: f[0].to_string(),
                condition: f[1].to_string(),
                mean_reward: num(line, &f[2])?,
                se_reward: num(line, &f[3])?,
                mean_distance: num(line, &f[4])?,
                se_distance: num(line, &f[5])?,
            })
        })
        .collect()
}

/// `(policy, condition, point)` triples of a sweep file.
pub fn parse_curve_csv(text: &str) -> Result<Vec<(String, String, CurvePoint)>, EvalError> {
    records(text, CURVE_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            Ok((
                f[0].to_string(),
                f[1].to_string(),
                CurvePoint {
                    k: num(line, &f[2])?,
                    mean_reward: num(line, &f[3])?,
                    se_reward: num(line, &f[4])?,
                    mean_distance: num(line, &f[5])?,
                    se_distance: num(line, &f[6])?,
                },
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_round_trip() {
        let s = Summary {
            policy: "acdr_h2e, rerun".into(),
            condition: "broken".into(),
            mean_reward: 412.25,
            se_reward: 3.5,
            mean_distance: 0.75,
            se_distance: 0.0625,
        };
        let mut buf = Vec::new();
        write_summary_csv([&s, &s], &mut buf).unwrap();
        let back = parse_summary_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, vec![s.clone(), s]);
        assert!(parse_summary_csv("nope\n").is_err());
        assert!(parse_summary_csv(&format!("{SUMMARY_HEADER}\na,b,1,2\n")).is_err());
        assert!(parse_summary_csv(&format!("{SUMMARY_HEADER}\na,b,1,2,x,4\n")).is_err());
    }
}
