//! Search-space cardinality, architecture statistics and gate-trajectory
//! summaries.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

pub use crate::cost::param_count;
use crate::error::{Error, Result};
use crate::search::GateRecord;
use crate::space::{depth, Connection, DiscreteArchitecture};

/// Which per-stage counting rule to apply.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    /// `Π_{k<L} (2^{2k} - 1) · (2^{2L} - 1)^{N-L}`.
    #[default]
    Literal,
    /// Node-by-node count: every node `k ≥ L` contributes `2^{2L} - 1`,
    /// giving exponent `N - L + 1`.
    Prose,
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Formula::Literal),
            "prose" => Ok(Formula::Prose),
            other => Err(Error::Parse(format!("unknown formula `{other}` (expected literal or prose)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexityReport {
    pub max_len: usize,
    pub stages: Vec<usize>,
    pub formula: Formula,
    pub exact_count: BigUint,
    pub per_stage: Vec<BigUint>,
}

/// A count rounded to a fixed number of significant digits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scientific {
    /// Significant digits without the decimal point, e.g. `"18"` for 1.8.
    pub digits: String,
    pub exponent: usize,
}

impl Scientific {
    pub fn mantissa(&self) -> String {
        let (head, tail) = self.digits.split_at(1);
        if tail.is_empty() {
            head.to_string()
        } else {
            format!("{head}.{tail}")
        }
    }

    /// `1.8e116`.
    pub fn to_e_notation(&self) -> String {
        format!("{}e{}", self.mantissa(), self.exponent)
    }

    /// `1.8×10^116`.
    pub fn to_times_notation(&self) -> String {
        format!("{}×10^{}", self.mantissa(), self.exponent)
    }
}

/// Rounds a positive integer to `sig` significant digits, ties to even.
pub fn round_significant(n: &BigUint, sig: usize) -> Scientific {
    let sig = sig.max(1);
    let s = n.to_str_radix(10);
    if s.len() <= sig {
        return Scientific {
            exponent: s.len() - 1,
            digits: format!("{s:0<sig$}"),
        };
    }
    let (head, rest) = s.split_at(sig);
    let first = rest.as_bytes()[0];
    let tail_zero = rest.bytes().skip(1).all(|b| b == b'0');
    let last_odd = (head.as_bytes()[sig - 1] - b'0') % 2 == 1;
    let up = first > b'5' || (first == b'5' && (!tail_zero || last_odd));
    let mut kept: BigUint = head.parse().expect("decimal digits");
    if up {
        kept += 1u32;
    }
    let mut exponent = s.len() - 1;
    let mut digits = kept.to_str_radix(10);
    if digits.len() > sig {
        digits.truncate(sig);
        exponent += 1;
    }
    Scientific { digits, exponent }
}

impl ComplexityReport {
    pub fn scientific(&self, sig: usize) -> Scientific {
        round_significant(&self.exact_count, sig)
    }

    /// Plain integer up to six digits, else two-significant-digit e-notation.
    pub fn display(&self) -> String {
        let s = self.exact_count.to_str_radix(10);
        if s.len() <= 6 {
            s
        } else {
            self.scientific(2).to_e_notation()
        }
    }
}

fn stage_count(l: usize, n: usize, formula: Formula) -> BigUint {
    let pow4 = |k: usize| -> BigUint { (BigUint::one() << (2 * k)) - 1u32 };
    let mut count = BigUint::one();
    for k in 1..l {
        count *= pow4(k);
    }
    let exponent = match formula {
        Formula::Literal => n - l,
        Formula::Prose => n - l + 1,
    };
    count * pow4(l).pow(exponent as u32)
}

/// Number of architectures in an L-chain space with two operators per edge.
pub fn count_space(max_len: usize, stages: &[usize], formula: Formula) -> Result<ComplexityReport> {
    if max_len == 0 {
        return Err(Error::Domain("L must be at least 1".into()));
    }
    if stages.is_empty() {
        return Err(Error::Domain("at least one stage is required".into()));
    }
    if let Some(&n) = stages.iter().find(|&&n| n < max_len) {
        return Err(Error::Domain(format!("stage with {n} nodes is shorter than L = {max_len}")));
    }
    let per_stage: Vec<BigUint> = stages.iter().map(|&n| stage_count(max_len, n, formula)).collect();
    let exact_count = per_stage.iter().product();
    Ok(ComplexityReport {
        max_len,
        stages: stages.to_vec(),
        formula,
        exact_count,
        per_stage,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub connection: Connection,
    pub final_gate: f64,
    /// 1 is the strongest.
    pub final_rank: usize,
    /// First logged iteration from which the candidate stays rank 1.
    pub dominance_onset: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub candidates: Vec<CandidateSummary>,
    pub iterations: Vec<u64>,
    /// `ranks[step][i]` is the rank of candidate `i` at that step.
    pub ranks: Vec<Vec<usize>>,
}

impl TrajectorySummary {
    pub fn get(&self, c: Connection) -> Option<&CandidateSummary> {
        self.candidates.iter().find(|s| s.connection == c)
    }

    /// `connection,final_gate,final_rank,dominance_onset` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("connection,final_gate,final_rank,dominance_onset\n");
        for s in &self.candidates {
            let onset = s.dominance_onset.map(|o| o.to_string()).unwrap_or_default();
            out.push_str(&format!("\"{}\",{},{},{}\n", s.connection, s.final_gate, s.final_rank, onset));
        }
        out
    }
}

/// Ranks candidates at every logged iteration (ties go to the earlier
/// candidate) and reports final ranks and dominance onsets.
pub fn summarize_trajectories(log: &[GateRecord], candidates: &[Connection]) -> Result<TrajectorySummary> {
    if candidates.is_empty() {
        return Err(Error::Data("no candidates given".into()));
    }
    let mut steps: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for r in log {
        if let Some(i) = candidates.iter().position(|&c| c == r.connection) {
            steps.entry(r.iteration).or_insert_with(|| vec![None; candidates.len()])[i] = Some(r.gate);
        }
    }
    if steps.is_empty() {
        return Err(Error::Data("log holds no values for the candidates".into()));
    }
    let mut iterations = Vec::new();
    let mut ranks = Vec::new();
    let mut last = Vec::new();
    for (it, row) in steps {
        let gates: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(i, g)| g.ok_or_else(|| Error::Data(format!("iteration {it}: no value for {}", candidates[i]))))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..gates.len()).collect();
        order.sort_by(|&a, &b| gates[b].total_cmp(&gates[a]).then(a.cmp(&b)));
        let mut rank = vec![0; gates.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r + 1;
        }
        iterations.push(it);
        ranks.push(rank);
        last = gates;
    }
    let summaries = candidates
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let stays_from = ranks.iter().rposition(|r| r[i] != 1).map_or(0, |p| p + 1);
            CandidateSummary {
                connection: c,
                final_gate: last[i],
                final_rank: ranks.last().expect("non-empty")[i],
                dominance_onset: iterations.get(stays_from).copied(),
            }
        })
        .collect();
    Ok(TrajectorySummary {
        candidates: summaries,
        iterations,
        ranks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthStats {
    pub depths: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation.
    pub spread: f64,
}

pub fn depth_stats(archs: &[DiscreteArchitecture]) -> Result<DepthStats> {
    if archs.is_empty() {
        return Err(Error::Domain("depth statistics need at least one architecture".into()));
    }
    let depths: Vec<usize> = archs.iter().map(depth).collect::<Result<_>>()?;
    let n = depths.len() as f64;
    let mean = depths.iter().sum::<usize>() as f64 / n;
    let spread = (depths.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DepthStats { depths, mean, spread })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(iteration: u64, c: Connection, gate: f64) -> GateRecord {
        GateRecord {
            iteration,
            connection: c,
            gate,
        }
    }

    #[test]
    fn table_values() {
        for (l, want) in [(4, "1.8e116"), (6, "7.5e163"), (8, "1.6e204")] {
            let r = count_space(l, &[18, 20, 18], Formula::Literal).unwrap();
            assert_eq!(r.display(), want);
        }
    }

    #[test]
    fn small_counts_print_plainly() {
        let r = count_space(1, &[2], Formula::Literal).unwrap();
        assert_eq!(r.display(), "3");
        assert_eq!(count_space(1, &[2], Formula::Prose).unwrap().display(), "9");
        assert!(count_space(4, &[3], Formula::Literal).is_err());
    }

    #[test]
    fn rounding_ties_to_even() {
        let r = |n: u64| round_significant(&BigUint::from(n), 2).to_e_notation();
        assert_eq!(r(125), "1.2e2");
        assert_eq!(r(135), "1.4e2");
        assert_eq!(r(1251), "1.3e3");
        assert_eq!(r(995), "1.0e3");
        assert_eq!(r(7), "7.0e0");
    }

    #[test]
    fn constant_series_rank_from_start() {
        let cs = [Connection::new(0, 7, 8), Connection::new(0, 5, 8), Connection::new(0, 2, 8)];
        let mut log = Vec::new();
        for it in 0..5 {
            for (c, g) in cs.iter().zip([0.9, 0.5, 0.1]) {
                log.push(rec(it, *c, g));
            }
        }
        let s = summarize_trajectories(&log, &cs).unwrap();
        assert_eq!(s.candidates[0].final_rank, 1);
        assert_eq!(s.candidates[0].dominance_onset, Some(0));
        assert_eq!(s.candidates[2].final_rank, 3);
        assert_eq!(s.candidates[1].dominance_onset, None);
    }

    #[test]
    fn crossing_sets_onset() {
        let cs = [Connection::new(0, 1, 2), Connection::new(0, 0, 2)];
        let mut log = Vec::new();
        for it in 0..6u64 {
            let a = 0.1 * it as f64;
            log.push(rec(it, cs[0], a));
            log.push(rec(it, cs[1], 0.25));
        }
        // `a` first exceeds 0.25 at iteration 3.
        let s = summarize_trajectories(&log, &cs).unwrap();
        assert_eq!(s.candidates[0].dominance_onset, Some(3));
        log.pop();
        assert!(summarize_trajectories(&log, &cs).is_err());
    }
}
