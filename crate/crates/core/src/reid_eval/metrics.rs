use serde::{Deserialize, Serialize};

/// Cumulative matching characteristic: `rates[r - 1]` is the fraction of
/// queries whose first correct match sits at rank `r` or better.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    pub rates: Vec<f64>,
    /// Queries that contributed (those with at least one correct match).
    pub queries: usize,
}

impl CmcCurve {
    /// Rate at 1-based rank `r`; ranks past the end repeat the last value.
    pub fn rate(&self, r: usize) -> f64 {
        assert!(r >= 1, "ranks start at 1");
        self.rates
            .get(r - 1)
            .or(self.rates.last())
            .copied()
            .unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank,rate\n");
        for (i, r) in self.rates.iter().enumerate() {
            s.push_str(&format!("{},{r}\n", i + 1));
        }
        s
    }
}

/// CMC over per-query relevance flags in ranked order, truncated to
/// `max_rank` (or the longest ranking when `max_rank` is 0). Queries with no
/// relevant entry are dropped with a warning.
pub fn cmc(relevance: &[Vec<bool>], max_rank: usize) -> CmcCurve {
    let longest = relevance.iter().map(Vec::len).max().unwrap_or(0);
    let len = if max_rank == 0 { longest } else { max_rank };
    let mut first_hits = vec![0usize; len];
    let mut queries = 0;
    let mut dropped = 0;
    for flags in relevance {
        match flags.iter().position(|&f| f) {
            Some(p) => {
                queries += 1;
                if p < len {
                    first_hits[p] += 1;
                }
            }
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} queries have no correct match and are left out of the CMC");
    }
    let mut rates = Vec::with_capacity(len);
    let mut acc = 0;
    for h in first_hits {
        acc += h;
        rates.push(if queries == 0 {
            0.0
        } else {
            acc as f64 / queries as f64
        });
    }
    CmcCurve { rates, queries }
}

/// Mean over relevant positions `k` of the precision at `k`; `None` when
/// nothing is relevant.
pub fn average_precision(relevance: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, _) in relevance.iter().enumerate().filter(|(_, &r)| r) {
        hits += 1;
        sum += hits as f64 / (k + 1) as f64;
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Mean of per-query APs; queries without relevant entries are skipped with
/// a warning. Returns the kept APs and their mean (0 when none are kept).
pub fn mean_average_precision(relevance: &[Vec<bool>]) -> (Vec<f64>, f64) {
    let aps: Vec<f64> = relevance
        .iter()
        .filter_map(|r| average_precision(r))
        .collect();
    if aps.len() < relevance.len() {
        log::warn!(
            "{} queries have no relevant gallery entry and are left out of the mAP",
            relevance.len() - aps.len()
        );
    }
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    (aps, map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_query_matched_at_three() {
        let c = cmc(&[vec![false, false, true, false, true]], 0);
        assert_eq!(c.rates, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(c.rate(9), 1.0);
    }

    #[test]
    fn all_first_is_flat_one() {
        let c = cmc(&[vec![true, false], vec![true, true]], 5);
        assert_eq!(c.rates, vec![1.0; 5]);
    }

    #[test]
    fn unmatched_queries_are_dropped() {
        let c = cmc(&[vec![false, true], vec![false, false]], 0);
        assert_eq!(c.queries, 1);
        assert_eq!(c.rates, vec![0.0, 1.0]);
    }

    #[test]
    fn ap_hand_values() {
        let ap = average_precision(&[true, false, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&[true, true, false]), Some(1.0));
        for r in 1..8 {
            let mut flags = vec![false; 8];
            flags[r - 1] = true;
            assert_eq!(average_precision(&flags), Some(1.0 / r as f64));
        }
        assert_eq!(average_precision(&[false, false]), None);
    }

    #[test]
    fn map_skips_empty_queries() {
        let (aps, map) = mean_average_precision(&[vec![true], vec![false], vec![false, true]]);
        assert_eq!(aps, vec![1.0, 0.5]);
        assert_eq!(map, 0.75);
    }

    #[test]
    fn csv_layout() {
        let c = CmcCurve {
            rates: vec![0.5, 1.0],
            queries: 2,
        };
        assert_eq!(c.to_csv(), "rank,rate\n1,0.5\n2,1\n");
    }
}
