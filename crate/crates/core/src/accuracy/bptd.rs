//! Trace distance over timed events: restricted Damerau-Levenshtein whose
//! substitution and transposition costs account for time differences.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

/// Unordered activity pairs that occur in both directly-follows orders.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcurrencyRelation {
    pairs: BTreeSet<(String, String)>,
}

impl ConcurrencyRelation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `{a, b}`; self-pairs are ignored.
    pub fn insert(&mut self, a: &str, b: &str) {
        if a != b {
            let (x, y) = if a < b { (a, b) } else { (b, a) };
            self.pairs.insert((x.to_string(), y.to_string()));
        }
    }

    pub fn is_parallel(&self, a: &str, b: &str) -> bool {
        let (x, y) = if a < b { (a, b) } else { (b, a) };
        self.pairs.contains(&(x.to_string(), y.to_string()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }
}

/// Event with min-max normalized processing (`p`) and waiting (`w`) time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub label: String,
    pub p: f64,
    pub w: f64,
}

impl TimedEvent {
    pub fn new(label: impl Into<String>, p: f64, w: f64) -> Self {
        Self {
            label: label.into(),
            p,
            w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    /// Same weight on processing time for every event.
    Fixed(f64),
    /// Weight `p / (p + w)` of the first sequence's event, truncated to hundredths.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BptdConfig {
    pub beta: BetaMode,
}

impl Default for BptdConfig {
    fn default() -> Self {
        Self {
            beta: BetaMode::Fixed(0.5),
        }
    }
}

fn beta(mode: BetaMode, e: &TimedEvent) -> f64 {
    match mode {
        BetaMode::Fixed(b) => b,
        BetaMode::Dynamic => {
            let total = e.p + e.w;
            if total == 0.0 {
                0.5
            } else {
                (100.0 * e.p / total + 1e-9).floor() / 100.0
            }
        }
    }
}

fn time_cost(mode: BetaMode, a: &TimedEvent, b: &TimedEvent) -> f64 {
    let beta = beta(mode, a);
    beta * (a.p - b.p).abs() + (1.0 - beta) * (a.w - b.w).abs()
}

/// Distance between two timed sequences. Insertions and deletions cost 1.
/// Matching equal labels costs their time difference; a different label
/// costs 1. Swapping two adjacent events costs 1, or the time differences
/// of both crossings when the labels are parallel and both occur in both
/// sequences.
pub fn bptd(s: &[TimedEvent], t: &[TimedEvent], rel: &ConcurrencyRelation, cfg: &BptdConfig) -> f64 {
    let (n, m) = (s.len(), t.len());
    let in_s: HashSet<&str> = s.iter().map(|e| e.label.as_str()).collect();
    let in_t: HashSet<&str> = t.iter().map(|e| e.label.as_str()).collect();
    let shared_parallel = |a: &str, b: &str| {
        rel.is_parallel(a, b) && in_s.contains(a) && in_s.contains(b) && in_t.contains(a) && in_t.contains(b)
    };
    let mut d = vec![vec![0.0f64; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i as f64;
    }
    for j in 0..=m {
        d[0][j] = j as f64;
    }
    for i in 1..=n {
        for j in 1..=m {
            let (a, b) = (&s[i - 1], &t[j - 1]);
            let sub = if a.label == b.label {
                time_cost(cfg.beta, a, b)
            } else {
                1.0
            };
            let mut best = (d[i - 1][j] + 1.0).min(d[i][j - 1] + 1.0).min(d[i - 1][j - 1] + sub);
            if i > 1 && j > 1 && a.label == t[j - 2].label && s[i - 2].label == b.label {
                let swap = if shared_parallel(&a.label, &b.label) {
                    time_cost(cfg.beta, a, &t[j - 2]) + time_cost(cfg.beta, &s[i - 2], b)
                } else {
                    1.0
                };
                best = best.min(d[i - 2][j - 2] + swap);
            }
            d[i][j] = best;
        }
    }
    d[n][m]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(items: &[(&str, f64, f64)]) -> Vec<TimedEvent> {
        items.iter().map(|(l, p, w)| TimedEvent::new(*l, *p, *w)).collect()
    }

    fn table4() -> (Vec<TimedEvent>, Vec<TimedEvent>) {
        (
            seq(&[("a", 0.3, 0.4), ("b", 0.5, 0.1), ("c", 0.4, 0.1)]),
            seq(&[("a", 0.2, 0.4), ("c", 0.5, 0.2), ("b", 0.5, 0.1), ("d", 0.1, 0.1)]),
        )
    }

    fn bc() -> ConcurrencyRelation {
        let mut r = ConcurrencyRelation::new();
        r.insert("c", "b");
        r
    }

    #[test]
    fn worked_example_with_parallel_swap() {
        let (s, t) = table4();
        let cfg = BptdConfig {
            beta: BetaMode::Dynamic,
        };
        // a matches at 0.042 (beta 0.42), the b/c swap costs 0.1 + 0, inserting d costs 1
        assert!((bptd(&s, &t, &bc(), &cfg) - 1.142).abs() < 1e-9);
        assert!((bptd(&s, &t, &ConcurrencyRelation::new(), &cfg) - 2.042).abs() < 1e-9);
    }

    #[test]
    fn relation_is_symmetric_and_irreflexive() {
        let r = bc();
        assert!(r.is_parallel("b", "c") && r.is_parallel("c", "b"));
        let mut r2 = ConcurrencyRelation::new();
        r2.insert("a", "a");
        assert!(r2.is_empty());
    }

    #[test]
    fn parallel_swap_needs_both_labels_in_both_sequences() {
        let s = seq(&[("b", 0.1, 0.1), ("c", 0.1, 0.1)]);
        let t = seq(&[("c", 0.1, 0.1), ("b", 0.1, 0.1)]);
        assert_eq!(bptd(&s, &t, &bc(), &BptdConfig::default()), 0.0);
        assert_eq!(bptd(&s, &t, &ConcurrencyRelation::new(), &BptdConfig::default()), 1.0);
    }

    #[test]
    fn empty_sequences() {
        let s = seq(&[("a", 0.0, 0.0), ("b", 0.0, 0.0)]);
        assert_eq!(bptd(&s, &[], &ConcurrencyRelation::new(), &BptdConfig::default()), 2.0);
        assert_eq!(bptd(&[], &[], &ConcurrencyRelation::new(), &BptdConfig::default()), 0.0);
    }

    fn timed_seq() -> impl Strategy<Value = Vec<TimedEvent>> {
        prop::collection::vec(("[a-d]", 0.0..=1.0f64, 0.0..=1.0f64), 0..8)
            .prop_map(|v| v.into_iter().map(|(l, p, w)| TimedEvent::new(l, p, w)).collect())
    }

    /// Labels unique within the sequence, so every event has one possible match.
    fn distinct_seq() -> impl Strategy<Value = Vec<TimedEvent>> {
        prop::sample::subsequence(vec!["a", "b", "c", "d", "e"], 0..=5).prop_flat_map(|labels| {
            let n = labels.len();
            prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), n).prop_map(move |tw| {
                labels
                    .iter()
                    .zip(tw)
                    .map(|(l, (p, w))| TimedEvent::new(*l, p, w))
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn identity_is_zero(s in timed_seq()) {
            prop_assert_eq!(bptd(&s, &s, &bc(), &BptdConfig::default()), 0.0);
            prop_assert_eq!(bptd(&s, &s, &bc(), &BptdConfig { beta: BetaMode::Dynamic }), 0.0);
        }

        #[test]
        fn symmetric_with_fixed_beta(s in timed_seq(), t in timed_seq(), b in 0.0..=1.0f64) {
            let cfg = BptdConfig { beta: BetaMode::Fixed(b) };
            prop_assert!((bptd(&s, &t, &bc(), &cfg) - bptd(&t, &s, &bc(), &cfg)).abs() < 1e-12);
        }

        #[test]
        fn reduces_to_osa_without_times(a in "[a-e]{0,10}", b in "[a-e]{0,10}") {
            let to = |x: &str| x.chars().map(|c| TimedEvent::new(c.to_string(), 0.5, 0.5)).collect::<Vec<_>>();
            let d = bptd(&to(&a), &to(&b), &ConcurrencyRelation::new(), &BptdConfig::default());
            prop_assert_eq!(d, strsim::osa_distance(&a, &b) as f64);
        }

        #[test]
        fn larger_time_gap_never_lowers_distance(s in distinct_seq(), k in 0usize..8, bump in 0.0..0.5f64, b in 0.01..=1.0f64) {
            prop_assume!(!s.is_empty());
            let k = k % s.len();
            let cfg = BptdConfig { beta: BetaMode::Fixed(b) };
            let mut t = s.clone();
            t[k].p = (s[k].p + 0.25).min(1.0);
            let mut t2 = t.clone();
            t2[k].p = (t[k].p + bump).min(1.0);
            prop_assert!(bptd(&s, &t2, &bc(), &cfg) + 1e-12 >= bptd(&s, &t, &bc(), &cfg));
        }

        #[test]
        fn bounded_by_longer_length(s in timed_seq(), t in timed_seq()) {
            let d = bptd(&s, &t, &bc(), &BptdConfig::default());
            prop_assert!(d >= 0.0 && d <= s.len().max(t.len()) as f64 + 1e-12);
        }
    }
}
