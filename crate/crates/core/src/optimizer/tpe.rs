//! Tree-structured Parzen estimator over the discovery search space.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::conformance::RepairMethod;
use crate::parameters::BranchingMode;

pub const REPAIR_METHODS: [RepairMethod; 3] = [
    RepairMethod::Alignment,
    RepairMethod::Removal,
    RepairMethod::Replacement,
];
pub const BRANCHING_MODES: [BranchingMode; 3] = [
    BranchingMode::Random,
    BranchingMode::Equiprobable,
    BranchingMode::Discovered,
];

/// One point of the search space. Numeric dimensions are uniform on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub epsilon: f64,
    pub eta: f64,
    pub repair: RepairMethod,
    pub branching: BranchingMode,
    pub pool_threshold: f64,
}

impl TrialConfig {
    fn numeric(&self, d: usize) -> f64 {
        [self.epsilon, self.eta, self.pool_threshold][d]
    }

    fn set_numeric(&mut self, d: usize, v: f64) {
        *[&mut self.epsilon, &mut self.eta, &mut self.pool_threshold][d] = v;
    }

    fn category(&self, d: usize) -> usize {
        match d {
            0 => REPAIR_METHODS.iter().position(|m| *m == self.repair).expect("listed"),
            _ => BRANCHING_MODES
                .iter()
                .position(|m| *m == self.branching)
                .expect("listed"),
        }
    }

    fn set_category(&mut self, d: usize, k: usize) {
        match d {
            0 => self.repair = REPAIR_METHODS[k],
            _ => self.branching = BRANCHING_MODES[k],
        }
    }

    pub fn is_in_space(&self) -> bool {
        (0..3).all(|d| (0.0..=1.0).contains(&self.numeric(d)))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            epsilon: rng.random(),
            eta: rng.random(),
            repair: *REPAIR_METHODS.choose(rng).expect("non-empty"),
            branching: *BRANCHING_MODES.choose(rng).expect("non-empty"),
            pool_threshold: rng.random(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpeSettings {
    /// Share of ok trials forming the good set.
    pub gamma: f64,
    /// Trials sampled uniformly before the model kicks in.
    pub n_startup: usize,
    /// Candidates drawn from the good density per dimension.
    pub n_candidates: usize,
}

impl Default for TpeSettings {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_startup: 10,
            n_candidates: 24,
        }
    }
}

/// A finished (or imputed) trial; `None` loss marks a failure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub config: TrialConfig,
    pub loss: Option<f64>,
}

fn phi(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Adaptive Parzen estimator on [0, 1]: one truncated Gaussian per
/// observation with width equal to the larger gap to its sorted neighbors,
/// plus a prior component centred on the range with full width.
struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
}

impl Parzen {
    fn new(points: &[f64]) -> Self {
        let mut mus: Vec<(f64, bool)> = points.iter().map(|&x| (x, false)).collect();
        mus.push((0.5, true));
        mus.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = mus.len();
        let min_width = 1.0 / (n as f64 + 1.0).min(100.0);
        let sigmas = (0..n)
            .map(|i| {
                if mus[i].1 {
                    return 1.0;
                }
                let left = mus[i].0 - if i == 0 { 0.0 } else { mus[i - 1].0 };
                let right = if i + 1 == n { 1.0 } else { mus[i + 1].0 } - mus[i].0;
                left.max(right).clamp(min_width, 1.0)
            })
            .collect();
        Self {
            mus: mus.into_iter().map(|m| m.0).collect(),
            sigmas,
        }
    }

    fn density(&self, x: f64) -> f64 {
        let sum: f64 = self
            .mus
            .iter()
            .zip(&self.sigmas)
            .map(|(&mu, &s)| {
                let z = (x - mu) / s;
                let mass = phi((1.0 - mu) / s) - phi(-mu / s);
                (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt() * mass)
            })
            .sum();
        sum / self.mus.len() as f64
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = rng.random_range(0..self.mus.len());
        let (mu, s) = (self.mus[k], self.sigmas[k]);
        for _ in 0..100 {
            let z: f64 = StandardNormal.sample(rng);
            let x = mu + s * z;
            if (0.0..=1.0).contains(&x) {
                return x;
            }
        }
        mu
    }
}

/// Next configuration to evaluate. Failed observations are ignored; with
/// fewer than `n_startup` ok observations the draw is uniform.
pub fn tpe_suggest<R: Rng + ?Sized>(history: &[Observation], settings: &TpeSettings, rng: &mut R) -> TrialConfig {
    let mut ok: Vec<(f64, &TrialConfig)> = history.iter().filter_map(|o| o.loss.map(|l| (l, &o.config))).collect();
    if ok.len() < settings.n_startup.max(2) {
        return TrialConfig::random(rng);
    }
    ok.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_good = ((settings.gamma * ok.len() as f64).ceil() as usize).clamp(1, ok.len() - 1);
    let (good, bad) = ok.split_at(n_good);

    let mut out = TrialConfig::random(rng);
    for d in 0..3 {
        let g_pts: Vec<f64> = good.iter().map(|(_, c)| c.numeric(d)).collect();
        let b_pts: Vec<f64> = bad.iter().map(|(_, c)| c.numeric(d)).collect();
        let (l, g) = (Parzen::new(&g_pts), Parzen::new(&b_pts));
        let best = (0..settings.n_candidates)
            .map(|_| l.sample(rng))
            .map(|x| (l.density(x) / g.density(x), x))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, x)| x)
            .expect("at least one candidate");
        out.set_numeric(d, best);
    }
    for d in 0..2 {
        let k = 3;
        let freq = |set: &[(f64, &TrialConfig)]| {
            let mut c = vec![1.0; k];
            for (_, cfg) in set {
                c[cfg.category(d)] += 1.0;
            }
            let total: f64 = c.iter().sum();
            c.into_iter().map(|x| x / total).collect::<Vec<_>>()
        };
        let (l, g) = (freq(good), freq(bad));
        let best = (0..settings.n_candidates)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                l.iter()
                    .position(|p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(k - 1)
            })
            .max_by(|a, b| (l[*a] / g[*a]).total_cmp(&(l[*b] / g[*b])))
            .expect("at least one candidate");
        out.set_category(d, best);
    }
    out
}
