//! Heredity-guided feature interaction selection.
//!
//! Breadth-first over the subset lattice: every singleton is a candidate, a
//! candidate joins the family when its aggregated strength exceeds θ for its
//! degree, and the next level's candidates are the sets one larger whose
//! heredity score ν exceeds τ.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::{aggregate, ArchipelagoReport, DetectionContext, Predictor, SetScore, DEFAULT_SUBSAMPLE_CAP};
use crate::error::{Error, Result};
use crate::nn::TaskHead;
use crate::sian::{GamArchitecture, InteractionSet};

pub const DEFAULT_TAU: f64 = 0.5;

/// One threshold for every degree, or a list indexed by degree − 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta {
    Scalar(f64),
    PerDegree(Vec<f64>),
}

impl Theta {
    pub fn for_degree(&self, degree: usize) -> f64 {
        match self {
            Theta::Scalar(t) => *t,
            Theta::PerDegree(v) => v[degree - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisConfig {
    pub max_order: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub theta: Theta,
    #[serde(default = "default_cap")]
    pub subsample_cap: usize,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_cap() -> usize {
    DEFAULT_SUBSAMPLE_CAP
}

impl FisConfig {
    pub fn new(max_order: usize, theta: f64) -> Self {
        Self {
            max_order,
            tau: DEFAULT_TAU,
            theta: Theta::Scalar(theta),
            subsample_cap: DEFAULT_SUBSAMPLE_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_order == 0 {
            return Err(Error::Config("max_order must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        let thetas = match &self.theta {
            Theta::Scalar(t) => std::slice::from_ref(t),
            Theta::PerDegree(v) => {
                if v.len() < self.max_order {
                    return Err(Error::Config(format!(
                        "theta lists {} degrees, max_order is {}",
                        v.len(),
                        self.max_order
                    )));
                }
                v.as_slice()
            }
        };
        // NaN fails this check too.
        if !thetas.iter().all(|t| *t >= 0.0) {
            return Err(Error::Config("theta must be nonnegative".into()));
        }
        if self.subsample_cap == 0 {
            return Err(Error::Config("subsample_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Admitted set with the strength and heredity score it had at admission.
/// Singletons carry no heredity score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEntry {
    pub indices: InteractionSet,
    pub strength: f64,
    pub heredity: Option<f64>,
}

/// Selected sets in discovery order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InteractionFamily {
    entries: Vec<FamilyEntry>,
}

impl InteractionFamily {
    pub fn new(entries: Vec<FamilyEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(&e.indices) {
                return Err(Error::validation(format!("{} appears twice in the family", e.indices)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[FamilyEntry] {
        &self.entries
    }

    pub fn sets(&self) -> Vec<InteractionSet> {
        self.entries.iter().map(|e| e.indices.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, set: &InteractionSet) -> bool {
        self.entries.iter().any(|e| &e.indices == set)
    }

    pub fn max_degree(&self) -> usize {
        self.entries.iter().map(|e| e.indices.degree()).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<FamilyEntry> = serde_json::from_str(text)?;
        Self::new(entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Fraction of the `|J| − 1` subsets of `set` present in `family`, divided by
/// `|J|`.
pub fn heredity_score(set: &InteractionSet, family: &HashSet<InteractionSet>) -> f64 {
    let present = set.immediate_subsets().iter().filter(|s| family.contains(*s)).count();
    present as f64 / set.degree() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelStats {
    pub degree: usize,
    pub candidates: usize,
    pub admitted: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct FisOutcome {
    pub family: InteractionFamily,
    /// Every scored candidate, level by level.
    pub scores: ArchipelagoReport,
    pub levels: Vec<LevelStats>,
    /// Candidates with no usable sample.
    pub skipped: Vec<InteractionSet>,
}

fn next_candidates(
    admitted: &[InteractionSet],
    family: &HashSet<InteractionSet>,
    d: usize,
    tau: f64,
) -> Vec<(InteractionSet, f64)> {
    let mut grown = BTreeSet::new();
    for s in admitted {
        for j in 0..d {
            if !s.contains(j) {
                let mut v = s.indices().to_vec();
                v.push(j);
                v.sort_unstable();
                grown.insert(InteractionSet::new(v).expect("distinct indices"));
            }
        }
    }
    grown
        .into_iter()
        .filter_map(|s| {
            let nu = heredity_score(&s, family);
            (nu > tau).then_some((s, nu))
        })
        .collect()
}

/// Runs the level-wise search against the validation targets in `ctx`.
pub fn select_interactions(f: &dyn Predictor, ctx: &DetectionContext, cfg: &FisConfig) -> Result<FisOutcome> {
    cfg.validate()?;
    let d = f.input_dim();
    let mut outcome = FisOutcome {
        family: InteractionFamily::default(),
        scores: ArchipelagoReport::default(),
        levels: Vec::new(),
        skipped: Vec::new(),
    };
    if d == 0 {
        return Ok(outcome);
    }
    let mut members = HashSet::new();
    let mut candidates: Vec<(InteractionSet, Option<f64>)> =
        (0..d).map(|i| (InteractionSet::singleton(i), None)).collect();
    for degree in 1..=cfg.max_order.min(d) {
        if candidates.is_empty() {
            break;
        }
        let theta = cfg.theta.for_degree(degree);
        let mut stats = LevelStats {
            degree,
            candidates: candidates.len(),
            admitted: 0,
            skipped: 0,
        };
        let mut admitted = Vec::new();
        for (set, nu) in candidates {
            let score: SetScore = match aggregate(f, ctx, &set) {
                Ok(s) => s,
                Err(Error::DetectionImpossible { .. }) => {
                    log::warn!("no usable sample for {set}; skipped");
                    stats.skipped += 1;
                    outcome.skipped.push(set);
                    continue;
                }
                Err(e) => return Err(e),
            };
            if score.unreliable() {
                log::warn!(
                    "{set}: {} of {} samples degenerate",
                    score.n_skipped,
                    score.n_skipped + score.n_samples_used
                );
            }
            if score.mean_score > theta {
                outcome.family.entries.push(FamilyEntry {
                    indices: set.clone(),
                    strength: score.mean_score,
                    heredity: nu,
                });
                admitted.push(set);
            }
            outcome.scores.scores.push(score);
        }
        stats.admitted = admitted.len();
        outcome.levels.push(stats);
        members.extend(admitted.iter().cloned());
        candidates = next_candidates(&admitted, &members, d, cfg.tau)
            .into_iter()
            .map(|(s, nu)| (s, Some(nu)))
            .collect();
    }
    Ok(outcome)
}

/// One subnet per family member, in family order.
pub fn family_to_architecture(
    family: &InteractionFamily,
    d: usize,
    widths: &[usize],
    head: TaskHead,
) -> Result<GamArchitecture> {
    GamArchitecture::new(d, family.sets(), widths.to_vec(), head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{Baseline, FnPredictor};
    use crate::tensor::Matrix;

    fn set(v: &[usize]) -> InteractionSet {
        InteractionSet::new(v.to_vec()).unwrap()
    }

    fn family_of(v: &[&[usize]]) -> HashSet<InteractionSet> {
        v.iter().map(|s| set(s)).collect()
    }

    fn cube(d: usize) -> Matrix {
        let rows = (0..1usize << d)
            .map(|m| (0..d).map(|i| if m >> i & 1 == 1 { -1.0 } else { 1.0 }).collect())
            .collect::<Vec<Vec<f64>>>();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn heredity_counts_immediate_subsets() {
        assert_eq!(heredity_score(&set(&[0, 1]), &family_of(&[&[0], &[1]])), 1.0);
        assert_eq!(heredity_score(&set(&[0, 1]), &family_of(&[&[0]])), 0.5);
        assert_eq!(
            heredity_score(&set(&[0, 1, 2]), &family_of(&[&[0, 1], &[0, 2]])),
            2.0 / 3.0
        );
        assert_eq!(heredity_score(&set(&[0, 1, 2]), &family_of(&[&[0], &[1], &[2]])), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(FisConfig::new(2, 0.1).validate().is_ok());
        assert!(FisConfig::new(0, 0.1).validate().is_err());
        assert!(FisConfig::new(2, -1.0).validate().is_err());
        assert!(FisConfig::new(2, f64::NAN).validate().is_err());
        let mut c = FisConfig::new(3, 0.1);
        c.tau = 1.5;
        assert!(c.validate().is_err());
        c.tau = 0.5;
        c.theta = Theta::PerDegree(vec![0.1, 0.01]);
        assert!(c.validate().is_err());
        c.theta = Theta::PerDegree(vec![0.1, 0.01, 0.001]);
        assert!(c.validate().is_ok());
        let parsed: FisConfig = serde_json::from_str(r#"{"max_order": 2, "theta": [1, 0.5]}"#).unwrap();
        assert_eq!(parsed.theta, Theta::PerDegree(vec![1.0, 0.5]));
        assert_eq!(parsed.tau, 0.5);
    }

    #[test]
    fn huge_theta_gives_empty_family() {
        let f = FnPredictor::new(2, |x: &[f64]| x[0] + x[0] * x[1]);
        let ctx = DetectionContext::new(cube(2), Baseline::FlipAll).unwrap();
        let out = select_interactions(&f, &ctx, &FisConfig::new(2, 1e300)).unwrap();
        assert!(out.family.is_empty());
        assert_eq!(out.scores.scores.len(), 2);
        assert_eq!(out.family.to_json().unwrap().replace(char::is_whitespace, ""), "[]");
    }

    #[test]
    fn first_order_takes_every_feature() {
        let f = FnPredictor::new(3, |x: &[f64]| x[0] + 2.0 * x[1] - x[2]);
        let ctx = DetectionContext::new(cube(3), Baseline::FlipAll).unwrap();
        let out = select_interactions(&f, &ctx, &FisConfig::new(1, 0.0)).unwrap();
        assert_eq!(out.family.sets(), vec![set(&[0]), set(&[1]), set(&[2])]);
    }

    #[test]
    fn small_closure_example() {
        let f = FnPredictor::new(2, |x: &[f64]| x[0] + x[0] * x[1]);
        let ctx = DetectionContext::new(cube(2), Baseline::FlipAll).unwrap();
        let out = select_interactions(&f, &ctx, &FisConfig::new(2, 0.01)).unwrap();
        assert_eq!(out.family.sets(), vec![set(&[0]), set(&[1]), set(&[0, 1])]);
        assert_eq!(out.family.entries()[2].heredity, Some(1.0));
    }

    #[test]
    fn sparse_pairs_prune_third_level() {
        let f = FnPredictor::new(12, |x: &[f64]| x[0] * x[1] + x[2] * x[5] + x[7] * x[9] + x[11]);
        let mut rng = crate::rng::Rng::new(3);
        let x = Matrix::from_vec(64, 12, (0..64 * 12).map(|_| rng.normal()).collect()).unwrap();
        let ctx = DetectionContext::new(x, Baseline::zero(12)).unwrap();
        let out = select_interactions(&f, &ctx, &FisConfig::new(3, 1e-6)).unwrap();
        let pairs: Vec<_> = out.family.sets().into_iter().filter(|s| s.degree() == 2).collect();
        assert_eq!(pairs, vec![set(&[0, 1]), set(&[2, 5]), set(&[7, 9])]);
        assert!(out.levels.get(2).map_or(0, |l| l.candidates) <= 10);
    }

    #[test]
    fn admission_is_sound() {
        let f = FnPredictor::new(4, |x: &[f64]| x[0] * x[1] * x[2] + 0.3 * x[3] + x[1] * x[3]);
        let ctx = DetectionContext::new(cube(4), Baseline::FlipAll).unwrap();
        let cfg = FisConfig::new(4, 1e-3);
        let out = select_interactions(&f, &ctx, &cfg).unwrap();
        let mut seen = HashSet::new();
        for e in out.family.entries() {
            assert!(e.strength > cfg.theta.for_degree(e.indices.degree()));
            if e.indices.degree() > 1 {
                let nu = e.heredity.unwrap();
                assert!(nu > cfg.tau);
                assert!(nu <= heredity_score(&e.indices, &seen) + 1e-15);
            }
            seen.insert(e.indices.clone());
        }
        let degrees: Vec<_> = out.family.entries().iter().map(|e| e.indices.degree()).collect();
        assert!(degrees.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn raising_tau_never_adds_candidates() {
        let f = FnPredictor::new(4, |x: &[f64]| x[0] * x[1] + x[1] * x[2] + x[2] * x[3]);
        let ctx = DetectionContext::new(cube(4), Baseline::FlipAll).unwrap();
        let mut prev: Option<Vec<usize>> = None;
        for tau in [0.0, 0.3, 0.5, 0.7, 1.0] {
            let mut cfg = FisConfig::new(4, 1e-6);
            cfg.tau = tau;
            let counts: Vec<usize> = {
                let out = select_interactions(&f, &ctx, &cfg).unwrap();
                (0..4).map(|k| out.levels.get(k).map_or(0, |l| l.candidates)).collect()
            };
            if let Some(p) = prev {
                assert!(counts.iter().zip(&p).all(|(a, b)| a <= b), "{counts:?} vs {p:?}");
            }
            prev = Some(counts);
        }
    }

    #[test]
    fn empty_input_dimension() {
        let f = FnPredictor::new(0, |_: &[f64]| 1.0);
        let ctx = DetectionContext::new(Matrix::zeros(1, 0), Baseline::zero(0)).unwrap();
        assert!(select_interactions(&f, &ctx, &FisConfig::new(2, 0.0))
            .unwrap()
            .family
            .is_empty());
    }

    #[test]
    fn degenerate_candidates_are_skipped() {
        let f = FnPredictor::new(2, |x: &[f64]| x[0] + x[1]);
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let ctx = DetectionContext::new(x, Baseline::zero(2)).unwrap();
        let out = select_interactions(&f, &ctx, &FisConfig::new(2, 0.0)).unwrap();
        assert_eq!(out.skipped, vec![set(&[1])]);
        assert_eq!(out.family.sets(), vec![set(&[0])]);
    }

    #[test]
    fn family_json_and_architecture() {
        let fam = InteractionFamily::new(vec![
            FamilyEntry {
                indices: set(&[0]),
                strength: 0.5,
                heredity: None,
            },
            FamilyEntry {
                indices: set(&[0, 2]),
                strength: 0.25,
                heredity: Some(1.0),
            },
        ])
        .unwrap();
        let text = fam.to_json().unwrap();
        assert!(text.contains("\"indices\""));
        assert_eq!(InteractionFamily::from_json(&text).unwrap(), fam);
        let arch = family_to_architecture(&fam, 3, &[4], TaskHead::regression()).unwrap();
        assert_eq!(arch.family.len(), 2);
        let empty = family_to_architecture(&InteractionFamily::default(), 3, &[4], TaskHead::regression()).unwrap();
        assert!(empty.family.is_empty());
        assert!(InteractionFamily::from_json(
            r#"[{"indices":[1],"strength":1,"heredity":null},{"indices":[1],"strength":2,"heredity":null}]"#
        )
        .is_err());
        assert!(family_to_architecture(&fam, 2, &[4], TaskHead::regression()).is_err());
    }
}
