//! Run configuration shared by the CLI and the test harness.

use std::path::PathBuf;

use crate::candidates::CandidateConfig;
use crate::coarsener::{CoarsenConfig, CostMode};
use crate::error::{Error, Result};

/// Downstream task a coarsening run targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    NodeClassification,
    LinkPrediction,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nc" => Ok(Task::NodeClassification),
            "lp" => Ok(Task::LinkPrediction),
            other => Err(Error::input(format!("unknown task '{other}' (expected nc or lp)"))),
        }
    }
}

impl std::str::FromStr for CostMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(CostMode::Exact),
            "approx" => Ok(CostMode::Approx),
            other => Err(Error::input(format!(
                "unknown cost mode '{other}' (expected exact or approx)"
            ))),
        }
    }
}

/// One coarsening run. Defaults follow the tuned citation-graph settings.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub ratio: f64,
    pub batch: usize,
    pub sgc_k: usize,
    pub pca_dim: usize,
    pub knn: usize,
    pub global_frac: f64,
    pub cost_mode: CostMode,
    pub seed: u64,
    pub task: Task,
    pub debug_verify: bool,
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::input(format!(
                "--ratio must lie in (0, 1], got {}",
                self.ratio
            )));
        }
        if self.batch == 0 {
            return Err(Error::input("--batch must be at least 1"));
        }
        if self.knn == 0 {
            return Err(Error::input("--knn must be at least 1"));
        }
        if self.pca_dim == 0 {
            return Err(Error::input("--pca-dim must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.global_frac) {
            return Err(Error::input(format!(
                "--global-frac must lie in [0, 1], got {}",
                self.global_frac
            )));
        }
        Ok(())
    }

    pub fn candidate_config(&self) -> CandidateConfig {
        CandidateConfig {
            sgc_k: self.sgc_k,
            pca_dim: self.pca_dim,
            k1: self.knn,
            d_nn: self.global_frac,
            seed: self.seed,
        }
    }

    pub fn coarsen_config(&self) -> CoarsenConfig {
        CoarsenConfig {
            ratio: self.ratio,
            batch: self.batch,
            candidates: self.candidate_config(),
            cost_mode: self.cost_mode,
            debug_verify: self.debug_verify,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig {
            ratio: 0.1,
            batch: 10,
            sgc_k: 3,
            pca_dim: 15,
            knn: 1,
            global_frac: 0.01,
            cost_mode: CostMode::Approx,
            seed: 0,
            task: Task::NodeClassification,
            debug_verify: false,
            edges: PathBuf::from("e"),
            features: PathBuf::from("f"),
            labels: None,
            splits: None,
            out: PathBuf::from("o"),
        }
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        assert!(base().validate().is_ok());
        for f in [
            |c: &mut RunConfig| c.ratio = 0.0,
            |c: &mut RunConfig| c.ratio = 1.5,
            |c: &mut RunConfig| c.batch = 0,
            |c: &mut RunConfig| c.knn = 0,
            |c: &mut RunConfig| c.pca_dim = 0,
            |c: &mut RunConfig| c.global_frac = -0.1,
        ] {
            let mut c = base();
            f(&mut c);
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn parsers() {
        assert_eq!("nc".parse::<Task>().unwrap(), Task::NodeClassification);
        assert_eq!("lp".parse::<Task>().unwrap(), Task::LinkPrediction);
        assert!("foo".parse::<Task>().is_err());
        assert!(matches!("exact".parse::<CostMode>(), Ok(CostMode::Exact)));
        assert!(matches!("approx".parse::<CostMode>(), Ok(CostMode::Approx)));
        assert!("fast".parse::<CostMode>().is_err());
    }
}
