use super::{EstimatorSnapshot, FeatureMap, LabelStore, LogisticConfig, LogisticEstimator, ReversibilityEstimator, TrainReport};
use crate::env::Observation;
use crate::error::{input, Result};
use crate::rng;

/// Independently initialised members trained on identical data. Predicts
/// the member mean; `spread` is the sample standard deviation.
pub struct Ensemble {
    members: Vec<Box<dyn ReversibilityEstimator>>,
}

impl Ensemble {
    pub fn new(members: Vec<Box<dyn ReversibilityEstimator>>) -> Result<Self> {
        if members.len() < 2 {
            return input(format!("an ensemble needs at least two members, got {}", members.len()));
        }
        Ok(Ensemble { members })
    }

    /// `k` logistic members, member `i` initialised from sub-stream `i` of `seed`.
    pub fn logistic(k: usize, features: FeatureMap, config: LogisticConfig, seed: u64) -> Result<Self> {
        let config = LogisticConfig {
            init_scale: if config.init_scale > 0.0 { config.init_scale } else { 0.5 },
            ..config
        };
        let members = (0..k)
            .map(|i| {
                let mut r = rng::indexed_stream(seed, rng::Stream::EstimatorInit, i as u64);
                Box::new(LogisticEstimator::new(features.clone(), config, &mut r)) as Box<dyn ReversibilityEstimator>
            })
            .collect();
        Ensemble::new(members)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn member_predictions(&self, obs: &Observation) -> Vec<f64> {
        self.members.iter().map(|m| m.predict(obs)).collect()
    }
}

impl ReversibilityEstimator for Ensemble {
    fn predict(&self, obs: &Observation) -> f64 {
        let p = self.member_predictions(obs);
        p.iter().sum::<f64>() / p.len() as f64
    }

    fn spread(&self, obs: &Observation) -> Option<f64> {
        let p = self.member_predictions(obs);
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        let var = p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (p.len() - 1) as f64;
        Some(var.sqrt())
    }

    fn train(&mut self, data: &LabelStore) -> Result<TrainReport> {
        let mut reports = Vec::with_capacity(self.members.len());
        for m in &mut self.members {
            reports.push(m.train(data)?);
        }
        let final_loss = reports.iter().map(|r| r.final_loss).sum::<f64>() / reports.len() as f64;
        Ok(TrainReport {
            final_loss,
            samples: reports[0].samples,
            empty_dataset: reports[0].empty_dataset,
        })
    }

    fn snapshot(&self) -> EstimatorSnapshot {
        EstimatorSnapshot::Ensemble {
            members: self.members.iter().map(|m| m.snapshot()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::ConstantEstimator;

    #[test]
    fn identical_members_have_zero_spread() {
        let ens = Ensemble::new(vec![Box::new(ConstantEstimator(0.3)), Box::new(ConstantEstimator(0.3))]).unwrap();
        let obs = Observation::Discrete(0);
        assert_eq!(ens.spread(&obs), Some(0.0));
        assert!((ens.predict(&obs) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn needs_two_members() {
        assert!(Ensemble::new(vec![Box::new(ConstantEstimator(0.3))]).is_err());
    }

    #[test]
    fn differently_seeded_members_disagree_before_training() {
        let ens = Ensemble::logistic(4, FeatureMap::rbf_unit_square(4), LogisticConfig::default(), 9).unwrap();
        let spread = ens.spread(&Observation::Continuous(vec![0.5, 0.5])).unwrap();
        assert!(spread > 0.0);
    }
}
