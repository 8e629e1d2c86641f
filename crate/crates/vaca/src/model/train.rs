//! Mini-batch training with early stopping.
//!
//! Adam on the negative evidence bound with parents dropout; after every
//! epoch the importance-weighted bound (`iwae_k` samples, no dropout) is
//! evaluated on the full validation split. The best parameter snapshot is
//! kept and restored when training stops, either at the patience limit or
//! at `max_epochs`.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::diff::{mix_seed, Matrix, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::error::{Error, Result};

use super::VacaModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

/// Per-epoch curves and the outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean single-draw bound over the epoch's minibatches.
    pub train_elbo: Vec<f64>,
    /// Validation importance-weighted bound after each epoch.
    pub val_iwae: Vec<f64>,
    /// Index (into the curves) of the best validation epoch.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn best_val(&self) -> f64 {
        self.val_iwae[self.best_epoch]
    }
}

impl VacaModel {
    /// Trains on the dataset's training split, early-stopping on the
    /// validation split. The dataset must be normalized (query and metric
    /// consumers operate in normalized space) and must have a validation
    /// split. Deterministic given `seed`.
    pub fn train(&mut self, ds: &Dataset, seed: u64) -> Result<TrainReport> {
        let has_continuous =
            ds.layout.column_kinds().iter().any(|k| k.is_continuous());
        if has_continuous && ds.normalization.is_none() {
            return Err(Error::data("train expects a normalized dataset"));
        }
        if ds.splits.train == 0 || ds.splits.valid == 0 {
            return Err(Error::data("train needs non-empty train and valid splits"));
        }
        if ds.layout.total_dim() != self.graph.total_dim() {
            return Err(Error::data("dataset layout does not match the model graph"));
        }
        use rand::SeedableRng;
        let start = std::time::Instant::now();
        let adj = self.base_adjacency().clone();
        let train_x = ds.train_x();
        let valid_x = ds.valid_x();
        let n = train_x.nrows();
        let bs = self.config.batch_size.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));

        let mut train_elbo = Vec::new();
        let mut val_iwae = Vec::new();
        let mut best = f64::NEG_INFINITY;
        let mut best_epoch = 0usize;
        let mut best_values = self.params.snapshot_values();
        let mut since_best = 0usize;
        let mut stop_reason = StopReason::MaxEpochs;

        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..self.config.max_epochs {
            order.shuffle(&mut rng);
            let mut epoch_elbo = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(bs) {
                let mut xb = Matrix::zeros((chunk.len(), train_x.ncols()));
                for (r, &src) in chunk.iter().enumerate() {
                    xb.row_mut(r).assign(&train_x.row(src));
                }
                let (mut tape, bound) =
                    self.elbo_tape(&xb, &adj, self.config.parents_dropout, &mut rng)?;
                let value = tape.scalar(bound);
                if !value.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite training bound at epoch {epoch}, batch {batches}"
                    )));
                }
                // Maximize the bound: descend its negation.
                let loss = tape.neg(bound)?;
                self.params.zero_grads();
                tape.backward(loss, &mut self.params)?;
                self.params.adam_step(
                    self.config.learning_rate,
                    ADAM_BETA1,
                    ADAM_BETA2,
                    ADAM_EPS,
                );
                self.params.zero_grads();
                epoch_elbo += value;
                batches += 1;
            }
            train_elbo.push(epoch_elbo / batches.max(1) as f64);

            let mut val_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1000 + epoch as u64));
            let iw = self.iwae(&valid_x, &adj, self.config.iwae_k, &mut val_rng)?;
            val_iwae.push(iw);

            if iw > best {
                best = iw;
                best_epoch = epoch;
                best_values = self.params.snapshot_values();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= self.config.patience.max(1) {
                    stop_reason = StopReason::Patience;
                    break;
                }
            }
        }

        self.params.restore_values(&best_values);
        self.normalization = ds.normalization.clone();
        Ok(TrainReport {
            train_elbo,
            val_iwae,
            best_epoch,
            stop_reason,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SplitSizes;
    use crate::gnn::Activation;
    use crate::model::VacaConfig;
    use crate::scm::{builtin_scm, Sem};

    fn tiny_config() -> VacaConfig {
        VacaConfig {
            latent_dim: 2,
            encoder_feature_dim: 4,
            encoder_message_hidden: vec![8],
            encoder_message_dim: 4,
            decoder_hidden_layers: 0,
            decoder_hidden_width: 8,
            decoder_message_hidden: vec![8],
            decoder_feature_dim: 8,
            activation: Activation::Relu,
            batch_size: 100,
            max_epochs: 12,
            patience: 50,
            iwae_k: 10,
            ..VacaConfig::default()
        }
    }

    fn collider_data(seed: u64) -> Dataset {
        let s = builtin_scm("collider", Sem::Lin).unwrap();
        s.sample_splits(SplitSizes { train: 400, valid: 120, test: 0 }, seed)
            .normalize()
            .unwrap()
    }

    #[test]
    fn validation_bound_improves_early() {
        let s = builtin_scm("collider", Sem::Lin).unwrap();
        let ds = collider_data(7);
        let mut m = VacaModel::new(s.graph.clone(), tiny_config(), 7).unwrap();
        // Bound at initialization, before any updates.
        let adj = m.base_adjacency().clone();
        use rand::SeedableRng;
        let mut r0 = ChaCha8Rng::seed_from_u64(0);
        let init = m.iwae(&ds.valid_x(), &adj, 10, &mut r0).unwrap();
        let report = m.train(&ds, 7).unwrap();
        let after10 = report.val_iwae[..10.min(report.val_iwae.len())]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            after10 > init,
            "validation bound should improve over the first epochs: {init} -> {after10}"
        );
    }

    #[test]
    fn patience_zero_stops_at_first_non_improving_epoch() {
        let s = builtin_scm("collider", Sem::Lin).unwrap();
        let ds = collider_data(3);
        let mut cfg = tiny_config();
        cfg.patience = 0;
        cfg.max_epochs = 100;
        // Frozen parameters: validation noise alone decides improvement,
        // so a non-improving epoch arrives almost immediately.
        cfg.learning_rate = 0.0;
        let mut m = VacaModel::new(s.graph.clone(), cfg, 1).unwrap();
        let report = m.train(&ds, 1).unwrap();
        assert_eq!(report.stop_reason, StopReason::Patience);
        // With patience 0 the run ends exactly one epoch after its best.
        assert_eq!(report.val_iwae.len(), report.best_epoch + 2);
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let s = builtin_scm("collider", Sem::Lin).unwrap();
        let ds = collider_data(11);
        let mut cfg = tiny_config();
        cfg.max_epochs = 4;
        let mut a = VacaModel::new(s.graph.clone(), cfg.clone(), 5).unwrap();
        let mut b = VacaModel::new(s.graph.clone(), cfg, 5).unwrap();
        let ra = a.train(&ds, 9).unwrap();
        let rb = b.train(&ds, 9).unwrap();
        assert_eq!(ra.train_elbo, rb.train_elbo);
        assert_eq!(ra.val_iwae, rb.val_iwae);
        assert_eq!(ra.best_epoch, rb.best_epoch);
        for (p, q) in a.params.params().iter().zip(b.params.params().iter()) {
            for (x, y) in p.value.iter().zip(q.value.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn best_epoch_holds_the_maximum() {
        let s = builtin_scm("collider", Sem::Lin).unwrap();
        let ds = collider_data(13);
        let mut cfg = tiny_config();
        cfg.max_epochs = 6;
        let mut m = VacaModel::new(s.graph.clone(), cfg, 2).unwrap();
        let report = m.train(&ds, 2).unwrap();
        let max = report.val_iwae.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(report.best_val(), max);
    }

    #[test]
    fn unnormalized_data_is_rejected() {
        let s = builtin_scm("collider", Sem::Lin).unwrap();
        let ds = s.sample_splits(SplitSizes { train: 50, valid: 20, test: 0 }, 0);
        let mut m = VacaModel::new(s.graph.clone(), tiny_config(), 0).unwrap();
        assert!(m.train(&ds, 0).is_err());
    }
}
