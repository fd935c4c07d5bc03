//! Decentralized parallel SGD in deterministic virtual time.
//!
//! Workers sit in a communication ring. Every step each worker computes a
//! mini-batch gradient on its pre-averaging weights (gradient compute
//! overlaps the communication), optionally averages parameters with one
//! randomly chosen partner, then applies the update to the averaged
//! weights. All parameter groups step simultaneously from the same
//! snapshot, so paired networks (generator/discriminator analogs) update
//! the way a single-network scheme would.
//!
//! Asynchrony is modeled by the seeded event order, not wall-clock
//! threads, so runs reproduce bit for bit; an optional threaded runner
//! lives in [`threaded`] without any determinism claims.

mod objective;
pub mod threaded;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use objective::{CoupledQuadratic, LeastSquares, LogisticRegression, Objective, ParamGroups};

use crate::error::{Error, Result};

/// Partner-selection scheme for the averaging step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    /// Uniform over all other ring members.
    RandomPartner,
    /// Uniform over the two ring neighbors.
    RingNeighbor,
    /// No averaging; workers run independently.
    None,
}

/// Harness configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub workers: usize,
    pub lr: f64,
    /// Per-step multiplicative learning-rate decay; 1.0 keeps it constant.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub averaging: Averaging,
    /// Any loss above this aborts the run as diverged.
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            lr: 0.05,
            lr_decay: 1.0,
            batch_size: 16,
            steps: 100,
            seed: 7,
            averaging: Averaging::RandomPartner,
            divergence_threshold: 1e12,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::InvalidConfig {
                context: "worker count must be at least 1".to_string(),
            });
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig {
                context: format!("learning rate {} must be > 0", self.lr),
            });
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidConfig {
                context: format!("lr decay {} must be in (0, 1]", self.lr_decay),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig {
                context: "batch size must be at least 1".to_string(),
            });
        }
        Ok(())
    }
}

/// One learner: its ring position, parameter groups, private RNG stream,
/// and step counter.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub worker_id: usize,
    pub params: ParamGroups,
    pub rng: ChaCha8Rng,
    pub step_count: u64,
}

/// Stable per-worker seed derivation (splitmix of the run seed and id).
pub fn worker_seed(seed: u64, worker_id: usize) -> u64 {
    let mut z = seed ^ (worker_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl WorkerState {
    /// A worker with parameters drawn uniformly from [-0.5, 0.5), one draw
    /// per element in group order.
    pub fn init(worker_id: usize, shapes: &[(String, usize)], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamGroups::zeros(shapes);
        for (name, _) in shapes {
            for value in params.group_mut(name).expect("group exists") {
                *value = rng.gen_range(-0.5..0.5);
            }
        }
        Self {
            worker_id,
            params,
            rng,
            step_count: 0,
        }
    }

    fn draw_batch(&mut self, shard: &[usize], batch_size: usize) -> Vec<usize> {
        (0..batch_size)
            .map(|_| shard[self.rng.gen_range(0..shard.len())])
            .collect()
    }
}

/// One mini-batch descent step on a single worker: every parameter group
/// moves by `-lr * grad` computed from the same pre-step snapshot.
pub fn local_step(
    worker: &mut WorkerState,
    objective: &dyn Objective,
    shard: &[usize],
    lr: f64,
    batch_size: usize,
) -> Result<()> {
    let batch = worker.draw_batch(shard, batch_size);
    let grad = objective.grad(&worker.params, &batch);
    if !grad.is_finite() {
        return Err(Error::NonFinite {
            context: format!(
                "gradient at worker {} step {}",
                worker.worker_id, worker.step_count
            ),
        });
    }
    worker.params.axpy(-lr, &grad);
    worker.step_count += 1;
    Ok(())
}

/// Replace both workers' parameters with their elementwise mean. The
/// global parameter sum is preserved exactly up to floating-point
/// rounding of `(a + b) / 2`.
pub fn pair_average(a: &mut WorkerState, b: &mut WorkerState) -> Result<()> {
    a.params.ensure_same_shape(&b.params)?;
    let mean = ParamGroups::mean_of(&a.params, &b.params);
    a.params = mean.clone();
    b.params = mean;
    Ok(())
}

/// One averaging event in a step.
#[derive(Debug, Clone)]
pub struct AveragingEvent {
    pub worker_a: usize,
    pub worker_b: usize,
    /// Largest elementwise drift of the global parameter mean across this
    /// event, measured with a fixed summation order.
    pub global_mean_drift: f64,
}

/// Trace entry for one virtual-time step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: u64,
    /// Full-dataset loss of each worker's parameters.
    pub per_worker_loss: Vec<f64>,
    /// Largest pairwise parameter distance across workers.
    pub consensus_distance: f64,
    pub global_mean: ParamGroups,
    pub global_mean_loss: f64,
    pub averaging: Vec<AveragingEvent>,
}

/// Full run trace.
#[derive(Debug)]
pub struct TrainTrace {
    pub records: Vec<StepRecord>,
    pub final_workers: Vec<ParamGroups>,
}

impl TrainTrace {
    pub fn final_record(&self) -> &StepRecord {
        self.records.last().expect("runs have at least one step")
    }

    /// Write rows of (step, worker, loss, consensus_distance).
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        writer
            .write_record(["step", "worker", "loss", "consensus_distance"])
            .map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                source: e,
            })?;
        for record in &self.records {
            for (worker, loss) in record.per_worker_loss.iter().enumerate() {
                writer
                    .write_record([
                        record.step.to_string(),
                        worker.to_string(),
                        format!("{loss:.17e}"),
                        format!("{:.17e}", record.consensus_distance),
                    ])
                    .map_err(|e| Error::Csv {
                        path: path.to_path_buf(),
                        source: e,
                    })?;
            }
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

/// The virtual-time ring simulator. Single-threaded and bit-reproducible
/// for a fixed config.
pub struct Simulator<'a> {
    objective: &'a dyn Objective,
    cfg: TrainConfig,
    workers: Vec<WorkerState>,
    shards: Vec<Vec<usize>>,
    lr: f64,
    step: u64,
}

impl<'a> Simulator<'a> {
    /// Standard setup: per-worker seeds derived from the run seed and
    /// contiguous equal dataset shards.
    pub fn new(objective: &'a dyn Objective, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let samples = objective.num_samples();
        if samples < cfg.workers {
            return Err(Error::InvalidConfig {
                context: format!("{samples} samples cannot shard across {} workers", cfg.workers),
            });
        }
        let shapes = objective.group_shapes();
        let workers: Vec<WorkerState> = (0..cfg.workers)
            .map(|id| WorkerState::init(id, &shapes, worker_seed(cfg.seed, id)))
            .collect();
        let shards: Vec<Vec<usize>> = (0..cfg.workers)
            .map(|id| {
                let start = id * samples / cfg.workers;
                let end = (id + 1) * samples / cfg.workers;
                (start..end).collect()
            })
            .collect();
        Self::with_workers(objective, cfg, workers, shards)
    }

    /// Custom worker states and shards, e.g. identically seeded workers.
    pub fn with_workers(
        objective: &'a dyn Objective,
        cfg: TrainConfig,
        workers: Vec<WorkerState>,
        shards: Vec<Vec<usize>>,
    ) -> Result<Self> {
        cfg.validate()?;
        if workers.len() != cfg.workers || shards.len() != cfg.workers {
            return Err(Error::InvalidConfig {
                context: format!(
                    "expected {} workers and shards, got {} and {}",
                    cfg.workers,
                    workers.len(),
                    shards.len()
                ),
            });
        }
        if shards.iter().any(Vec::is_empty) {
            return Err(Error::EmptyInput {
                context: "a worker shard is empty".to_string(),
            });
        }
        let lr = cfg.lr;
        Ok(Self {
            objective,
            cfg,
            workers,
            shards,
            lr,
            step: 0,
        })
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    fn global_mean(&self) -> ParamGroups {
        let params: Vec<&ParamGroups> = self.workers.iter().map(|w| &w.params).collect();
        ParamGroups::mean_of_all(&params)
    }

    fn consensus_distance(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.workers.len() {
            for j in i + 1..self.workers.len() {
                worst = worst.max(self.workers[i].params.l2_distance(&self.workers[j].params));
            }
        }
        worst
    }

    /// Advance one virtual-time step for every worker.
    pub fn step(&mut self) -> Result<StepRecord> {
        let k = self.cfg.workers;

        // Phase 1: every worker draws its batch and evaluates the gradient
        // on pre-averaging weights (compute overlaps communication).
        let mut gradients = Vec::with_capacity(k);
        for worker in &mut self.workers {
            let batch = worker.draw_batch(&self.shards[worker.worker_id], self.cfg.batch_size);
            let grad = self.objective.grad(&worker.params, &batch);
            if !grad.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient at worker {} step {}", worker.worker_id, self.step),
                });
            }
            gradients.push(grad);
        }

        // Phase 2: partner proposals. Every worker draws one proposal from
        // its own stream (keeping streams aligned across workers), then
        // pairs resolve in ascending id order, each worker joining at most
        // one averaging per step.
        let mut averaging = Vec::new();
        if k > 1 && self.cfg.averaging != Averaging::None {
            let proposals: Vec<usize> = self
                .workers
                .iter_mut()
                .map(|worker| {
                    let id = worker.worker_id;
                    match self.cfg.averaging {
                        Averaging::RandomPartner => {
                            let draw = worker.rng.gen_range(0..k - 1);
                            if draw >= id {
                                draw + 1
                            } else {
                                draw
                            }
                        }
                        Averaging::RingNeighbor => {
                            if worker.rng.gen_range(0..2u8) == 0 {
                                (id + k - 1) % k
                            } else {
                                (id + 1) % k
                            }
                        }
                        Averaging::None => unreachable!(),
                    }
                })
                .collect();

            let mut paired = vec![false; k];
            for id in 0..k {
                let partner = proposals[id];
                if paired[id] || paired[partner] {
                    continue;
                }
                let mean_before = self.global_mean();
                let (low, high) = (id.min(partner), id.max(partner));
                let (left, right) = self.workers.split_at_mut(high);
                pair_average(&mut left[low], &mut right[0])?;
                let drift = mean_before.max_abs_diff(&self.global_mean());
                paired[id] = true;
                paired[partner] = true;
                averaging.push(AveragingEvent {
                    worker_a: low,
                    worker_b: high,
                    global_mean_drift: drift,
                });
            }
        }

        // Phase 3: apply the pre-averaging gradients to the averaged
        // weights.
        for (worker, grad) in self.workers.iter_mut().zip(&gradients) {
            worker.params.axpy(-self.lr, grad);
            worker.step_count += 1;
        }

        self.step += 1;
        self.lr *= self.cfg.lr_decay;

        let per_worker_loss: Vec<f64> = self
            .workers
            .iter()
            .map(|w| self.objective.full_loss(&w.params))
            .collect();
        for &loss in &per_worker_loss {
            if !loss.is_finite() || loss > self.cfg.divergence_threshold {
                return Err(Error::Divergence {
                    step: self.step,
                    loss,
                });
            }
        }
        let global_mean = self.global_mean();
        let global_mean_loss = self.objective.full_loss(&global_mean);
        Ok(StepRecord {
            step: self.step,
            per_worker_loss,
            consensus_distance: self.consensus_distance(),
            global_mean,
            global_mean_loss,
            averaging,
        })
    }

    pub fn run(mut self) -> Result<TrainTrace> {
        let mut records = Vec::with_capacity(self.cfg.steps as usize);
        for _ in 0..self.cfg.steps {
            records.push(self.step()?);
        }
        Ok(TrainTrace {
            records,
            final_workers: self.workers.into_iter().map(|w| w.params).collect(),
        })
    }
}

/// Run the simulator end to end with the standard setup.
pub fn run_training(objective: &dyn Objective, cfg: TrainConfig) -> Result<TrainTrace> {
    Simulator::new(objective, cfg)?.run()
}

/// Projected speedup of `k` overlapped workers:
/// `k * t_compute / (max(t_compute, t_comm) + sync_overhead)`.
///
/// With gradient compute fully overlapping communication, the per-step
/// wall time is the slower of the two plus any residual synchronization
/// cost. A single worker never communicates, so k = 1 returns exactly 1.
/// This is an analytic cost model for capacity planning, not a measured
/// result; published decentralized deployments report in the same range
/// (for example 14.7x on 16 workers, about 92% efficiency).
pub fn speedup_model(k: usize, t_compute: f64, t_comm: f64, sync_overhead: f64) -> f64 {
    if k <= 1 {
        return 1.0;
    }
    k as f64 * t_compute / (t_compute.max(t_comm) + sync_overhead)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn full_batch_quadratic_converges_in_one_step_at_unit_lr() {
        // 0.5|w - w*|^2 via coupling 0: one lr=1 full-batch step lands on
        // the target.
        let objective = CoupledQuadratic {
            target_gen: vec![3.0, -2.0],
            target_disc: vec![1.0],
            coupling: 0.0,
        };
        let mut worker = WorkerState::init(0, &objective.group_shapes(), 5);
        local_step(&mut worker, &objective, &[0], 1.0, 1).unwrap();
        let gen = worker.params.group("gen").unwrap();
        let disc = worker.params.group("disc").unwrap();
        assert!((gen[0] - 3.0).abs() < 1e-12 && (gen[1] + 2.0).abs() < 1e-12);
        assert!((disc[0] - 1.0).abs() < 1e-12);
        assert_eq!(worker.step_count, 1);
    }

    #[test]
    fn zero_lr_changes_nothing() {
        let objective = LeastSquares::synthetic(32, 4, 0.1, 3);
        let mut worker = WorkerState::init(0, &objective.group_shapes(), 5);
        let before = worker.params.clone();
        let shard: Vec<usize> = (0..32).collect();
        local_step(&mut worker, &objective, &shard, 0.0, 8).unwrap();
        assert_eq!(worker.params, before);
    }

    // Simultaneous multi-group stepping: both groups move from the same
    // snapshot (Jacobi), not sequentially (Gauss-Seidel).
    #[test]
    fn coupled_step_is_jacobi_not_gauss_seidel() {
        let objective = CoupledQuadratic {
            target_gen: vec![1.0],
            target_disc: vec![2.0],
            coupling: 0.5,
        };
        let mut worker = WorkerState::init(0, &objective.group_shapes(), 5);
        let mut map = BTreeMap::new();
        map.insert("gen".to_string(), vec![0.0]);
        map.insert("disc".to_string(), vec![0.0]);
        worker.params = ParamGroups::from_map(map);
        local_step(&mut worker, &objective, &[0], 0.1, 1).unwrap();
        // Hand-computed Jacobi update from (0, 0):
        //   grad_gen = (0 - 1) + 0.5 * 0 = -1      -> gen  = 0.1
        //   grad_disc = (0 - 2) + 0.5 * 0 = -2     -> disc = 0.2
        // Gauss-Seidel would see the new gen and give disc = 0.195.
        assert_eq!(worker.params.group("gen").unwrap()[0], 0.1);
        assert_eq!(worker.params.group("disc").unwrap()[0], 0.2);
    }

    #[test]
    fn pair_average_makes_params_equal_and_keeps_the_mean() {
        let shapes = vec![("w".to_string(), 2)];
        let mut a = WorkerState::init(0, &shapes, 1);
        let mut b = WorkerState::init(1, &shapes, 2);
        a.params.group_mut("w").unwrap().copy_from_slice(&[0.0, 6.0]);
        b.params.group_mut("w").unwrap().copy_from_slice(&[2.0, -4.0]);
        pair_average(&mut a, &mut b).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.params.group("w").unwrap(), [1.0, 1.0]);

        // Identical inputs stay put.
        let mut c = a.clone();
        let mut d = a.clone();
        pair_average(&mut c, &mut d).unwrap();
        assert_eq!(c.params, a.params);
    }

    #[test]
    fn averaging_sequences_never_move_the_global_mean() {
        use rand::{Rng, SeedableRng};
        let shapes = vec![("w".to_string(), 3)];
        let mut workers: Vec<WorkerState> = (0..6)
            .map(|id| WorkerState::init(id, &shapes, worker_seed(77, id)))
            .collect();
        let params: Vec<&ParamGroups> = workers.iter().map(|w| &w.params).collect();
        let initial_mean = ParamGroups::mean_of_all(&params);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        for _ in 0..200 {
            let a = rng.gen_range(0..6);
            let mut b = rng.gen_range(0..5);
            if b >= a {
                b += 1;
            }
            let (low, high) = (a.min(b), a.max(b));
            let (left, right) = workers.split_at_mut(high);
            pair_average(&mut left[low], &mut right[0]).unwrap();
        }
        let params: Vec<&ParamGroups> = workers.iter().map(|w| &w.params).collect();
        let final_mean = ParamGroups::mean_of_all(&params);
        assert!(initial_mean.max_abs_diff(&final_mean) < 1e-12);
    }

    #[test]
    fn mismatched_shapes_cannot_average() {
        let mut a = WorkerState::init(0, &[("w".to_string(), 2)], 1);
        let mut b = WorkerState::init(1, &[("w".to_string(), 3)], 2);
        assert!(pair_average(&mut a, &mut b).is_err());
    }

    #[test]
    fn identical_seeds_and_shards_keep_two_workers_in_lockstep() {
        let objective = LeastSquares::synthetic(64, 4, 0.1, 21);
        let shapes = objective.group_shapes();
        let shard: Vec<usize> = (0..64).collect();
        let cfg = TrainConfig {
            workers: 2,
            lr: 0.1,
            steps: 50,
            seed: 5,
            ..TrainConfig::default()
        };
        let workers = vec![
            WorkerState::init(0, &shapes, 42),
            WorkerState::init(1, &shapes, 42),
        ];
        let trace = Simulator::with_workers(&objective, cfg, workers, vec![shard.clone(), shard])
            .unwrap()
            .run()
            .unwrap();
        for record in &trace.records {
            assert_eq!(record.consensus_distance, 0.0);
            assert_eq!(record.per_worker_loss[0], record.per_worker_loss[1]);
        }
        assert_eq!(trace.final_workers[0], trace.final_workers[1]);
    }

    #[test]
    fn speedup_model_limits() {
        assert_eq!(speedup_model(1, 1.0, 5.0, 0.2), 1.0);
        assert_eq!(speedup_model(8, 1.0, 0.0, 0.0), 8.0);
        assert!(speedup_model(8, 1.0, 2.0, 0.0) < 8.0);
    }

    #[test]
    fn divergent_runs_error_out() {
        let objective = LeastSquares::synthetic(32, 6, 0.0, 2);
        let cfg = TrainConfig {
            workers: 1,
            lr: 1e6,
            steps: 200,
            averaging: Averaging::None,
            ..TrainConfig::default()
        };
        let err = run_training(&objective, cfg).unwrap_err();
        assert!(matches!(
            err,
            Error::Divergence { .. } | Error::NonFinite { .. }
        ));
    }
}
