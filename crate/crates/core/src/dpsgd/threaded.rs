//! Real-thread runner for the decentralized scheme.
//!
//! Workers run as OS threads exchanging immutable parameter snapshots with
//! a coordinator over channels; averaging is a two-party transaction on the
//! coordinator. Pairing order depends on thread scheduling, so this mode is
//! non-deterministic and exists for exercising the protocol under real
//! concurrency; the virtual-time [`Simulator`](super::Simulator) is the
//! reproducible reference.

use std::sync::mpsc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{local_step, worker_seed, Averaging, Objective, ParamGroups, TrainConfig, WorkerState};
use crate::error::{Error, Result};

enum CoordinatorMessage {
    Request {
        params: ParamGroups,
        reply: mpsc::Sender<ParamGroups>,
    },
    Done,
}

/// Run `cfg.steps` local steps per worker with coordinator-mediated pair
/// averaging, returning the mean of the final worker parameters.
pub fn run_training_threaded(objective: &dyn Objective, cfg: TrainConfig) -> Result<ParamGroups> {
    cfg.validate()?;
    let samples = objective.num_samples();
    if samples < cfg.workers {
        return Err(Error::InvalidConfig {
            context: format!("{samples} samples cannot shard across {} workers", cfg.workers),
        });
    }
    let shapes = objective.group_shapes();
    let k = cfg.workers;
    let (coordinator_tx, coordinator_rx) = mpsc::channel::<CoordinatorMessage>();

    let finals: Vec<ParamGroups> = std::thread::scope(|scope| {
        let coordinator = scope.spawn(move || {
            let mut pending: Option<(ParamGroups, mpsc::Sender<ParamGroups>)> = None;
            let mut done = 0usize;
            while done < k {
                match coordinator_rx.recv() {
                    Ok(CoordinatorMessage::Request { params, reply }) => match pending.take() {
                        Some((other, other_reply)) => {
                            let mean = ParamGroups::mean_of(&params, &other);
                            let _ = other_reply.send(mean.clone());
                            let _ = reply.send(mean);
                        }
                        None => pending = Some((params, reply)),
                    },
                    Ok(CoordinatorMessage::Done) => {
                        done += 1;
                        // A lone waiter cannot find a partner once everyone
                        // else has finished; release it unaveraged.
                        if done >= k - 1 {
                            if let Some((params, reply)) = pending.take() {
                                let _ = reply.send(params);
                            }
                        }
                    }
                    Err(_) => break,
                }
            }
        });

        let mut handles = Vec::with_capacity(k);
        for id in 0..k {
            let shard: Vec<usize> = {
                let start = id * samples / k;
                let end = (id + 1) * samples / k;
                (start..end).collect()
            };
            let shapes = shapes.clone();
            let cfg = cfg.clone();
            let tx = coordinator_tx.clone();
            handles.push(scope.spawn(move || -> Result<ParamGroups> {
                let mut worker = WorkerState {
                    worker_id: id,
                    ..WorkerState::init(id, &shapes, worker_seed(cfg.seed, id))
                };
                // Reseed so the threaded mode draws an independent stream.
                worker.rng = ChaCha8Rng::seed_from_u64(worker_seed(cfg.seed ^ 0x7ead, id));
                let mut lr = cfg.lr;
                for _ in 0..cfg.steps {
                    local_step(&mut worker, objective, &shard, lr, cfg.batch_size)?;
                    lr *= cfg.lr_decay;
                    if cfg.averaging != Averaging::None && k > 1 {
                        let (reply_tx, reply_rx) = mpsc::channel();
                        tx.send(CoordinatorMessage::Request {
                            params: worker.params.clone(),
                            reply: reply_tx,
                        })
                        .map_err(|_| Error::InvalidConfig {
                            context: "coordinator hung up".to_string(),
                        })?;
                        worker.params = reply_rx.recv().map_err(|_| Error::InvalidConfig {
                            context: "coordinator dropped a reply".to_string(),
                        })?;
                    }
                }
                let _ = tx.send(CoordinatorMessage::Done);
                Ok(worker.params)
            }));
        }
        drop(coordinator_tx);

        let finals: Vec<Result<ParamGroups>> =
            handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect();
        coordinator.join().expect("coordinator thread panicked");
        finals.into_iter().collect::<Result<Vec<_>>>()
    })?;

    let refs: Vec<&ParamGroups> = finals.iter().collect();
    Ok(ParamGroups::mean_of_all(&refs))
}
