use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Named parameter groups, each a flat f64 vector. Iteration order is the
/// sorted group-name order, which keeps every reduction deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroups(BTreeMap<String, Vec<f64>>);

impl ParamGroups {
    pub fn zeros(shapes: &[(String, usize)]) -> Self {
        Self(
            shapes
                .iter()
                .map(|(name, dim)| (name.clone(), vec![0.0; *dim]))
                .collect(),
        )
    }

    pub fn from_map(map: BTreeMap<String, Vec<f64>>) -> Self {
        Self(map)
    }

    pub fn group(&self, name: &str) -> Option<&[f64]> {
        self.0.get(name).map(Vec::as_slice)
    }

    pub fn group_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.0.get_mut(name)
    }

    pub fn groups(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.0.iter().map(|(name, values)| (name.as_str(), values.as_slice()))
    }

    pub fn shapes(&self) -> Vec<(String, usize)> {
        self.0.iter().map(|(name, values)| (name.clone(), values.len())).collect()
    }

    pub fn same_shape(&self, other: &ParamGroups) -> bool {
        self.shapes() == other.shapes()
    }

    pub(crate) fn ensure_same_shape(&self, other: &ParamGroups) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                context: format!("parameter groups {:?} vs {:?}", self.shapes(), other.shapes()),
            })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.values().flatten().all(|v| v.is_finite())
    }

    /// `self += alpha * other`, groupwise.
    pub fn axpy(&mut self, alpha: f64, other: &ParamGroups) {
        for (name, values) in &mut self.0 {
            if let Some(rhs) = other.0.get(name) {
                for (v, r) in values.iter_mut().zip(rhs) {
                    *v += alpha * r;
                }
            }
        }
    }

    /// Elementwise mean of two same-shape groups.
    pub fn mean_of(a: &ParamGroups, b: &ParamGroups) -> ParamGroups {
        let map = a
            .0
            .iter()
            .map(|(name, left)| {
                let right = &b.0[name];
                let mean = left.iter().zip(right).map(|(x, y)| (x + y) / 2.0).collect();
                (name.clone(), mean)
            })
            .collect();
        Self(map)
    }

    /// Mean over many same-shape groups, summed in slice order.
    pub fn mean_of_all(items: &[&ParamGroups]) -> ParamGroups {
        let mut acc = items[0].clone();
        for values in acc.0.values_mut() {
            values.iter_mut().for_each(|v| *v = 0.0);
        }
        for item in items {
            acc.axpy(1.0, item);
        }
        let scale = 1.0 / items.len() as f64;
        for values in acc.0.values_mut() {
            values.iter_mut().for_each(|v| *v *= scale);
        }
        acc
    }

    /// Euclidean distance over all groups concatenated.
    pub fn l2_distance(&self, other: &ParamGroups) -> f64 {
        let mut sum = 0.0;
        for (name, values) in &self.0 {
            let rhs = &other.0[name];
            for (a, b) in values.iter().zip(rhs) {
                sum += (a - b) * (a - b);
            }
        }
        sum.sqrt()
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &ParamGroups) -> f64 {
        let mut worst: f64 = 0.0;
        for (name, values) in &self.0 {
            let rhs = &other.0[name];
            for (a, b) in values.iter().zip(rhs) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn flat_len(&self) -> usize {
        self.0.values().map(Vec::len).sum()
    }
}

/// A loss with per-sample gradients over a finite dataset, evaluated on
/// whatever parameter groups it declares. Gradients are deterministic given
/// (params, samples) and evaluate every group from the same parameter
/// snapshot, so a single update step moves all groups simultaneously.
pub trait Objective: Send + Sync {
    fn group_shapes(&self) -> Vec<(String, usize)>;

    fn num_samples(&self) -> usize;

    /// Mean loss over the given sample indices.
    fn loss(&self, params: &ParamGroups, samples: &[usize]) -> f64;

    /// Mean gradient over the given sample indices, for every group.
    fn grad(&self, params: &ParamGroups, samples: &[usize]) -> ParamGroups;

    /// Mean loss over the full dataset.
    fn full_loss(&self, params: &ParamGroups) -> f64 {
        let all: Vec<usize> = (0..self.num_samples()).collect();
        self.loss(params, &all)
    }
}

/// Mean-squared-error linear regression: `loss = mean 0.5 (x.theta - y)^2`
/// over a synthetic design matrix. Strongly convex for well-conditioned
/// data; the workhorse for convergence checks.
pub struct LeastSquares {
    features: Vec<Vec<f64>>,
    targets: Vec<f64>,
    dim: usize,
}

impl LeastSquares {
    /// Draw a random design with unit-scale Gaussian-ish features, a fixed
    /// planted parameter vector, and additive observation noise.
    pub fn synthetic(samples: usize, dim: usize, noise: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planted: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut features = Vec::with_capacity(samples);
        let mut targets = Vec::with_capacity(samples);
        for _ in 0..samples {
            let row: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let clean: f64 = row.iter().zip(&planted).map(|(a, b)| a * b).sum();
            targets.push(clean + noise * rng.gen_range(-1.0..1.0));
            features.push(row);
        }
        Self {
            features,
            targets,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Objective for LeastSquares {
    fn group_shapes(&self) -> Vec<(String, usize)> {
        vec![("theta".to_string(), self.dim)]
    }

    fn num_samples(&self) -> usize {
        self.features.len()
    }

    fn loss(&self, params: &ParamGroups, samples: &[usize]) -> f64 {
        let theta = params.group("theta").expect("theta group");
        let mut total = 0.0;
        for &i in samples {
            let predicted: f64 = self.features[i].iter().zip(theta).map(|(a, b)| a * b).sum();
            let residual = predicted - self.targets[i];
            total += 0.5 * residual * residual;
        }
        total / samples.len() as f64
    }

    fn grad(&self, params: &ParamGroups, samples: &[usize]) -> ParamGroups {
        let theta = params.group("theta").expect("theta group");
        let mut grad = vec![0.0; self.dim];
        for &i in samples {
            let predicted: f64 = self.features[i].iter().zip(theta).map(|(a, b)| a * b).sum();
            let residual = predicted - self.targets[i];
            for (g, x) in grad.iter_mut().zip(&self.features[i]) {
                *g += residual * x;
            }
        }
        let scale = 1.0 / samples.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        let mut map = BTreeMap::new();
        map.insert("theta".to_string(), grad);
        ParamGroups::from_map(map)
    }
}

/// Binary logistic regression on planted linearly separable-ish data.
pub struct LogisticRegression {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>, // +1 / -1
    dim: usize,
}

impl LogisticRegression {
    pub fn synthetic(samples: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planted: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut features = Vec::with_capacity(samples);
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            let row: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let margin: f64 = row.iter().zip(&planted).map(|(a, b)| a * b).sum();
            // 10% label noise keeps the optimum finite.
            let flip = rng.gen_bool(0.1);
            labels.push(if (margin >= 0.0) != flip { 1.0 } else { -1.0 });
            features.push(row);
        }
        Self {
            features,
            labels,
            dim,
        }
    }
}

impl Objective for LogisticRegression {
    fn group_shapes(&self) -> Vec<(String, usize)> {
        vec![("theta".to_string(), self.dim)]
    }

    fn num_samples(&self) -> usize {
        self.features.len()
    }

    fn loss(&self, params: &ParamGroups, samples: &[usize]) -> f64 {
        let theta = params.group("theta").expect("theta group");
        let mut total = 0.0;
        for &i in samples {
            let margin: f64 = self.features[i].iter().zip(theta).map(|(a, b)| a * b).sum();
            total += (1.0 + (-self.labels[i] * margin).exp()).ln();
        }
        total / samples.len() as f64
    }

    fn grad(&self, params: &ParamGroups, samples: &[usize]) -> ParamGroups {
        let theta = params.group("theta").expect("theta group");
        let mut grad = vec![0.0; self.dim];
        for &i in samples {
            let margin: f64 = self.features[i].iter().zip(theta).map(|(a, b)| a * b).sum();
            let sigma = 1.0 / (1.0 + (self.labels[i] * margin).exp());
            for (g, x) in grad.iter_mut().zip(&self.features[i]) {
                *g += -self.labels[i] * sigma * x;
            }
        }
        let scale = 1.0 / samples.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        let mut map = BTreeMap::new();
        map.insert("theta".to_string(), grad);
        ParamGroups::from_map(map)
    }
}

/// Two cross-coupled quadratics in groups `gen` and `disc`:
/// `0.5|u - a|^2 + 0.5|v - b|^2 + coupling * u.v`. A desk-scale stand-in
/// for two jointly trained networks; its closed-form gradients make the
/// simultaneous (Jacobi) update hand-checkable.
pub struct CoupledQuadratic {
    pub target_gen: Vec<f64>,
    pub target_disc: Vec<f64>,
    pub coupling: f64,
}

impl Objective for CoupledQuadratic {
    fn group_shapes(&self) -> Vec<(String, usize)> {
        vec![
            ("disc".to_string(), self.target_disc.len()),
            ("gen".to_string(), self.target_gen.len()),
        ]
    }

    fn num_samples(&self) -> usize {
        1
    }

    fn loss(&self, params: &ParamGroups, _samples: &[usize]) -> f64 {
        let u = params.group("gen").expect("gen group");
        let v = params.group("disc").expect("disc group");
        let mut total = 0.0;
        for (x, a) in u.iter().zip(&self.target_gen) {
            total += 0.5 * (x - a) * (x - a);
        }
        for (x, b) in v.iter().zip(&self.target_disc) {
            total += 0.5 * (x - b) * (x - b);
        }
        total += self.coupling * u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        total
    }

    fn grad(&self, params: &ParamGroups, _samples: &[usize]) -> ParamGroups {
        let u = params.group("gen").expect("gen group");
        let v = params.group("disc").expect("disc group");
        let grad_gen: Vec<f64> = u
            .iter()
            .zip(&self.target_gen)
            .zip(v)
            .map(|((x, a), y)| (x - a) + self.coupling * y)
            .collect();
        let grad_disc: Vec<f64> = v
            .iter()
            .zip(&self.target_disc)
            .zip(u)
            .map(|((y, b), x)| (y - b) + self.coupling * x)
            .collect();
        let mut map = BTreeMap::new();
        map.insert("gen".to_string(), grad_gen);
        map.insert("disc".to_string(), grad_disc);
        ParamGroups::from_map(map)
    }
}
