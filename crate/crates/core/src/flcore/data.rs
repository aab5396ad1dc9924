use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    /// Class indices in `[0, num_classes)`.
    Classes { labels: Vec<u32>, num_classes: usize },
    Real(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes {
                labels,
                num_classes,
            } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
            Targets::Real(v) => Targets::Real(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Row-major feature matrix with one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    name: String,
    features: Vec<f64>,
    n_features: usize,
    targets: Targets,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<f64>,
        n_features: usize,
        targets: Targets,
    ) -> Result<Self> {
        let n = targets.len();
        if n == 0 {
            return Err(Error::param("dataset must contain at least one sample"));
        }
        if n_features == 0 || features.len() != n * n_features {
            return Err(Error::param(format!(
                "feature matrix has {} values, expected {n} x {n_features}",
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dataset features".into()));
        }
        match &targets {
            Targets::Classes {
                labels,
                num_classes,
            } => {
                if let Some(bad) = labels.iter().find(|&&l| l as usize >= *num_classes) {
                    return Err(Error::param(format!(
                        "label {bad} outside [0, {num_classes})"
                    )));
                }
            }
            Targets::Real(v) => {
                if v.iter().any(|t| !t.is_finite()) {
                    return Err(Error::Numeric("dataset targets".into()));
                }
            }
        }
        Ok(LabeledDataset {
            name: name.into(),
            features,
            n_features,
            targets,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.targets {
            Targets::Classes { num_classes, .. } => Some(num_classes),
            Targets::Real(_) => None,
        }
    }

    pub(crate) fn class(&self, i: usize) -> Option<usize> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels[i] as usize),
            Targets::Real(_) => None,
        }
    }

    pub(crate) fn real(&self, i: usize) -> Option<f64> {
        match &self.targets {
            Targets::Real(v) => Some(v[i]),
            Targets::Classes { .. } => None,
        }
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<LabeledDataset> {
        let mut features = Vec::with_capacity(idx.len() * self.n_features);
        for &i in idx {
            if i >= self.len() {
                return Err(Error::param(format!("row {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
        }
        LabeledDataset::new(
            self.name.clone(),
            features,
            self.n_features,
            self.targets.select(idx),
        )
    }

    /// Shuffles and splits into `(train, validation)`; the validation part
    /// gets `round(len * fraction)` rows, at least one of each side.
    pub fn split<R: Rng + ?Sized>(
        &self,
        validation_fraction: f64,
        rng: &mut R,
    ) -> Result<(LabeledDataset, LabeledDataset)> {
        if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
            return Err(Error::param("validation fraction must lie in (0, 1)"));
        }
        if self.len() < 2 {
            return Err(Error::param("need at least two rows to split"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let n_val = ((self.len() as f64 * validation_fraction).round() as usize).clamp(1, self.len() - 1);
        let (val, train) = idx.split_at(n_val);
        Ok((self.subset(train)?, self.subset(val)?))
    }

    /// Stacks datasets with identical feature width and target kind.
    pub fn concat(parts: &[LabeledDataset]) -> Result<LabeledDataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::param("nothing to concatenate"))?;
        let mut features = Vec::new();
        let mut targets = match &first.targets {
            Targets::Classes { num_classes, .. } => Targets::Classes {
                labels: Vec::new(),
                num_classes: *num_classes,
            },
            Targets::Real(_) => Targets::Real(Vec::new()),
        };
        for part in parts {
            if part.n_features != first.n_features {
                return Err(Error::DimensionMismatch {
                    expected: first.n_features,
                    got: part.n_features,
                });
            }
            features.extend_from_slice(&part.features);
            match (&mut targets, &part.targets) {
                (Targets::Classes { labels, .. }, Targets::Classes { labels: l, .. }) => {
                    labels.extend_from_slice(l)
                }
                (Targets::Real(v), Targets::Real(w)) => v.extend_from_slice(w),
                _ => return Err(Error::param("cannot mix class and real targets")),
            }
        }
        LabeledDataset::new(first.name.clone(), features, first.n_features, targets)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionScheme {
    /// Sizes differ by at most one.
    Uniform,
    /// Sizes proportional to a symmetric Dirichlet(1) draw, each at least one.
    RandomSized,
}

fn part_sizes<R: Rng + ?Sized>(total: usize, n: usize, scheme: PartitionScheme, rng: &mut R) -> Vec<usize> {
    match scheme {
        PartitionScheme::Uniform => (0..n).map(|i| total / n + usize::from(i < total % n)).collect(),
        PartitionScheme::RandomSized => {
            let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
            let sum: f64 = draws.iter().sum();
            let spare = total - n;
            let shares: Vec<f64> = draws.iter().map(|d| d / sum * spare as f64).collect();
            let mut sizes: Vec<usize> = shares.iter().map(|s| 1 + s.floor() as usize).collect();
            let mut left = total - sizes.iter().sum::<usize>();
            // largest remainder, ties by index
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                let ra = shares[a] - shares[a].floor();
                let rb = shares[b] - shares[b].floor();
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            for &i in order.iter().cycle() {
                if left == 0 {
                    break;
                }
                sizes[i] += 1;
                left -= 1;
            }
            sizes
        }
    }
}

/// Splits a shuffled copy of `data` into `n` disjoint parts covering it.
pub fn partition<R: Rng + ?Sized>(
    data: &LabeledDataset,
    n: usize,
    scheme: PartitionScheme,
    rng: &mut R,
) -> Result<Vec<LabeledDataset>> {
    if n == 0 || n > data.len() {
        return Err(Error::param(format!(
            "cannot split {} rows among {n} devices",
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    let sizes = part_sizes(data.len(), n, scheme, rng);
    let mut parts = Vec::with_capacity(n);
    let mut start = 0;
    for size in sizes {
        parts.push(data.subset(&idx[start..start + size])?);
        start += size;
    }
    Ok(parts)
}

/// Per-device weights proportional to data size, normalized to mean one.
pub fn data_weights(sizes: &[usize]) -> Vec<f64> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0.0; sizes.len()];
    }
    let scale = sizes.len() as f64 / total as f64;
    sizes.iter().map(|&s| s as f64 * scale).collect()
}

/// Gaussian clusters: class centres drawn from N(0, I), samples from
/// N(centre, spread^2 I).
pub fn synth_blobs<R: Rng + ?Sized>(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    if classes < 2 || per_class == 0 || dim == 0 {
        return Err(Error::param(format!(
            "blobs need >= 2 classes, >= 1 sample per class and dim >= 1 (got {classes}, {per_class}, {dim})"
        )));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::param("spread must be >= 0"));
    }
    let centres: Vec<f64> = (0..classes * dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut features = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for i in 0..classes * per_class {
        let c = i % classes;
        for j in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            features.push(centres[c * dim + j] + spread * z);
        }
        labels.push(c as u32);
    }
    LabeledDataset::new(
        "blobs",
        features,
        dim,
        Targets::Classes {
            labels,
            num_classes: classes,
        },
    )
}

/// `y = w.x + b + noise * z` with standard normal features, weights and
/// bias. Returns the dataset and the generating `[w, b]`.
pub fn synth_linear<R: Rng + ?Sized>(
    n: usize,
    dim: usize,
    noise: f64,
    rng: &mut R,
) -> Result<(LabeledDataset, Vec<f64>)> {
    if n == 0 || dim == 0 {
        return Err(Error::param("linear data needs n >= 1 and dim >= 1"));
    }
    let truth: Vec<f64> = (0..=dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut features = Vec::with_capacity(n * dim);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let mut y = truth[dim];
        for t in truth.iter().take(dim) {
            let x: f64 = rng.sample(StandardNormal);
            features.push(x);
            y += t * x;
        }
        let z: f64 = rng.sample(StandardNormal);
        targets.push(y + noise * z);
    }
    Ok((
        LabeledDataset::new("linear", features, dim, Targets::Real(targets))?,
        truth,
    ))
}
