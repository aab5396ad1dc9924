use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::{LabeledDataset, Targets};
use super::ParamVector;
use crate::{Error, Result};

/// Model families and their parameter layouts.
///
/// Layouts (all row-major, flattened in this order):
/// - linear regression / squared SVM: `w[inputs]`, `b`
/// - softmax: `W[inputs][classes]`, `b[classes]`
/// - MLP (ReLU hidden layer): `W1[inputs][hidden]`, `b1[hidden]`,
///   `W2[hidden][classes]`, `b2[classes]`
/// - k-means: `centroids[clusters][inputs]`
///
/// Weights are stored input-major so sparse inputs (most pixels of a digit
/// are zero) touch only the rows they need.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    LinearRegression { inputs: usize },
    SoftmaxClassifier { inputs: usize, classes: usize },
    MlpClassifier { inputs: usize, hidden: usize, classes: usize },
    SquaredSvm { inputs: usize },
    Kmeans { inputs: usize, clusters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    /// `None` for regression and clustering.
    pub accuracy: Option<f64>,
}

struct Sample<'a> {
    x: &'a [f64],
    class: Option<usize>,
    real: Option<f64>,
}

impl ModelSpec {
    pub fn inputs(&self) -> usize {
        match *self {
            ModelSpec::LinearRegression { inputs }
            | ModelSpec::SoftmaxClassifier { inputs, .. }
            | ModelSpec::MlpClassifier { inputs, .. }
            | ModelSpec::SquaredSvm { inputs }
            | ModelSpec::Kmeans { inputs, .. } => inputs,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ModelSpec::LinearRegression { inputs } | ModelSpec::SquaredSvm { inputs } => inputs + 1,
            ModelSpec::SoftmaxClassifier { inputs, classes } => (inputs + 1) * classes,
            ModelSpec::MlpClassifier {
                inputs,
                hidden,
                classes,
            } => inputs * hidden + hidden + hidden * classes + classes,
            ModelSpec::Kmeans { inputs, clusters } => inputs * clusters,
        }
    }

    pub fn is_classifier(&self) -> bool {
        !matches!(
            self,
            ModelSpec::LinearRegression { .. } | ModelSpec::Kmeans { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ModelSpec::LinearRegression { inputs } | ModelSpec::SquaredSvm { inputs } => inputs >= 1,
            ModelSpec::SoftmaxClassifier { inputs, classes } => inputs >= 1 && classes >= 2,
            ModelSpec::MlpClassifier {
                inputs,
                hidden,
                classes,
            } => inputs >= 1 && hidden >= 1 && classes >= 2,
            ModelSpec::Kmeans { inputs, clusters } => inputs >= 1 && clusters >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("inconsistent model layout {self:?}")))
        }
    }

    /// Checks that `data` fits this model.
    pub fn check_data(&self, data: &LabeledDataset) -> Result<()> {
        self.validate()?;
        if data.n_features() != self.inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs(),
                got: data.n_features(),
            });
        }
        match (self, data.targets()) {
            (ModelSpec::LinearRegression { .. }, Targets::Real(_)) | (ModelSpec::Kmeans { .. }, _) => Ok(()),
            (
                ModelSpec::SoftmaxClassifier { classes, .. } | ModelSpec::MlpClassifier { classes, .. },
                Targets::Classes { num_classes, .. },
            ) if num_classes <= classes => Ok(()),
            (ModelSpec::SquaredSvm { .. }, Targets::Classes { num_classes: 2, .. }) => Ok(()),
            (ModelSpec::SquaredSvm { .. }, Targets::Real(v)) if v.iter().all(|&y| y == 1.0 || y == -1.0) => Ok(()),
            _ => Err(Error::param(format!(
                "dataset targets do not fit model {self:?}"
            ))),
        }
    }

    /// Random starting point: He-normal first layer for the MLP, Glorot for
    /// its output layer, standard normal centroids for k-means, zeros for the
    /// linear models.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut w = vec![0.0; self.dim()];
        match *self {
            ModelSpec::MlpClassifier {
                inputs,
                hidden,
                classes,
            } => {
                let s1 = (2.0 / inputs as f64).sqrt();
                for v in &mut w[..inputs * hidden] {
                    *v = s1 * rng.sample::<f64, _>(StandardNormal);
                }
                let s2 = (2.0 / (hidden + classes) as f64).sqrt();
                let off = inputs * hidden + hidden;
                for v in &mut w[off..off + hidden * classes] {
                    *v = s2 * rng.sample::<f64, _>(StandardNormal);
                }
            }
            ModelSpec::Kmeans { .. } => {
                for v in &mut w {
                    *v = rng.sample(StandardNormal);
                }
            }
            _ => {}
        }
        ParamVector(w)
    }

    fn sample<'a>(data: &'a LabeledDataset, i: usize) -> Sample<'a> {
        Sample {
            x: data.row(i),
            class: data.class(i),
            real: data.real(i),
        }
    }

    /// Raw outputs for one input: prediction for regression/SVM, logits for
    /// classifiers, squared centroid distances for k-means.
    pub fn forward(&self, w: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
        w.check_dim(self.dim())?;
        if x.len() != self.inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs(),
                got: x.len(),
            });
        }
        let w = w.as_slice();
        Ok(match *self {
            ModelSpec::LinearRegression { .. } | ModelSpec::SquaredSvm { .. } => vec![affine(w, x)],
            ModelSpec::SoftmaxClassifier { inputs, classes } => softmax_logits(w, x, inputs, classes),
            ModelSpec::MlpClassifier {
                inputs,
                hidden,
                classes,
            } => {
                let mut h = vec![0.0; hidden];
                let mut z = vec![0.0; classes];
                mlp_forward(w, x, inputs, hidden, classes, &mut h, &mut z);
                z
            }
            ModelSpec::Kmeans { inputs, clusters } => (0..clusters)
                .map(|k| sq_dist(&w[k * inputs..(k + 1) * inputs], x))
                .collect(),
        })
    }

    /// Mean loss over rows `idx` of `data`.
    pub fn loss_on(&self, w: &ParamVector, data: &LabeledDataset, idx: &[usize]) -> Result<f64> {
        Ok(self.accumulate(w, data, idx, None)?.loss)
    }

    pub fn loss(&self, w: &ParamVector, data: &LabeledDataset) -> Result<f64> {
        self.loss_on(w, data, &(0..data.len()).collect::<Vec<_>>())
    }

    /// Analytic gradient of the mean loss over rows `idx`. For k-means the
    /// nearest-centroid assignments are held fixed.
    pub fn gradient_on(
        &self,
        w: &ParamVector,
        data: &LabeledDataset,
        idx: &[usize],
    ) -> Result<ParamVector> {
        if idx.is_empty() {
            return Err(Error::param("gradient over an empty batch"));
        }
        let mut g = vec![0.0; self.dim()];
        self.accumulate(w, data, idx, Some(&mut g))?;
        let scale = 1.0 / idx.len() as f64;
        for v in &mut g {
            *v *= scale;
        }
        let g = ParamVector(g);
        if !g.is_finite() {
            return Err(Error::Numeric("gradient".into()));
        }
        Ok(g)
    }

    pub fn gradient(&self, w: &ParamVector, data: &LabeledDataset) -> Result<ParamVector> {
        self.gradient_on(w, data, &(0..data.len()).collect::<Vec<_>>())
    }

    pub fn evaluate(&self, w: &ParamVector, data: &LabeledDataset) -> Result<Evaluation> {
        self.accumulate(w, data, &(0..data.len()).collect::<Vec<_>>(), None)
    }

    /// Sums per-sample losses (and gradients into `grad`, unscaled); returns
    /// the mean loss and the accuracy where it is defined.
    fn accumulate(
        &self,
        w: &ParamVector,
        data: &LabeledDataset,
        idx: &[usize],
        mut grad: Option<&mut Vec<f64>>,
    ) -> Result<Evaluation> {
        self.check_data(data)?;
        w.check_dim(self.dim())?;
        if idx.is_empty() {
            return Err(Error::param("empty sample set"));
        }
        let w = w.as_slice();
        let mut total = 0.0;
        let mut correct = 0usize;

        match *self {
            ModelSpec::LinearRegression { inputs } => {
                for &i in idx {
                    let s = Self::sample(data, i);
                    let y = s.real.expect("checked targets");
                    let r = affine(w, s.x) - y;
                    total += 0.5 * r * r;
                    if let Some(g) = grad.as_deref_mut() {
                        axpy_affine(g, r, s.x, inputs);
                    }
                }
            }
            ModelSpec::SquaredSvm { inputs } => {
                for &i in idx {
                    let s = Self::sample(data, i);
                    let y = svm_label(&s);
                    let yhat = affine(w, s.x);
                    let margin = (1.0 - y * yhat).max(0.0);
                    total += margin * margin;
                    if (yhat >= 0.0) == (y > 0.0) {
                        correct += 1;
                    }
                    if margin > 0.0 {
                        if let Some(g) = grad.as_deref_mut() {
                            axpy_affine(g, -2.0 * margin * y, s.x, inputs);
                        }
                    }
                }
            }
            ModelSpec::SoftmaxClassifier { inputs, classes } => {
                for &i in idx {
                    let s = Self::sample(data, i);
                    let y = s.class.expect("checked targets");
                    let mut z = softmax_logits(w, s.x, inputs, classes);
                    let (loss, hit) = cross_entropy_in_place(&mut z, y);
                    total += loss;
                    correct += usize::from(hit);
                    if let Some(g) = grad.as_deref_mut() {
                        // z now holds dL/dz
                        for (xi_idx, &xi) in s.x.iter().enumerate() {
                            if xi != 0.0 {
                                let row = &mut g[xi_idx * classes..(xi_idx + 1) * classes];
                                for (gv, dz) in row.iter_mut().zip(&z) {
                                    *gv += xi * dz;
                                }
                            }
                        }
                        let off = inputs * classes;
                        for (gv, dz) in g[off..off + classes].iter_mut().zip(&z) {
                            *gv += dz;
                        }
                    }
                }
            }
            ModelSpec::MlpClassifier {
                inputs,
                hidden,
                classes,
            } => {
                let mut h = vec![0.0; hidden];
                let mut z = vec![0.0; classes];
                let mut dh = vec![0.0; hidden];
                let b1 = inputs * hidden;
                let w2 = b1 + hidden;
                let b2 = w2 + hidden * classes;
                for &i in idx {
                    let s = Self::sample(data, i);
                    let y = s.class.expect("checked targets");
                    mlp_forward(w, s.x, inputs, hidden, classes, &mut h, &mut z);
                    let (loss, hit) = cross_entropy_in_place(&mut z, y);
                    total += loss;
                    correct += usize::from(hit);
                    if let Some(g) = grad.as_deref_mut() {
                        for (gv, dz) in g[b2..b2 + classes].iter_mut().zip(&z) {
                            *gv += dz;
                        }
                        for j in 0..hidden {
                            let a = h[j];
                            if a > 0.0 {
                                let wrow = &w[w2 + j * classes..w2 + (j + 1) * classes];
                                let grow = &mut g[w2 + j * classes..w2 + (j + 1) * classes];
                                let mut da = 0.0;
                                for c in 0..classes {
                                    grow[c] += a * z[c];
                                    da += wrow[c] * z[c];
                                }
                                dh[j] = da;
                            } else {
                                dh[j] = 0.0;
                            }
                        }
                        for (gv, d) in g[b1..b1 + hidden].iter_mut().zip(&dh) {
                            *gv += d;
                        }
                        for (xi_idx, &xi) in s.x.iter().enumerate() {
                            if xi != 0.0 {
                                let row = &mut g[xi_idx * hidden..(xi_idx + 1) * hidden];
                                for (gv, d) in row.iter_mut().zip(&dh) {
                                    *gv += xi * d;
                                }
                            }
                        }
                    }
                }
            }
            ModelSpec::Kmeans { inputs, clusters } => {
                for &i in idx {
                    let x = data.row(i);
                    let (k, d) = (0..clusters)
                        .map(|k| (k, sq_dist(&w[k * inputs..(k + 1) * inputs], x)))
                        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
                    total += d;
                    if let Some(g) = grad.as_deref_mut() {
                        let c = &w[k * inputs..(k + 1) * inputs];
                        for ((gv, cv), xv) in g[k * inputs..(k + 1) * inputs].iter_mut().zip(c).zip(x) {
                            *gv += 2.0 * (cv - xv);
                        }
                    }
                }
            }
        }

        let n = idx.len() as f64;
        let loss = total / n;
        if !loss.is_finite() {
            return Err(Error::Numeric("loss".into()));
        }
        Ok(Evaluation {
            loss,
            accuracy: self.is_classifier().then(|| correct as f64 / n),
        })
    }
}

fn affine(w: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    w[n] + w[..n].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

fn axpy_affine(g: &mut [f64], coef: f64, x: &[f64], inputs: usize) {
    for (gv, xv) in g[..inputs].iter_mut().zip(x) {
        *gv += coef * xv;
    }
    g[inputs] += coef;
}

fn svm_label(s: &Sample<'_>) -> f64 {
    match (s.class, s.real) {
        (Some(c), _) => 2.0 * c as f64 - 1.0,
        (None, Some(y)) => y,
        _ => unreachable!("targets checked"),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn softmax_logits(w: &[f64], x: &[f64], inputs: usize, classes: usize) -> Vec<f64> {
    let mut z = w[inputs * classes..inputs * classes + classes].to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            for (zc, wc) in z.iter_mut().zip(&w[i * classes..(i + 1) * classes]) {
                *zc += xi * wc;
            }
        }
    }
    z
}

/// Fills `h` with hidden activations and `z` with logits.
fn mlp_forward(
    w: &[f64],
    x: &[f64],
    inputs: usize,
    hidden: usize,
    classes: usize,
    h: &mut [f64],
    z: &mut [f64],
) {
    let b1 = inputs * hidden;
    let w2 = b1 + hidden;
    let b2 = w2 + hidden * classes;
    h.copy_from_slice(&w[b1..b1 + hidden]);
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            for (hj, wj) in h.iter_mut().zip(&w[i * hidden..(i + 1) * hidden]) {
                *hj += xi * wj;
            }
        }
    }
    for hj in h.iter_mut() {
        *hj = hj.max(0.0);
    }
    z.copy_from_slice(&w[b2..b2 + classes]);
    for (j, &a) in h.iter().enumerate() {
        if a > 0.0 {
            for (zc, wc) in z.iter_mut().zip(&w[w2 + j * classes..w2 + (j + 1) * classes]) {
                *zc += a * wc;
            }
        }
    }
}

/// Cross-entropy of logits `z` against class `y` via log-sum-exp. Replaces
/// `z` with `softmax(z) - onehot(y)` and reports whether argmax hits `y`.
fn cross_entropy_in_place(z: &mut [f64], y: usize) -> (f64, bool) {
    let (arg, max) = z
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let mut sum = 0.0;
    for v in z.iter() {
        sum += (v - max).exp();
    }
    let lse = max + sum.ln();
    let loss = lse - z[y];
    for v in z.iter_mut() {
        *v = (*v - lse).exp();
    }
    z[y] -= 1.0;
    (loss, arg == y)
}
