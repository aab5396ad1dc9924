//! Server/peer aggregation rules: weighted mean, Krum / multi-Krum and
//! coordinate-wise median.

use serde::{Deserialize, Serialize};

use crate::flcore::ParamVector;
use crate::{Error, Result};

/// A set of received models keyed by sender id.
#[derive(Debug, Clone, Default)]
pub struct UpdateSet {
    entries: Vec<(usize, ParamVector, f64)>,
}

impl UpdateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, device: usize, params: ParamVector, weight: f64) {
        self.entries.push((device, params, weight));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, ParamVector, f64)] {
        &self.entries
    }

    fn dim(&self) -> Result<usize> {
        let Some((_, first, _)) = self.entries.first() else {
            return Err(Error::InsufficientClients {
                required: 1,
                got: 0,
            });
        };
        let dim = first.dim();
        for (_, p, _) in &self.entries {
            p.check_dim(dim)?;
        }
        Ok(dim)
    }
}

impl FromIterator<(usize, ParamVector, f64)> for UpdateSet {
    fn from_iter<T: IntoIterator<Item = (usize, ParamVector, f64)>>(iter: T) -> Self {
        UpdateSet {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Weighted (by the per-entry weight) or plain mean.
pub fn fedavg(set: &UpdateSet, weighted: bool) -> Result<ParamVector> {
    let dim = set.dim()?;
    let total: f64 = if weighted {
        set.entries.iter().map(|e| e.2).sum()
    } else {
        set.len() as f64
    };
    if weighted && set.entries.iter().any(|e| !(e.2.is_finite() && e.2 >= 0.0)) {
        return Err(Error::param("aggregation weights must be finite and non-negative"));
    }
    if total <= 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    let mut out = vec![0.0; dim];
    for (_, p, w) in &set.entries {
        let c = if weighted { *w / total } else { 1.0 / total };
        for (o, v) in out.iter_mut().zip(p.as_slice()) {
            *o += c * v;
        }
    }
    ParamVector::new(out)
}

/// Krum scores: for each entry, the sum of squared distances to its
/// `n - f - 2` nearest other entries.
pub fn krum_scores(set: &UpdateSet, f: usize) -> Result<Vec<f64>> {
    set.dim()?;
    let n = set.len();
    if n < f + 3 {
        return Err(Error::InsufficientClients {
            required: f + 3,
            got: n,
        });
    }
    let k = n - f - 2;
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = set.entries[i].1.distance_sq(&set.entries[j].1);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok((0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[i * n + j]).collect();
            row.sort_by(f64::total_cmp);
            row[..k].iter().sum()
        })
        .collect())
}

/// Multi-Krum: averages the `m` lowest-scoring entries (ties go to the lower
/// device id). `m = 1` is plain Krum and returns the selected model itself.
pub fn krum(set: &UpdateSet, f: usize, m: usize) -> Result<ParamVector> {
    let scores = krum_scores(set, f)?;
    let n = set.len();
    if m == 0 || m > n {
        return Err(Error::param(format!("multi-Krum m must be in 1..={n}, got {m}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .total_cmp(&scores[b])
            .then(set.entries[a].0.cmp(&set.entries[b].0))
    });
    let mut chosen: Vec<usize> = order[..m].to_vec();
    chosen.sort_by_key(|&i| set.entries[i].0);
    if m == 1 {
        return Ok(set.entries[chosen[0]].1.clone());
    }
    let sub: UpdateSet = chosen.iter().map(|&i| set.entries[i].clone()).collect();
    fedavg(&sub, false)
}

/// Coordinate-wise median; even counts take the mean of the middle pair.
pub fn median(set: &UpdateSet) -> Result<ParamVector> {
    let dim = set.dim()?;
    let n = set.len();
    let mut col = vec![0.0; n];
    let mut out = Vec::with_capacity(dim);
    for c in 0..dim {
        for (slot, (_, p, _)) in col.iter_mut().zip(&set.entries) {
            *slot = p.as_slice()[c];
        }
        col.sort_by(f64::total_cmp);
        out.push(if n % 2 == 1 {
            col[n / 2]
        } else {
            0.5 * (col[n / 2 - 1] + col[n / 2])
        });
    }
    ParamVector::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Fedavg,
    Krum,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct AggregationRule {
    pub kind: RuleKind,
    /// Weight entries by their data share (mean only).
    pub weighted: bool,
    /// Tolerated faulty inputs; defaults to `floor((n - 3) / 2)`.
    pub krum_f: Option<usize>,
    /// Models averaged by multi-Krum; defaults to `max(1, n - f - 2)`.
    pub krum_m: Option<usize>,
}

impl Default for AggregationRule {
    fn default() -> Self {
        AggregationRule {
            kind: RuleKind::Fedavg,
            weighted: true,
            krum_f: None,
            krum_m: None,
        }
    }
}

impl AggregationRule {
    pub fn fedavg(weighted: bool) -> Self {
        AggregationRule {
            kind: RuleKind::Fedavg,
            weighted,
            ..Self::default()
        }
    }

    pub fn krum(f: Option<usize>, m: Option<usize>) -> Self {
        AggregationRule {
            kind: RuleKind::Krum,
            weighted: false,
            krum_f: f,
            krum_m: m,
        }
    }

    pub fn median() -> Self {
        AggregationRule {
            kind: RuleKind::Median,
            weighted: false,
            ..Self::default()
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            RuleKind::Fedavg if self.weighted => "fedavg-weighted",
            RuleKind::Fedavg => "fedavg",
            RuleKind::Krum => "krum",
            RuleKind::Median => "median",
        }
    }

    /// Resolved `(f, m)` for a set of `n` entries.
    pub fn krum_params(&self, n: usize) -> (usize, usize) {
        let f = self.krum_f.unwrap_or(n.saturating_sub(3) / 2);
        let m = self.krum_m.unwrap_or((n.saturating_sub(f + 2)).max(1));
        (f, m.min(n.max(1)))
    }

    pub fn apply(&self, set: &UpdateSet) -> Result<ParamVector> {
        match self.kind {
            RuleKind::Fedavg => fedavg(set, self.weighted),
            RuleKind::Krum => {
                let (f, m) = self.krum_params(set.len());
                krum(set, f, m)
            }
            RuleKind::Median => median(set),
        }
    }

    /// Like [`apply`](Self::apply), but sets too small for Krum fall back to
    /// the plain mean.
    pub fn apply_lenient(&self, set: &UpdateSet) -> Result<ParamVector> {
        if self.kind == RuleKind::Krum {
            let (f, _) = self.krum_params(set.len());
            if set.len() < f + 3 {
                return fedavg(set, false);
            }
        }
        self.apply(set)
    }
}
