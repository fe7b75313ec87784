//! Pairwise representation constraints: fixed/maximum, absolute/relative
//! distance penalties on bottleneck representations, their generalized
//! gradients, constraint-set construction from side information, and
//! sampling for stochastic training.
//!
//! Penalties (d = ||y_i - y_j||, target t, with y_j the stored anchor for
//! absolute kinds):
//!
//! * FAD / FRD: `(d - t)^2`
//! * MAD / MRD: `max(d - t, 0)^2`
//!
//! The gradient with respect to `y_i` is `2 (d - t) (y_i - y_j) / d` for the
//! fixed kinds and `2 max(d - t, 0) (y_i - y_j) / d` for the maximum kinds;
//! at `d = 0` the zero vector is returned (a valid element of the
//! generalized gradient, and the fixed point of a satisfied anchor).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    /// Fixed absolute distance to a known anchor vector.
    Fad,
    /// Fixed relative distance between two learned representations.
    Frd,
    /// Maximum absolute distance to a known anchor vector.
    Mad,
    /// Maximum relative distance between two learned representations.
    Mrd,
}

impl ConstraintKind {
    pub fn is_absolute(&self) -> bool {
        matches!(self, ConstraintKind::Fad | ConstraintKind::Mad)
    }

    pub fn is_maximum(&self) -> bool {
        matches!(self, ConstraintKind::Mad | ConstraintKind::Mrd)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintKind::Fad => "FAD",
            ConstraintKind::Frd => "FRD",
            ConstraintKind::Mad => "MAD",
            ConstraintKind::Mrd => "MRD",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "FAD" | "fad" => Ok(ConstraintKind::Fad),
            "FRD" | "frd" => Ok(ConstraintKind::Frd),
            "MAD" | "mad" => Ok(ConstraintKind::Mad),
            "MRD" | "mrd" => Ok(ConstraintKind::Mrd),
            other => Err(Error::Constraints(format!("unknown constraint kind '{other}'"))),
        }
    }
}

/// One pairwise constraint. Absolute kinds carry an anchor vector and no
/// second index; relative kinds carry a second index and no anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub i: usize,
    pub j: Option<usize>,
    pub anchor: Option<Vec<f64>>,
    /// Target distance, in representation units.
    pub target: f64,
    pub weight: f64,
}

impl Constraint {
    pub fn absolute(kind: ConstraintKind, i: usize, anchor: Vec<f64>, target: f64, weight: f64) -> Result<Self> {
        if !kind.is_absolute() {
            return Err(Error::Constraints(format!("{} is not an absolute kind", kind.as_str())));
        }
        let c = Constraint { kind, i, j: None, anchor: Some(anchor), target, weight };
        c.validate()?;
        Ok(c)
    }

    pub fn relative(kind: ConstraintKind, i: usize, j: usize, target: f64, weight: f64) -> Result<Self> {
        if kind.is_absolute() {
            return Err(Error::Constraints(format!("{} is not a relative kind", kind.as_str())));
        }
        let c = Constraint { kind, i, j: Some(j), anchor: None, target, weight };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target < 0.0 || !self.target.is_finite() {
            return Err(Error::Constraints(format!("target distance {} invalid", self.target)));
        }
        if self.weight < 0.0 || !self.weight.is_finite() {
            return Err(Error::Constraints(format!("weight {} invalid", self.weight)));
        }
        if self.kind.is_absolute() {
            if self.anchor.is_none() || self.j.is_some() {
                return Err(Error::Constraints(format!(
                    "{} constraint must carry an anchor and no second index",
                    self.kind.as_str()
                )));
            }
        } else {
            if self.anchor.is_some() || self.j.is_none() {
                return Err(Error::Constraints(format!(
                    "{} constraint must carry a second index and no anchor",
                    self.kind.as_str()
                )));
            }
            if self.j == Some(self.i) {
                return Err(Error::Constraints("relative constraint with i == j".into()));
            }
        }
        Ok(())
    }
}

/// Evaluates the penalty of a constraint for the representation(s) involved.
/// `y_j` must be supplied iff the kind is relative.
pub fn penalty(c: &Constraint, y_i: &[f64], y_j: Option<&[f64]>) -> Result<f64> {
    let other = resolve_other(c, y_j)?;
    let d = distance(y_i, other);
    let excess = d - c.target;
    let v = if c.kind.is_maximum() { excess.max(0.0) } else { excess };
    Ok(v * v)
}

/// Generalized gradient of the penalty with respect to `y_i` (and `y_j` for
/// relative kinds, which is exactly the negation). No gradient flows to an
/// anchor.
pub fn penalty_gradient(
    c: &Constraint,
    y_i: &[f64],
    y_j: Option<&[f64]>,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let other = resolve_other(c, y_j)?;
    let d = distance(y_i, other);
    let excess = d - c.target;
    let factor = if c.kind.is_maximum() { 2.0 * excess.max(0.0) } else { 2.0 * excess };

    let dim = y_i.len();
    let mut grad_i = vec![0.0; dim];
    if d > 0.0 && factor != 0.0 {
        for ((g, a), b) in grad_i.iter_mut().zip(y_i).zip(other) {
            *g = factor * (a - b) / d;
        }
    }
    let grad_j = if c.kind.is_absolute() {
        None
    } else {
        Some(grad_i.iter().map(|g| -g).collect())
    };
    Ok((grad_i, grad_j))
}

fn resolve_other<'a>(c: &'a Constraint, y_j: Option<&'a [f64]>) -> Result<&'a [f64]> {
    if c.kind.is_absolute() {
        if y_j.is_some() {
            return Err(Error::Constraints(format!(
                "{} constraint takes no y_j operand",
                c.kind.as_str()
            )));
        }
        Ok(c.anchor.as_deref().expect("validated absolute constraint has an anchor"))
    } else {
        y_j.ok_or_else(|| {
            Error::Constraints(format!("{} constraint needs the y_j operand", c.kind.as_str()))
        })
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    crate::mat::dist_sq(a, b).sqrt()
}

/// An ordered collection of constraints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(constraints: Vec<Constraint>) -> Result<Self> {
        for c in &constraints {
            c.validate()?;
        }
        Ok(ConstraintSet { constraints })
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn count(&self, kind: ConstraintKind) -> usize {
        self.constraints.iter().filter(|c| c.kind == kind).count()
    }

    /// Appends all constraints of `other`.
    pub fn extend(&mut self, other: ConstraintSet) {
        self.constraints.extend(other.constraints);
    }

    /// Checks that every datapoint index is below `n`.
    pub fn validate_indices(&self, n: usize) -> Result<()> {
        for c in &self.constraints {
            if c.i >= n {
                return Err(Error::IndexOutOfRange { index: c.i, len: n });
            }
            if let Some(j) = c.j {
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, len: n });
                }
            }
        }
        Ok(())
    }
}

/// Builds one FAD constraint per anchor with target 0 and the anchor's true
/// (x, y) coordinates as the pinned vector, so the chart lives in meters.
pub fn build_anchor_constraints(
    anchor_indices: &[usize],
    positions: &[[f64; 3]],
    weight: f64,
) -> Result<ConstraintSet> {
    let mut constraints = Vec::with_capacity(anchor_indices.len());
    for &idx in anchor_indices {
        let p = positions
            .get(idx)
            .ok_or(Error::IndexOutOfRange { index: idx, len: positions.len() })?;
        constraints.push(Constraint::absolute(
            ConstraintKind::Fad,
            idx,
            vec![p[0], p[1]],
            0.0,
            weight,
        )?);
    }
    Ok(ConstraintSet { constraints })
}

/// Builds MRD constraints over trajectory pairs `(k, k+l)` for lags
/// `1 <= l <= lag_max`, with target `l * d_max`: the distance bound grows
/// with the number of elapsed steps.
pub fn build_trajectory_constraints(
    trajectory_indices: &[usize],
    d_max: f64,
    lag_max: usize,
    weight: f64,
) -> Result<ConstraintSet> {
    if trajectory_indices.len() < 2 {
        return Err(Error::Constraints("trajectory needs at least 2 points".into()));
    }
    if d_max <= 0.0 {
        return Err(Error::Constraints("d_max must be positive".into()));
    }
    if lag_max < 1 {
        return Err(Error::Constraints("lag_max must be at least 1".into()));
    }
    let k = trajectory_indices.len();
    let mut constraints = Vec::new();
    for start in 0..k {
        for lag in 1..=lag_max {
            let Some(&end) = trajectory_indices.get(start + lag) else { break };
            constraints.push(Constraint::relative(
                ConstraintKind::Mrd,
                trajectory_indices[start],
                end,
                lag as f64 * d_max,
                weight,
            )?);
        }
    }
    Ok(ConstraintSet { constraints })
}

/// Uniform sample of `batch_size` constraint indices, with replacement.
/// An empty set yields an empty batch (an unconstrained step).
pub fn sample_constraints(set: &ConstraintSet, batch_size: usize, rng: &mut Rng) -> Vec<usize> {
    if set.is_empty() {
        return Vec::new();
    }
    (0..batch_size).map(|_| rng.index(set.len())).collect()
}

/// Per-kind global penalty weights; these multiply the per-constraint
/// weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lambdas {
    pub fad: f64,
    pub frd: f64,
    pub mad: f64,
    pub mrd: f64,
}

impl Default for Lambdas {
    fn default() -> Self {
        Lambdas { fad: 1.0, frd: 1.0, mad: 1.0, mrd: 1.0 }
    }
}

impl Lambdas {
    pub fn get(&self, kind: ConstraintKind) -> f64 {
        match kind {
            ConstraintKind::Fad => self.fad,
            ConstraintKind::Frd => self.frd,
            ConstraintKind::Mad => self.mad,
            ConstraintKind::Mrd => self.mrd,
        }
    }
}

/// Embeddings of the datapoints a constraint batch touches: `indices` is
/// sorted and unique, `rows` holds the corresponding representations.
#[derive(Clone, Debug)]
pub struct IndexedEmbeddings {
    pub indices: Vec<usize>,
    pub rows: Mat,
}

impl IndexedEmbeddings {
    fn lookup(&self, index: usize) -> Result<usize> {
        self.indices
            .binary_search(&index)
            .map_err(|_| Error::Constraints(format!("no embedding supplied for index {index}")))
    }
}

/// Collects the unique datapoint indices referenced by a constraint batch,
/// in ascending order.
pub fn referenced_indices(set: &ConstraintSet, batch: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = Vec::with_capacity(2 * batch.len());
    for &b in batch {
        let c = &set.constraints[b];
        idx.push(c.i);
        if let Some(j) = c.j {
            idx.push(j);
        }
    }
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// Accumulates the mean weighted penalty gradient of a constraint batch with
/// respect to each referenced embedding, in a fixed order. Returns the
/// per-index gradients (aligned with `embeddings.indices`) and the mean
/// weighted penalty for logging.
pub fn accumulate_bottleneck_gradients(
    set: &ConstraintSet,
    batch: &[usize],
    embeddings: &IndexedEmbeddings,
    lambdas: &Lambdas,
) -> Result<(Mat, f64)> {
    let dim = embeddings.rows.cols();
    let mut grads = Mat::zeros(embeddings.indices.len(), dim);
    let mut total_penalty = 0.0;
    if batch.is_empty() {
        return Ok((grads, 0.0));
    }
    let scale = 1.0 / batch.len() as f64;
    for &b in batch {
        let c = &set.constraints[b];
        let w = lambdas.get(c.kind) * c.weight * scale;
        let row_i = embeddings.lookup(c.i)?;
        let y_i = embeddings.rows.row(row_i).to_vec();
        let (y_j, row_j) = match c.j {
            Some(j) => {
                let row_j = embeddings.lookup(j)?;
                (Some(embeddings.rows.row(row_j).to_vec()), Some(row_j))
            }
            None => (None, None),
        };
        total_penalty += w * penalty(c, &y_i, y_j.as_deref())?;
        let (g_i, g_j) = penalty_gradient(c, &y_i, y_j.as_deref())?;
        for (acc, g) in grads.row_mut(row_i).iter_mut().zip(&g_i) {
            *acc += w * g;
        }
        if let (Some(g_j), Some(row_j)) = (g_j, row_j) {
            for (acc, g) in grads.row_mut(row_j).iter_mut().zip(&g_j) {
                *acc += w * g;
            }
        }
    }
    Ok((grads, total_penalty))
}

/// Writes `constraints.csv`: `kind,i,j,anchor_u,anchor_v,d,weight` with `j`
/// empty for absolute kinds and the anchor columns empty for relative ones.
pub fn write_constraints_csv(set: &ConstraintSet, path: &Path) -> Result<()> {
    let mut out = String::from("kind,i,j,anchor_u,anchor_v,d,weight\n");
    for c in &set.constraints {
        let j = c.j.map(|j| j.to_string()).unwrap_or_default();
        let (au, av) = match &c.anchor {
            Some(a) => (a[0].to_string(), a[1].to_string()),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.kind.as_str(),
            c.i,
            j,
            au,
            av,
            c.target,
            c.weight
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a `constraints.csv` written by [`write_constraints_csv`].
pub fn read_constraints_csv(path: &Path) -> Result<ConstraintSet> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(f);
    let mut constraints = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if lineno == 0 {
            if line.trim() != "kind,i,j,anchor_u,anchor_v,d,weight" {
                return Err(Error::format(path, "unexpected constraints.csv header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::format(path, format!("line {}: expected 7 fields", lineno + 1)));
        }
        let bad = |msg: &str| Error::format(path, format!("line {}: {msg}", lineno + 1));
        let kind = ConstraintKind::parse(fields[0].trim())?;
        let i: usize = fields[1].trim().parse().map_err(|_| bad("bad i"))?;
        let target: f64 = fields[5].trim().parse().map_err(|_| bad("bad d"))?;
        let weight: f64 = fields[6].trim().parse().map_err(|_| bad("bad weight"))?;
        let c = if kind.is_absolute() {
            let au: f64 = fields[3].trim().parse().map_err(|_| bad("bad anchor_u"))?;
            let av: f64 = fields[4].trim().parse().map_err(|_| bad("bad anchor_v"))?;
            Constraint::absolute(kind, i, vec![au, av], target, weight)?
        } else {
            let j: usize = fields[2].trim().parse().map_err(|_| bad("bad j"))?;
            Constraint::relative(kind, i, j, target, weight)?
        };
        constraints.push(c);
    }
    Ok(ConstraintSet { constraints })
}
