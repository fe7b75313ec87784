//! Embedding quality metrics: trustworthiness TW(K), continuity CT(K), and
//! Kruskal's stress with optimal uniform distance scaling.
//!
//! TW penalizes false neighbors the embedding introduces; CT penalizes true
//! neighbors the embedding loses; KS measures global distance distortion
//! after the best uniform rescaling of the embedding distances.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::{dist_sq, Mat};

/// All-pairs neighbor ordering for a point set.
///
/// `order[i]` lists every other index sorted by ascending distance to `i`
/// (ties broken by ascending index); `rank[i][j]` gives the 1-based position
/// of `j` in that list, with `rank[i][i] = 0` as a sentinel.
#[derive(Clone, Debug)]
pub struct RankTable {
    pub order: Vec<Vec<u32>>,
    pub rank: Vec<Vec<u32>>,
}

/// Computes exact all-pairs ranks under the Euclidean metric.
/// Duplicate rows are allowed; the index tie-break keeps the result
/// deterministic.
pub fn neighbor_ranks(points: &Mat) -> Result<RankTable> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::Metrics("need at least two points to rank".into()));
    }
    if !points.is_finite() {
        return Err(Error::Metrics("points contain non-finite values".into()));
    }
    let mut order = Vec::with_capacity(n);
    let mut rank = vec![vec![0u32; n]; n];
    let mut scratch: Vec<(f64, u32)> = Vec::with_capacity(n - 1);
    for (i, rank_row) in rank.iter_mut().enumerate() {
        scratch.clear();
        let pi = points.row(i);
        for j in 0..n {
            if j != i {
                scratch.push((dist_sq(pi, points.row(j)), j as u32));
            }
        }
        scratch.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let row: Vec<u32> = scratch.iter().map(|&(_, j)| j).collect();
        for (pos, &j) in row.iter().enumerate() {
            rank_row[j as usize] = (pos + 1) as u32;
        }
        order.push(row);
    }
    Ok(RankTable { order, rank })
}

fn check_k(k: usize, n: usize) -> Result<()> {
    // Normalization positivity requires K < (2N-1)/3.
    if k < 1 || 3 * k + 1 >= 2 * n {
        return Err(Error::KOutOfRange { k, n });
    }
    Ok(())
}

fn tw_from_tables(reference: &RankTable, embedding: &RankTable, k: usize) -> f64 {
    let n = reference.order.len();
    let mut sum = 0u64;
    for i in 0..n {
        for &j in &embedding.order[i][..k] {
            let r = reference.rank[i][j as usize] as u64;
            if r > k as u64 {
                sum += r - k as u64;
            }
        }
    }
    let norm = n as f64 * k as f64 * (2 * n - 3 * k - 1) as f64;
    1.0 - 2.0 * sum as f64 / norm
}

/// TW(K): one minus the normalized penalty over embedding-space K-neighbors
/// that are not reference-space K-neighbors, weighted by their reference
/// rank excess.
pub fn trustworthiness(reference: &Mat, embedding: &Mat, k: usize) -> Result<f64> {
    check_inputs(reference, embedding)?;
    check_k(k, reference.rows())?;
    let r = neighbor_ranks(reference)?;
    let e = neighbor_ranks(embedding)?;
    Ok(tw_from_tables(&r, &e, k))
}

fn ct_from_tables(reference: &RankTable, embedding: &RankTable, k: usize) -> f64 {
    let n = reference.order.len();
    let mut sum = 0u64;
    for i in 0..n {
        for &j in &reference.order[i][..k] {
            let r_hat = embedding.rank[i][j as usize] as u64;
            if r_hat > k as u64 {
                sum += r_hat - k as u64;
            }
        }
    }
    let norm = n as f64 * k as f64 * (2 * n - 3 * k - 1) as f64;
    1.0 - 2.0 * sum as f64 / norm
}

/// CT(K): one minus the normalized penalty over reference-space K-neighbors
/// that are not embedding-space K-neighbors, weighted by their embedding
/// rank excess.
pub fn continuity(reference: &Mat, embedding: &Mat, k: usize) -> Result<f64> {
    check_inputs(reference, embedding)?;
    check_k(k, reference.rows())?;
    let r = neighbor_ranks(reference)?;
    let e = neighbor_ranks(embedding)?;
    Ok(ct_from_tables(&r, &e, k))
}

fn check_inputs(reference: &Mat, embedding: &Mat) -> Result<()> {
    if reference.rows() != embedding.rows() {
        return Err(Error::Metrics(format!(
            "reference has {} points but embedding has {}",
            reference.rows(),
            embedding.rows()
        )));
    }
    if reference.rows() < 2 {
        return Err(Error::Metrics("need at least two points".into()));
    }
    Ok(())
}

/// Kruskal's stress with the least-squares-optimal scaling
/// `beta = sum(d * d_hat) / sum(d_hat^2)`. The sums run over all ordered
/// pairs, including the zero-contribution diagonal.
pub fn kruskal_stress(reference: &Mat, embedding: &Mat) -> Result<f64> {
    check_inputs(reference, embedding)?;
    if !reference.is_finite() || !embedding.is_finite() {
        return Err(Error::Metrics("points contain non-finite values".into()));
    }
    let n = reference.rows();

    let mut sum_dd_hat = 0.0;
    let mut sum_d_sq = 0.0;
    let mut sum_d_hat_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = dist_sq(reference.row(i), reference.row(j)).sqrt();
            let d_hat = dist_sq(embedding.row(i), embedding.row(j)).sqrt();
            sum_dd_hat += d * d_hat;
            sum_d_sq += d * d;
            sum_d_hat_sq += d_hat * d_hat;
        }
    }
    if sum_d_sq == 0.0 {
        return Err(Error::DegenerateReference);
    }
    // A fully collapsed embedding has undefined scaling; stress is maximal.
    let beta = if sum_d_hat_sq > 0.0 { sum_dd_hat / sum_d_hat_sq } else { 0.0 };

    let mut num = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = dist_sq(reference.row(i), reference.row(j)).sqrt();
            let d_hat = dist_sq(embedding.row(i), embedding.row(j)).sqrt();
            let diff = d - beta * d_hat;
            num += diff * diff;
        }
    }
    Ok((num / sum_d_sq).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceSpace {
    TruePositions,
    FeatureSpace,
}

impl ReferenceSpace {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReferenceSpace::TruePositions => "true-positions",
            ReferenceSpace::FeatureSpace => "feature-space",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "true-positions" | "true_positions" => Ok(ReferenceSpace::TruePositions),
            "feature-space" | "feature_space" => Ok(ReferenceSpace::FeatureSpace),
            other => Err(Error::Metrics(format!("unknown reference space '{other}'"))),
        }
    }
}

/// TW/CT per neighborhood size plus the scalar KS for one embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_k: Vec<(usize, f64, f64)>,
    pub kruskal_stress: f64,
    pub reference: ReferenceSpace,
    pub num_points: usize,
}

impl MetricsReport {
    /// Evaluates TW/CT at each K plus KS, sharing one pair of rank tables.
    pub fn compute(
        reference: &Mat,
        embedding: &Mat,
        ks: &[usize],
        space: ReferenceSpace,
    ) -> Result<MetricsReport> {
        check_inputs(reference, embedding)?;
        let n = reference.rows();
        for &k in ks {
            check_k(k, n)?;
        }
        let rt = neighbor_ranks(reference)?;
        let et = neighbor_ranks(embedding)?;
        let per_k = ks
            .iter()
            .map(|&k| (k, tw_from_tables(&rt, &et, k), ct_from_tables(&rt, &et, k)))
            .collect();
        Ok(MetricsReport {
            per_k,
            kruskal_stress: kruskal_stress(reference, embedding)?,
            reference: space,
            num_points: n,
        })
    }

    pub fn tw_at(&self, k: usize) -> Option<f64> {
        self.per_k.iter().find(|&&(kk, _, _)| kk == k).map(|&(_, tw, _)| tw)
    }

    pub fn ct_at(&self, k: usize) -> Option<f64> {
        self.per_k.iter().find(|&&(kk, _, _)| kk == k).map(|&(_, _, ct)| ct)
    }

    /// Flat key-value text block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("n = {}\n", self.num_points));
        s.push_str(&format!("reference = {}\n", self.reference.as_str()));
        for &(k, tw, ct) in &self.per_k {
            s.push_str(&format!("tw_{k} = {tw}\n"));
            s.push_str(&format!("ct_{k} = {ct}\n"));
        }
        s.push_str(&format!("ks = {}\n", self.kruskal_stress));
        s
    }

    /// Writes `report.csv`: `metric,K,value` (K empty for KS).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("metric,K,value\n");
        for &(k, tw, ct) in &self.per_k {
            out.push_str(&format!("tw,{k},{tw}\n"));
            out.push_str(&format!("ct,{k},{ct}\n"));
        }
        out.push_str(&format!("ks,,{}\n", self.kruskal_stress));
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a `report.csv` written by [`MetricsReport::write_csv`]. The
    /// reference-space tag and N are not stored in the file, so the caller
    /// supplies them.
    pub fn read_csv(path: &Path, reference: ReferenceSpace, n: usize) -> Result<MetricsReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some("metric,K,value") {
            return Err(Error::format(path, "unexpected report.csv header"));
        }
        let mut tw: Vec<(usize, f64)> = Vec::new();
        let mut ct: Vec<(usize, f64)> = Vec::new();
        let mut ks = None;
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::format(path, format!("line {}: expected 3 fields", lineno + 2)));
            }
            let value: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: bad value", lineno + 2)))?;
            match fields[0].trim() {
                "tw" | "ct" => {
                    let k: usize = fields[1].trim().parse().map_err(|_| {
                        Error::format(path, format!("line {}: bad K", lineno + 2))
                    })?;
                    if fields[0].trim() == "tw" {
                        tw.push((k, value));
                    } else {
                        ct.push((k, value));
                    }
                }
                "ks" => ks = Some(value),
                other => {
                    return Err(Error::format(path, format!("unknown metric '{other}'")));
                }
            }
        }
        if tw.len() != ct.len() {
            return Err(Error::format(path, "tw/ct row counts differ"));
        }
        let per_k = tw
            .into_iter()
            .zip(ct)
            .map(|((k, tw), (k2, ct))| {
                if k != k2 {
                    return Err(Error::format(path, "tw/ct K values out of order"));
                }
                Ok((k, tw, ct))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricsReport {
            per_k,
            kruskal_stress: ks.ok_or_else(|| Error::format(path, "missing ks row"))?,
            reference,
            num_points: n,
        })
    }
}

/// Default neighborhood sizes: 1, 2.5% and 5% of N (rounded up), deduped.
pub fn default_k_list(n: usize) -> Vec<usize> {
    let mut ks = vec![1, (0.025 * n as f64).ceil() as usize, (0.05 * n as f64).ceil() as usize];
    ks.dedup();
    ks
}
