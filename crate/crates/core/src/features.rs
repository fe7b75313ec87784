//! CSI feature extraction: per-row scaling, angular-domain transform,
//! entry-wise magnitude.
//!
//! The angular transform is the unitary DFT across the antenna dimension
//! with kernel `exp(+i 2 pi j m / M) / sqrt(M)`, i.e. a correlation against
//! the array responses on the DFT angle grid, so a steering vector with
//! `sin_angle = 2k/M` at half-wavelength spacing lands on bin `k`.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::channel::CsiMatrix;
use crate::error::{Error, Result};
use crate::mat::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalingMode {
    /// Normalize each CSI row to unit Euclidean norm before the transform.
    /// Removes transmit-power and path-loss magnitude; the default.
    UnitNorm,
    /// Skip row scaling and standardize the final real features to
    /// zero-mean unit-variance per dimension over the whole set.
    Standardize,
}

impl ScalingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalingMode::UnitNorm => "unit-norm",
            ScalingMode::Standardize => "standardize",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unit-norm" | "unit_norm" => Ok(ScalingMode::UnitNorm),
            "standardize" => Ok(ScalingMode::Standardize),
            other => Err(Error::Features(format!("unknown scaling mode '{other}'"))),
        }
    }
}

/// Per-dimension statistics recorded when `Standardize` scaling is used.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizeStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// N x D real feature matrix plus the normalization metadata of the run.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub entries: Mat,
    pub scaling: ScalingMode,
    pub stats: Option<StandardizeStats>,
}

impl FeatureSet {
    pub fn num_points(&self) -> usize {
        self.entries.rows()
    }

    pub fn dim(&self) -> usize {
        self.entries.cols()
    }
}

/// Unitary DFT across the antenna dimension; energy-preserving.
pub fn angular_transform(h: &[Complex64]) -> Vec<Complex64> {
    let m = h.len();
    let scale = 1.0 / (m as f64).sqrt();
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &hk) in h.iter().enumerate() {
            // Reduce j*k mod M first so the phase argument stays small.
            let t = 2.0 * std::f64::consts::PI * ((j * k) % m) as f64 / m as f64;
            acc += hk * Complex64::new(t.cos(), t.sin());
        }
        out.push(scale * acc);
    }
    out
}

/// Converts CSI to real AE features: scale, angular transform, entry-wise
/// magnitude. See [`ScalingMode`] for the two scaling recipes.
pub fn extract_features(csi: &CsiMatrix, scaling: ScalingMode) -> Result<FeatureSet> {
    let n = csi.num_users();
    let d = csi.num_antennas();
    let mut entries = Mat::zeros(n, d);

    for i in 0..n {
        let row = csi.row(i);
        let norm: f64 = row.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let scale = match scaling {
            ScalingMode::UnitNorm => {
                if norm == 0.0 {
                    return Err(Error::ZeroCsiRow(i));
                }
                1.0 / norm
            }
            ScalingMode::Standardize => 1.0,
        };
        let scaled: Vec<Complex64> = row.iter().map(|c| scale * c).collect();
        let spectrum = angular_transform(&scaled);
        let out = entries.row_mut(i);
        for (o, s) in out.iter_mut().zip(&spectrum) {
            *o = s.norm();
        }
    }

    let stats = match scaling {
        ScalingMode::UnitNorm => None,
        ScalingMode::Standardize => {
            let mut means = vec![0.0; d];
            for i in 0..n {
                for (m, v) in means.iter_mut().zip(entries.row(i)) {
                    *m += v;
                }
            }
            for m in &mut means {
                *m /= n as f64;
            }
            let mut vars = vec![0.0; d];
            for i in 0..n {
                for ((v, x), m) in vars.iter_mut().zip(entries.row(i)).zip(&means) {
                    let dlt = x - m;
                    *v += dlt * dlt;
                }
            }
            let stds: Vec<f64> = vars
                .iter()
                .map(|v| {
                    let s = (v / n as f64).sqrt();
                    if s > 0.0 { s } else { 1.0 } // constant dimension: leave centered
                })
                .collect();
            for i in 0..n {
                let row = entries.row_mut(i);
                for ((x, m), s) in row.iter_mut().zip(&means).zip(&stds) {
                    *x = (*x - m) / s;
                }
            }
            Some(StandardizeStats { means, stds })
        }
    };

    if !entries.is_finite() {
        return Err(Error::Features("extracted features contain non-finite values".into()));
    }
    Ok(FeatureSet { entries, scaling, stats })
}

/// Writes `features.csv`: `id,f_0,...,f_{D-1}`.
pub fn write_features_csv(features: &FeatureSet, path: &Path) -> Result<()> {
    let d = features.dim();
    let mut out = String::from("id");
    for k in 0..d {
        out.push_str(&format!(",f_{k}"));
    }
    out.push('\n');
    for i in 0..features.num_points() {
        out.push_str(&i.to_string());
        for v in features.entries.row(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a `features.csv`; the scaling mode is not stored in the file, so
/// the caller supplies it.
pub fn read_features_csv(path: &Path, scaling: ScalingMode) -> Result<FeatureSet> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(f);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut d = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if lineno == 0 {
            let cols = line.split(',').count();
            if cols < 2 {
                return Err(Error::format(path, "unexpected features.csv header"));
            }
            d = cols - 1;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(Error::format(path, format!("line {}: wrong field count", lineno + 1)));
        }
        let mut row = Vec::with_capacity(d);
        for s in &fields[1..] {
            row.push(s.trim().parse().map_err(|_| {
                Error::format(path, format!("line {}: bad number '{s}'", lineno + 1))
            })?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(path, "no feature rows"));
    }
    Ok(FeatureSet { entries: Mat::from_rows(&rows), scaling, stats: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{steering_vector, ArrayGeometry};
    use crate::mat;
    use crate::rng::Rng;

    fn csi_from_rows(rows: &[Vec<Complex64>]) -> CsiMatrix {
        let mut csi = CsiMatrix::zeros(rows.len(), rows[0].len());
        for (i, r) in rows.iter().enumerate() {
            csi.row_mut(i).copy_from_slice(r);
        }
        csi
    }

    /// Brute-force DFT oracle with the same (+i) kernel, written against the
    /// textbook sum rather than the production path.
    fn dft_oracle(h: &[Complex64]) -> Vec<Complex64> {
        let m = h.len();
        (0..m)
            .map(|j| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, hk) in h.iter().enumerate() {
                    let ang = 2.0 * std::f64::consts::PI * (j as f64) * (k as f64) / m as f64;
                    acc += hk * Complex64::new(ang.cos(), ang.sin());
                }
                acc / (m as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn constant_input_is_impulse_at_bin_zero() {
        let h = vec![Complex64::new(1.0, 0.0); 4];
        let x = angular_transform(&h);
        assert!((x[0] - Complex64::new(2.0, 0.0)).norm() < 1e-12);
        for v in &x[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn transform_is_unitary() {
        let mut rng = Rng::new(17);
        for _ in 0..20 {
            let h: Vec<Complex64> = (0..16)
                .map(|_| Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
                .collect();
            let x = angular_transform(&h);
            let nin: f64 = h.iter().map(|c| c.norm_sqr()).sum();
            let nout: f64 = x.iter().map(|c| c.norm_sqr()).sum();
            assert!((nin - nout).abs() < 1e-10 * nin.max(1.0));
        }
    }

    #[test]
    fn steering_on_dft_grid_is_impulse() {
        let m = 8;
        let g = ArrayGeometry { num_antennas: m, element_spacing: 0.5, ..ArrayGeometry::default() };
        for k in 0..m / 2 {
            let sin_angle = 2.0 * k as f64 / m as f64;
            let a = steering_vector(sin_angle, &g).unwrap();
            let x = angular_transform(&a);
            for (j, v) in x.iter().enumerate() {
                if j == k {
                    assert!((v.norm() - (m as f64).sqrt()).abs() < 1e-9, "bin {j}: {v}");
                } else {
                    assert!(v.norm() < 1e-9, "bin {j} should be empty, got {v}");
                }
            }
        }
    }

    #[test]
    fn transform_matches_oracle_on_random_input() {
        let mut rng = Rng::new(23);
        for m in [1usize, 2, 5, 8, 13] {
            let h: Vec<Complex64> = (0..m)
                .map(|_| Complex64::new(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)))
                .collect();
            let got = angular_transform(&h);
            let want = dft_oracle(&h);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn all_ones_row_normalizes_to_impulse() {
        let csi = csi_from_rows(&[vec![Complex64::new(1.0, 0.0); 4]]);
        let fs = extract_features(&csi, ScalingMode::UnitNorm).unwrap();
        let row = fs.entries.row(0);
        assert!((row[0] - 1.0).abs() < 1e-12);
        for v in &row[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn unit_norm_rows_have_unit_norm_and_are_nonnegative() {
        let mut rng = Rng::new(29);
        let rows: Vec<Vec<Complex64>> = (0..12)
            .map(|_| {
                (0..8)
                    .map(|_| Complex64::new(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)))
                    .collect()
            })
            .collect();
        let fs = extract_features(&csi_from_rows(&rows), ScalingMode::UnitNorm).unwrap();
        for i in 0..fs.num_points() {
            let row = fs.entries.row(i);
            assert!((mat::norm(row) - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn features_are_scale_invariant() {
        let mut rng = Rng::new(37);
        let base: Vec<Complex64> = (0..8)
            .map(|_| Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
            .collect();
        let c = Complex64::new(-2.3, 4.1);
        let scaled: Vec<Complex64> = base.iter().map(|&h| c * h).collect();
        let fs = extract_features(&csi_from_rows(&[base, scaled]), ScalingMode::UnitNorm).unwrap();
        for (a, b) in fs.entries.row(0).iter().zip(fs.entries.row(1)) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_row_is_rejected_in_unit_norm_mode() {
        let csi = csi_from_rows(&[vec![Complex64::new(0.0, 0.0); 4]]);
        assert!(matches!(
            extract_features(&csi, ScalingMode::UnitNorm),
            Err(Error::ZeroCsiRow(0))
        ));
    }

    #[test]
    fn standardize_mode_centers_dimensions() {
        let mut rng = Rng::new(41);
        let rows: Vec<Vec<Complex64>> = (0..50)
            .map(|_| {
                (0..6)
                    .map(|_| Complex64::new(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)))
                    .collect()
            })
            .collect();
        let fs = extract_features(&csi_from_rows(&rows), ScalingMode::Standardize).unwrap();
        let stats = fs.stats.as_ref().unwrap();
        assert_eq!(stats.means.len(), 6);
        for k in 0..6 {
            let mut mean = 0.0;
            let mut var = 0.0;
            for i in 0..50 {
                mean += fs.entries.get(i, k);
            }
            mean /= 50.0;
            for i in 0..50 {
                let d = fs.entries.get(i, k) - mean;
                var += d * d;
            }
            var /= 50.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn features_csv_round_trip() {
        let mut rng = Rng::new(43);
        let rows: Vec<Vec<Complex64>> = (0..5)
            .map(|_| {
                (0..4)
                    .map(|_| Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)))
                    .collect()
            })
            .collect();
        let fs = extract_features(&csi_from_rows(&rows), ScalingMode::UnitNorm).unwrap();
        let dir = std::env::temp_dir().join("cckit_features_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("features.csv");
        write_features_csv(&fs, &path).unwrap();
        let back = read_features_csv(&path, ScalingMode::UnitNorm).unwrap();
        assert_eq!(fs.entries, back.entries);
    }
}
