//! Synthetic CSI generation: a geometric multipath model over a uniform
//! linear array, in LoS and NLoS modes, with additive noise at a target SNR.
//!
//! The environment is a static set of point scatterers drawn once per seed.
//! Per-path gains carry inverse-distance path loss and a random (static)
//! reflection phase per scatterer, i.e. the model produces the large-scale
//! fading structure that CSI features are meant to capture. The per-user
//! response is
//!
//! `h = g0 * a(u_ue) + sum_p  rho_p * (d1 * d2)^(-gamma/2) * e^{i phi_p} * a(u_p)`
//!
//! with the direct term `g0 = d^-gamma` present only in LoS mode and `a`
//! the array response for the direction cosine along the array axis (+y).
//! The bounce term spreads over each leg separately (bistatic convention),
//! which keeps direct and scattered power at the same order across the
//! whole area; a single summed-length exponent would bury the scatterers
//! near the base station and with them all range information.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::{streams, Rng};
use crate::scenario::UePlacement;

/// Minimum distance between a user and any radiator (BS or scatterer).
const MIN_RADIATOR_DISTANCE: f64 = 0.1;

/// Uniform linear array along the +y axis at the base station.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    pub num_antennas: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
    pub carrier_frequency_hz: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        ArrayGeometry {
            num_antennas: 32,
            element_spacing: 0.5,
            carrier_frequency_hz: 2.0e9,
        }
    }
}

impl ArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 {
            return Err(Error::Channel("num_antennas must be at least 1".into()));
        }
        if self.element_spacing <= 0.0 {
            return Err(Error::Channel("element_spacing must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelMode {
    Los,
    Nlos,
}

/// Configuration of the synthetic propagation environment.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    pub num_scatterers: usize,
    pub scatter_x: (f64, f64),
    pub scatter_y: (f64, f64),
    pub scatterer_height: f64,
    pub path_loss_exponent: f64,
    /// Acquisition SNR; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            mode: ChannelMode::Los,
            num_scatterers: 10,
            scatter_x: (0.0, 1000.0),
            scatter_y: (0.0, 500.0),
            scatterer_height: 5.0,
            path_loss_exponent: 2.0,
            snr_db: 15.0,
            seed: 2,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == ChannelMode::Nlos && self.num_scatterers == 0 {
            return Err(Error::Channel("NLoS mode requires at least one scatterer".into()));
        }
        if self.scatter_x.0 >= self.scatter_x.1 || self.scatter_y.0 >= self.scatter_y.1 {
            return Err(Error::Channel("scatterer placement bounds are empty".into()));
        }
        if self.path_loss_exponent < 0.0 {
            return Err(Error::Channel("path_loss_exponent must be nonnegative".into()));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Channel("snr_db must be finite or +inf".into()));
        }
        Ok(())
    }
}

/// N x M complex CSI matrix, row n holding the response of user n.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiMatrix {
    num_users: usize,
    num_antennas: usize,
    entries: Vec<Complex64>,
}

impl CsiMatrix {
    pub fn zeros(num_users: usize, num_antennas: usize) -> Self {
        CsiMatrix {
            num_users,
            num_antennas,
            entries: vec![Complex64::new(0.0, 0.0); num_users * num_antennas],
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn row(&self, n: usize) -> &[Complex64] {
        &self.entries[n * self.num_antennas..(n + 1) * self.num_antennas]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [Complex64] {
        &mut self.entries[n * self.num_antennas..(n + 1) * self.num_antennas]
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// ULA response for a direction cosine along the array axis.
/// Component `m` is `exp(-i 2 pi spacing m sin_angle)`; all entries have
/// modulus one.
pub fn steering_vector(sin_angle: f64, geometry: &ArrayGeometry) -> Result<Vec<Complex64>> {
    if !(-1.0..=1.0).contains(&sin_angle) {
        return Err(Error::InvalidSinAngle(sin_angle));
    }
    geometry.validate()?;
    let mut v = Vec::with_capacity(geometry.num_antennas);
    for m in 0..geometry.num_antennas {
        let phase = -2.0 * std::f64::consts::PI * geometry.element_spacing * m as f64 * sin_angle;
        v.push(Complex64::new(phase.cos(), phase.sin()));
    }
    Ok(v)
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Direction cosine of `p` seen from `bs` along the array (+y) axis.
fn direction_cosine(bs: &[f64; 3], p: &[f64; 3]) -> f64 {
    let d = dist3(bs, p);
    ((p[1] - bs[1]) / d).clamp(-1.0, 1.0)
}

struct Scatterer {
    position: [f64; 3],
    reflectivity: f64,
    phase: Complex64,
}

fn draw_scatterers(config: &ChannelConfig) -> Vec<Scatterer> {
    let mut rng = Rng::derive(config.seed, streams::SCATTERERS);
    (0..config.num_scatterers)
        .map(|_| {
            let x = rng.uniform(config.scatter_x.0, config.scatter_x.1);
            let y = rng.uniform(config.scatter_y.0, config.scatter_y.1);
            let reflectivity = rng.uniform(0.3, 0.9);
            let phi = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
            Scatterer {
                position: [x, y, config.scatterer_height],
                reflectivity,
                phase: Complex64::new(phi.cos(), phi.sin()),
            }
        })
        .collect()
}

/// Synthesizes noise-free CSI for every placement position. The scatterer
/// environment is drawn once from `config.seed` and shared across users, so
/// CSI is a deterministic map of position.
pub fn synthesize_csi(
    placement: &UePlacement,
    bs_position: &[f64; 3],
    geometry: &ArrayGeometry,
    config: &ChannelConfig,
) -> Result<CsiMatrix> {
    geometry.validate()?;
    config.validate()?;

    let scatterers = draw_scatterers(config);
    let gamma = config.path_loss_exponent;
    let m = geometry.num_antennas;

    // Array responses toward the (static) scatterers are shared by all users.
    let scatter_responses: Vec<Vec<Complex64>> = scatterers
        .iter()
        .map(|s| steering_vector(direction_cosine(bs_position, &s.position), geometry))
        .collect::<Result<_>>()?;

    let mut csi = CsiMatrix::zeros(placement.len(), m);
    for (n, ue) in placement.positions.iter().enumerate() {
        let d_direct = dist3(bs_position, ue);
        if d_direct < MIN_RADIATOR_DISTANCE {
            return Err(Error::PositionTooClose { index: n, distance: d_direct });
        }
        let row = csi.row_mut(n);

        if config.mode == ChannelMode::Los {
            let gain = d_direct.powf(-gamma);
            let a = steering_vector(direction_cosine(bs_position, ue), geometry)?;
            for (h, s) in row.iter_mut().zip(&a) {
                *h += gain * s;
            }
        }

        for (scatterer, response) in scatterers.iter().zip(&scatter_responses) {
            let d1 = dist3(ue, &scatterer.position);
            if d1 < MIN_RADIATOR_DISTANCE {
                return Err(Error::PositionTooClose { index: n, distance: d1 });
            }
            let d2 = dist3(&scatterer.position, bs_position);
            let gain = scatterer.reflectivity * (d1 * d2).powf(-gamma / 2.0);
            let g = gain * scatterer.phase;
            for (h, s) in row.iter_mut().zip(response) {
                *h += g * s;
            }
        }
    }

    if !csi.is_finite() {
        return Err(Error::Channel("synthesized CSI contains non-finite entries".into()));
    }
    Ok(csi)
}

/// Adds circularly-symmetric complex Gaussian noise at the requested SNR.
/// Per row `n`, each entry receives noise of variance
/// `||h_n||^2 / (M * 10^(snr_db/10))`; the noise stream for row `n` derives
/// from `(seed, n)`, so rows are independent of evaluation order.
pub fn add_noise(csi: &CsiMatrix, snr_db: f64, seed: u64) -> CsiMatrix {
    if snr_db == f64::INFINITY {
        return csi.clone();
    }
    let m = csi.num_antennas();
    let snr_lin = 10f64.powf(snr_db / 10.0);
    let mut out = csi.clone();
    for n in 0..csi.num_users() {
        let row_power: f64 = csi.row(n).iter().map(|c| c.norm_sqr()).sum();
        let sigma_sq = row_power / (m as f64 * snr_lin);
        let per_component = (sigma_sq / 2.0).sqrt();
        let mut rng = Rng::derive(seed, ((n as u64) << 8) | streams::NOISE);
        for h in out.row_mut(n) {
            let re = per_component * rng.normal();
            let im = per_component * rng.normal();
            *h += Complex64::new(re, im);
        }
    }
    out
}

const CSI_MAGIC: &[u8; 4] = b"CCSI";
const CSI_VERSION: u16 = 1;

/// Writes the binary CSI format: magic `CCSI`, version u16, u32 N, u32 M,
/// then N*M little-endian float32 (re, im) pairs, row-major.
pub fn write_csi_binary(csi: &CsiMatrix, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(14 + csi.num_users() * csi.num_antennas() * 8);
    buf.extend_from_slice(CSI_MAGIC);
    buf.extend_from_slice(&CSI_VERSION.to_le_bytes());
    buf.extend_from_slice(&(csi.num_users() as u32).to_le_bytes());
    buf.extend_from_slice(&(csi.num_antennas() as u32).to_le_bytes());
    for n in 0..csi.num_users() {
        for c in csi.row(n) {
            buf.extend_from_slice(&(c.re as f32).to_le_bytes());
            buf.extend_from_slice(&(c.im as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads the binary CSI format written by [`write_csi_binary`].
pub fn read_csi_binary(path: &Path) -> Result<CsiMatrix> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    if buf.len() < 14 || &buf[0..4] != CSI_MAGIC {
        return Err(Error::format(path, "not a CCSI file"));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != CSI_VERSION {
        return Err(Error::format(path, format!("unsupported CCSI version {version}")));
    }
    let n = u32::from_le_bytes([buf[6], buf[7], buf[8], buf[9]]) as usize;
    let m = u32::from_le_bytes([buf[10], buf[11], buf[12], buf[13]]) as usize;
    let expected = 14 + n * m * 8;
    if buf.len() != expected {
        return Err(Error::format(
            path,
            format!("truncated CCSI file: expected {expected} bytes, got {}", buf.len()),
        ));
    }
    let mut csi = CsiMatrix::zeros(n, m);
    let mut off = 14;
    for i in 0..n {
        for c in csi.row_mut(i) {
            let re = f32::from_le_bytes([buf[off], buf[off + 1], buf[off + 2], buf[off + 3]]);
            let im = f32::from_le_bytes([buf[off + 4], buf[off + 5], buf[off + 6], buf[off + 7]]);
            *c = Complex64::new(re as f64, im as f64);
            off += 8;
        }
    }
    Ok(csi)
}

/// Writes the CSV alternative: `id,re_0,im_0,...,re_{M-1},im_{M-1}`.
pub fn write_csi_csv(csi: &CsiMatrix, path: &Path) -> Result<()> {
    let m = csi.num_antennas();
    let mut out = String::from("id");
    for k in 0..m {
        out.push_str(&format!(",re_{k},im_{k}"));
    }
    out.push('\n');
    for n in 0..csi.num_users() {
        out.push_str(&n.to_string());
        for c in csi.row(n) {
            out.push_str(&format!(",{},{}", c.re, c.im));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads the CSV alternative written by [`write_csi_csv`].
pub fn read_csi_csv(path: &Path) -> Result<CsiMatrix> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(f);
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    let mut m = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if lineno == 0 {
            let cols = line.split(',').count();
            if cols < 3 || (cols - 1) % 2 != 0 {
                return Err(Error::format(path, "unexpected csi.csv header"));
            }
            m = (cols - 1) / 2;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + 2 * m {
            return Err(Error::format(path, format!("line {}: wrong field count", lineno + 1)));
        }
        let mut row = Vec::with_capacity(m);
        for k in 0..m {
            let re: f64 = fields[1 + 2 * k].trim().parse().map_err(|_| {
                Error::format(path, format!("line {}: bad number", lineno + 1))
            })?;
            let im: f64 = fields[2 + 2 * k].trim().parse().map_err(|_| {
                Error::format(path, format!("line {}: bad number", lineno + 1))
            })?;
            row.push(Complex64::new(re, im));
        }
        rows.push(row);
    }
    let mut csi = CsiMatrix::zeros(rows.len(), m);
    for (n, row) in rows.iter().enumerate() {
        csi.row_mut(n).copy_from_slice(row);
    }
    Ok(csi)
}
