//! Reproducible problem instances: geometry, free-space path loss, small-scale
//! fading, sparse spreading signatures and the link-budget noise floor.
//!
//! Every generator consumes an explicit RNG so that a `(config, seed)` pair
//! always yields a bit-identical [`Scenario`].

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rate::SicOrder;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Small-scale fading applied on top of path loss. All variants have unit
/// mean power, `E[|g|^2] = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FadingModel {
    None,
    Rayleigh,
    Rician { k_factor_db: f64 },
}

impl Default for FadingModel {
    fn default() -> Self {
        FadingModel::Rician { k_factor_db: 10.0 }
    }
}

impl FadingModel {
    /// Draws one fading coefficient. `los_phase` is the line-of-sight phase
    /// of the link (ignored unless Rician).
    pub fn sample<R: Rng + ?Sized>(&self, los_phase: f64, rng: &mut R) -> Complex64 {
        match *self {
            FadingModel::None => Complex64::new(1.0, 0.0),
            FadingModel::Rayleigh => complex_gaussian(rng),
            FadingModel::Rician { k_factor_db } => {
                let k = 10f64.powf(k_factor_db / 10.0);
                let los = Complex64::from_polar((k / (k + 1.0)).sqrt(), los_phase);
                los + complex_gaussian(rng) * (1.0 / (k + 1.0)).sqrt()
            }
        }
    }
}

/// Circularly-symmetric complex Gaussian with unit variance.
fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub num_res: usize,
    pub num_sats: usize,
    pub modulation_order: u32,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub orbit_altitude_m: f64,
    pub eirp_dbw: f64,
    pub g_over_t_dbk: f64,
    pub noise_density_dbm_hz: f64,
    pub fading: FadingModel,
    pub signature_column_weight: usize,
    /// Radius of the ground disc users are dropped in.
    pub user_disc_radius_m: f64,
    /// Along-track separation between neighbouring satellites.
    pub sat_spacing_m: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_users: 32,
            num_res: 12,
            num_sats: 8,
            modulation_order: 4,
            carrier_freq_hz: 2.0e9,
            bandwidth_hz: 15.0e6,
            orbit_altitude_m: 600.0e3,
            eirp_dbw: -7.0,
            g_over_t_dbk: -33.6,
            noise_density_dbm_hz: -173.0,
            fading: FadingModel::default(),
            signature_column_weight: 2,
            user_disc_radius_m: 500.0e3,
            sat_spacing_m: 100.0e3,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_users", self.num_users),
            ("num_res", self.num_res),
            ("num_sats", self.num_sats),
            ("signature_column_weight", self.signature_column_weight),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.modulation_order < 2 || !self.modulation_order.is_power_of_two() {
            return Err(Error::Config(format!(
                "modulation_order must be a power of two >= 2, got {}",
                self.modulation_order
            )));
        }
        if self.signature_column_weight > self.num_res {
            return Err(Error::Config(format!(
                "signature_column_weight {} exceeds num_res {}",
                self.signature_column_weight, self.num_res
            )));
        }
        for (name, v) in [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("orbit_altitude_m", self.orbit_altitude_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.user_disc_radius_m >= 0.0) || !(self.sat_spacing_m >= 0.0) {
            return Err(Error::Config("geometry lengths must be non-negative".into()));
        }
        if let FadingModel::Rician { k_factor_db } = self.fading {
            if !k_factor_db.is_finite() {
                return Err(Error::Config("rician k_factor_db must be finite".into()));
            }
        }
        Ok(())
    }

    /// Noise power per resource element: the noise density integrated over
    /// the bandwidth and split evenly across the `num_res` elements.
    pub fn noise_power_per_re(&self) -> f64 {
        self.noise_density_w_hz() * self.bandwidth_hz / self.num_res as f64
    }

    fn noise_density_w_hz(&self) -> f64 {
        10f64.powf((self.noise_density_dbm_hz - 30.0) / 10.0)
    }

    /// Linear power scale `EIRP * G_rx` applied to every link. The receive
    /// gain is recovered from G/T using the system temperature implied by
    /// the noise density, `T = N0 / k_B`.
    pub fn link_power_scale(&self) -> f64 {
        let t_sys = self.noise_density_w_hz() / BOLTZMANN;
        let g_rx_db = self.g_over_t_dbk + 10.0 * t_sys.log10();
        10f64.powf((self.eirp_dbw + g_rx_db) / 10.0)
    }
}

/// Free-space amplitude loss `D(d)` with `20 log10 D = FSPL(dB)`.
pub fn path_loss(distance_m: f64, carrier_freq_hz: f64) -> Result<f64> {
    Ok(10f64.powf(fspl_db(distance_m, carrier_freq_hz)? / 20.0))
}

/// `FSPL = 20 log10(d_km) + 20 log10(f_GHz) + 92.45`.
pub fn fspl_db(distance_m: f64, carrier_freq_hz: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !(carrier_freq_hz > 0.0) {
        return Err(Error::Domain(format!(
            "path loss needs positive distance and frequency, got d={distance_m} f={carrier_freq_hz}"
        )));
    }
    Ok(20.0 * (distance_m / 1e3).log10() + 20.0 * (carrier_freq_hz / 1e9).log10() + 92.45)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    /// Ground positions `[x, y, 0]` in metres.
    pub users: Vec<[f64; 3]>,
    /// Satellite positions `[x, 0, altitude]`.
    pub sats: Vec<[f64; 3]>,
    /// Slant ranges `d[k][j]`, `K x J`.
    pub distances: Matrix,
}

/// Drops users uniformly in a disc and lines satellites up along-track,
/// centred over the disc.
pub fn generate_geometry<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Geometry {
    let r_max = config.user_disc_radius_m;
    let users: Vec<[f64; 3]> = (0..config.num_users)
        .map(|_| {
            let r = r_max * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            [r * phi.cos(), r * phi.sin(), 0.0]
        })
        .collect();
    let centre = (config.num_sats as f64 - 1.0) / 2.0;
    let sats: Vec<[f64; 3]> = (0..config.num_sats)
        .map(|j| {
            [
                (j as f64 - centre) * config.sat_spacing_m,
                0.0,
                config.orbit_altitude_m,
            ]
        })
        .collect();
    let distances = Matrix::from_fn(config.num_users, config.num_sats, |k, j| {
        let (u, s) = (users[k], sats[j]);
        ((u[0] - s[0]).powi(2) + (u[1] - s[1]).powi(2) + (u[2] - s[2]).powi(2)).sqrt()
    });
    Geometry {
        users,
        sats,
        distances,
    }
}

/// Sparse `N x K` spreading signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureMatrix {
    num_res: usize,
    num_users: usize,
    values: Vec<Complex64>,
    occupancy: Vec<Vec<usize>>,
    max_collision: usize,
}

impl SignatureMatrix {
    /// Builds a signature matrix from row-major `N x K` entries. Each column
    /// must have unit Euclidean norm.
    pub fn new(num_res: usize, num_users: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != num_res * num_users {
            return Err(Error::Config(format!(
                "signature matrix needs {} entries, got {}",
                num_res * num_users,
                values.len()
            )));
        }
        for k in 0..num_users {
            let norm2: f64 = (0..num_res).map(|n| values[n * num_users + k].norm_sqr()).sum();
            if (norm2 - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "signature column {k} has squared norm {norm2}, expected 1"
                )));
            }
        }
        let occupancy: Vec<Vec<usize>> = (0..num_res)
            .map(|n| {
                (0..num_users)
                    .filter(|&k| values[n * num_users + k] != Complex64::new(0.0, 0.0))
                    .collect()
            })
            .collect();
        let max_collision = occupancy.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            num_res,
            num_users,
            values,
            occupancy,
            max_collision,
        })
    }

    pub fn num_res(&self) -> usize {
        self.num_res
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn get(&self, n: usize, k: usize) -> Complex64 {
        self.values[n * self.num_users + k]
    }

    /// `F(n)`: users with a nonzero chip on resource element `n`.
    pub fn occupancy(&self, n: usize) -> &[usize] {
        &self.occupancy[n]
    }

    /// `d_f`, the largest number of users sharing one resource element.
    pub fn max_collision(&self) -> usize {
        self.max_collision
    }

    pub fn column_weight(&self, k: usize) -> usize {
        (0..self.num_res)
            .filter(|&n| self.get(n, k) != Complex64::new(0.0, 0.0))
            .count()
    }
}

/// Regular sparse signatures: every user spreads over exactly `d_v` resource
/// elements with random `±1/sqrt(d_v)` chips. Each column is placed on the
/// currently least-loaded rows (ties in random order), which keeps all row
/// degrees within one of each other.
pub fn generate_signatures<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<SignatureMatrix> {
    let (n_res, k_users, dv) = (
        config.num_res,
        config.num_users,
        config.signature_column_weight,
    );
    if dv > n_res {
        return Err(Error::Config(format!(
            "column weight {dv} exceeds number of resource elements {n_res}"
        )));
    }
    let amp = 1.0 / (dv as f64).sqrt();
    let mut degree = vec![0usize; n_res];
    let mut values = vec![Complex64::new(0.0, 0.0); n_res * k_users];
    let mut rows: Vec<usize> = (0..n_res).collect();
    for k in 0..k_users {
        rows.shuffle(rng);
        rows.sort_by_key(|&n| degree[n]);
        for &n in &rows[..dv] {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            values[n * k_users + k] = Complex64::new(sign * amp, 0.0);
            degree[n] += 1;
        }
    }
    SignatureMatrix::new(n_res, k_users, values)
}

/// Complex gains `h[n][k][j]` plus the per-element noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    dims: (usize, usize, usize),
    h: Vec<Complex64>,
    distances: Matrix,
    sigma2: f64,
}

impl ChannelTensor {
    /// Wraps explicit coefficients, indexed `(n * K + k) * J + j`.
    pub fn new(
        dims: (usize, usize, usize),
        h: Vec<Complex64>,
        distances: Matrix,
        sigma2: f64,
    ) -> Result<Self> {
        let (n, k, j) = dims;
        if h.len() != n * k * j {
            return Err(Error::Config(format!(
                "channel tensor needs {} entries, got {}",
                n * k * j,
                h.len()
            )));
        }
        if distances.rows() != k || distances.cols() != j {
            return Err(Error::Config("distance matrix must be K x J".into()));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!("noise power must be positive, got {sigma2}")));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical {
                message: "non-finite channel coefficient".into(),
                iterate: Vec::new(),
            });
        }
        Ok(Self {
            dims,
            h,
            distances,
            sigma2,
        })
    }

    /// `(N, K, J)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize, j: usize) -> Complex64 {
        self.h[(n * self.dims.1 + k) * self.dims.2 + j]
    }

    pub fn distances(&self) -> &Matrix {
        &self.distances
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

/// Draws the fading tensor in a fixed `(k, j, n)` order: one line-of-sight
/// phase per link followed by the per-element coefficients.
fn draw_fading<R: Rng + ?Sized>(
    model: FadingModel,
    dims: (usize, usize, usize),
    rng: &mut R,
) -> Vec<Complex64> {
    let (n_res, k_users, j_sats) = dims;
    let mut g = vec![Complex64::new(0.0, 0.0); n_res * k_users * j_sats];
    for k in 0..k_users {
        for j in 0..j_sats {
            let los_phase = 2.0 * PI * rng.random::<f64>();
            for n in 0..n_res {
                g[(n * k_users + k) * j_sats + j] = model.sample(los_phase, rng);
            }
        }
    }
    g
}

/// `h = sqrt(scale) * g / D(d)` for every entry.
fn assemble_channels(
    fading: &[Complex64],
    dims: (usize, usize, usize),
    distances: &Matrix,
    power_scale: f64,
    loss: impl Fn(f64) -> Result<f64>,
) -> Result<Vec<Complex64>> {
    let (n_res, k_users, j_sats) = dims;
    let amp = power_scale.sqrt();
    let mut h = fading.to_vec();
    for k in 0..k_users {
        for j in 0..j_sats {
            let d = loss(distances[(k, j)])?;
            for n in 0..n_res {
                h[(n * k_users + k) * j_sats + j] *= amp / d;
            }
        }
    }
    Ok(h)
}

pub fn generate_channels<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    signatures: &SignatureMatrix,
    distances: &Matrix,
    rng: &mut R,
) -> Result<ChannelTensor> {
    let dims = (config.num_res, config.num_users, config.num_sats);
    if signatures.num_res() != dims.0 || signatures.num_users() != dims.1 {
        return Err(Error::Config("signature dimensions disagree with config".into()));
    }
    let fading = draw_fading(config.fading, dims, rng);
    let h = assemble_channels(
        &fading,
        dims,
        distances,
        config.link_power_scale(),
        |d| path_loss(d, config.carrier_freq_hz),
    )?;
    ChannelTensor::new(dims, h, distances.clone(), config.noise_power_per_re())
}

/// An immutable problem instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    signatures: SignatureMatrix,
    channel: ChannelTensor,
    sic: SicOrder,
}

impl Scenario {
    /// Generates geometry, signatures and channels from `config.rng_seed`.
    pub fn generate(config: &ScenarioConfig) -> Result<Self> {
        Self::generate_with_geometry(config).map(|(s, _)| s)
    }

    /// Like [`generate`](Self::generate), also returning the node positions.
    pub fn generate_with_geometry(config: &ScenarioConfig) -> Result<(Self, Geometry)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let geometry = generate_geometry(config, &mut rng);
        let signatures = generate_signatures(config, &mut rng)?;
        let channel = generate_channels(config, &signatures, &geometry.distances, &mut rng)?;
        let scenario = Self::from_parts(config.clone(), signatures, channel)?;
        Ok((scenario, geometry))
    }

    /// Assembles a scenario from explicit parts, checking that dimensions agree.
    pub fn from_parts(
        config: ScenarioConfig,
        signatures: SignatureMatrix,
        channel: ChannelTensor,
    ) -> Result<Self> {
        config.validate()?;
        let expect = (config.num_res, config.num_users, config.num_sats);
        if channel.dims() != expect
            || signatures.num_res() != config.num_res
            || signatures.num_users() != config.num_users
        {
            return Err(Error::Config(format!(
                "scenario parts disagree: config (N,K,J)={expect:?}, channel {:?}, signatures ({}, {})",
                channel.dims(),
                signatures.num_res(),
                signatures.num_users()
            )));
        }
        let sic = SicOrder::new(&channel);
        Ok(Self {
            config,
            signatures,
            channel,
            sic,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn signatures(&self) -> &SignatureMatrix {
        &self.signatures
    }

    pub fn channel(&self) -> &ChannelTensor {
        &self.channel
    }

    pub fn sic_order(&self) -> &SicOrder {
        &self.sic
    }

    pub fn num_users(&self) -> usize {
        self.config.num_users
    }

    pub fn num_res(&self) -> usize {
        self.config.num_res
    }

    pub fn num_sats(&self) -> usize {
        self.config.num_sats
    }

    pub fn sigma2(&self) -> f64 {
        self.channel.sigma2()
    }

    /// `|h[n][k][j]|^2`
    #[inline]
    pub fn gain(&self, n: usize, k: usize, j: usize) -> f64 {
        self.channel.get(n, k, j).norm_sqr()
    }

    /// `|h[n][k][j] s[n][k]|^2`, the received power of user `k` on element `n`.
    #[inline]
    pub fn rx_power(&self, n: usize, k: usize, j: usize) -> f64 {
        self.gain(n, k, j) * self.signatures.get(n, k).norm_sqr()
    }

    /// Aggregate channel quality `sum_n |h[n][k][j]|^2`.
    pub fn aggregate_gain(&self, k: usize, j: usize) -> f64 {
        (0..self.num_res()).map(|n| self.gain(n, k, j)).sum()
    }

    /// Writes one CSV row per `(n, k, j)`: `n,k,j,re,im`.
    pub fn write_channel_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "k", "j", "re", "im"])?;
        let (nn, kk, jj) = self.channel.dims();
        for n in 0..nn {
            for k in 0..kk {
                for j in 0..jj {
                    let h = self.channel.get(n, k, j);
                    w.write_record(&[
                        n.to_string(),
                        k.to_string(),
                        j.to_string(),
                        h.re.to_string(),
                        h.im.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes one CSV row per `(n, k)`: `n,k,re,im`.
    pub fn write_signature_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "k", "re", "im"])?;
        for n in 0..self.num_res() {
            for k in 0..self.num_users() {
                let s = self.signatures.get(n, k);
                w.write_record(&[n.to_string(), k.to_string(), s.re.to_string(), s.im.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn fspl_reference_points() {
        let at_600km = fspl_db(600e3, 2e9).unwrap();
        // 20 log10(600) + 20 log10(2) + 92.45
        assert!((at_600km - 154.0338).abs() < 1e-3, "{at_600km}");
        let d = path_loss(600e3, 2e9).unwrap();
        assert!((20.0 * d.log10() - at_600km).abs() < 1e-9);

        assert!((fspl_db(1e3, 1e9).unwrap() - 92.45).abs() < 1e-12);

        let doubled = fspl_db(1200e3, 2e9).unwrap() - at_600km;
        assert!((doubled - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn path_loss_rejects_non_positive() {
        assert!(matches!(path_loss(0.0, 2e9), Err(Error::Domain(_))));
        assert!(matches!(path_loss(1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn zenith_satellite_sees_altitude() {
        let cfg = ScenarioConfig {
            num_users: 1,
            num_sats: 1,
            user_disc_radius_m: 0.0,
            ..Default::default()
        };
        let geo = generate_geometry(&cfg, &mut rng(1));
        assert!((geo.distances[(0, 0)] - 600e3).abs() < 1e-6);
    }

    #[test]
    fn slant_ranges_are_deterministic_and_bounded() {
        let cfg = ScenarioConfig::default();
        let a = generate_geometry(&cfg, &mut rng(7));
        let b = generate_geometry(&cfg, &mut rng(7));
        assert_eq!(a, b);
        assert!(a.distances.as_slice().iter().all(|&d| d >= cfg.orbit_altitude_m));
    }

    #[test]
    fn default_signatures_are_balanced() {
        let cfg = ScenarioConfig::default();
        let s = generate_signatures(&cfg, &mut rng(3)).unwrap();
        for n in 0..cfg.num_res {
            let deg = s.occupancy(n).len();
            assert!(deg == 5 || deg == 6, "row {n} degree {deg}");
        }
        assert!(s.max_collision() <= 6);
        for k in 0..cfg.num_users {
            assert_eq!(s.column_weight(k), 2);
            let norm2: f64 = (0..cfg.num_res).map(|n| s.get(n, k).norm_sqr()).sum();
            assert!((norm2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_signatures_when_weight_equals_res() {
        let cfg = ScenarioConfig {
            num_res: 4,
            num_users: 6,
            signature_column_weight: 4,
            ..Default::default()
        };
        let s = generate_signatures(&cfg, &mut rng(0)).unwrap();
        assert_eq!(s.max_collision(), 6);
        assert!((0..4).all(|n| s.occupancy(n).len() == 6));
    }

    #[test]
    fn signature_weight_above_res_is_config_error() {
        let cfg = ScenarioConfig {
            num_res: 2,
            signature_column_weight: 3,
            ..Default::default()
        };
        assert!(matches!(generate_signatures(&cfg, &mut rng(0)), Err(Error::Config(_))));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unfaded_gain_is_flat_across_res_and_monotone_in_range() {
        let cfg = ScenarioConfig {
            fading: FadingModel::None,
            ..Default::default()
        };
        let sc = Scenario::generate(&cfg).unwrap();
        let d = sc.channel().distances();
        for k in 0..cfg.num_users {
            for j in 0..cfg.num_sats {
                let g0 = sc.gain(0, k, j);
                assert!(g0 > 0.0 && g0.is_finite());
                for n in 1..cfg.num_res {
                    assert_eq!(sc.gain(n, k, j), g0);
                }
            }
            for j in 1..cfg.num_sats {
                if d[(k, j)] < d[(k, j - 1)] {
                    assert!(sc.gain(0, k, j) > sc.gain(0, k, j - 1));
                } else if d[(k, j)] > d[(k, j - 1)] {
                    assert!(sc.gain(0, k, j) < sc.gain(0, k, j - 1));
                }
            }
        }
    }

    #[test]
    fn rayleigh_has_unit_mean_power() {
        let mut r = rng(11);
        let draws = 1_000_000;
        let mean: f64 = (0..draws)
            .map(|_| FadingModel::Rayleigh.sample(0.0, &mut r).norm_sqr())
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean |g|^2 = {mean}");
    }

    #[test]
    fn rician_has_unit_mean_power() {
        let mut r = rng(12);
        let model = FadingModel::Rician { k_factor_db: 10.0 };
        let draws = 200_000;
        let mean: f64 = (0..draws)
            .map(|_| model.sample(r.random::<f64>() * 6.0, &mut r).norm_sqr())
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean |g|^2 = {mean}");
    }

    #[test]
    fn scaling_path_loss_scales_gains() {
        let dims = (3, 2, 2);
        let fading = draw_fading(FadingModel::Rayleigh, dims, &mut rng(5));
        let distances = Matrix::from_vec(2, 2, vec![600e3, 700e3, 800e3, 900e3]);
        let base = assemble_channels(&fading, dims, &distances, 2.0, |d| path_loss(d, 2e9)).unwrap();
        let c = 3.5;
        let scaled =
            assemble_channels(&fading, dims, &distances, 2.0, |d| Ok(path_loss(d, 2e9)? / c)).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert!((b.norm() - c * a.norm()).abs() <= 1e-12 * b.norm());
        }
    }

    #[test]
    fn same_seed_same_scenario() {
        let cfg = ScenarioConfig {
            rng_seed: 99,
            ..Default::default()
        };
        let a = Scenario::generate(&cfg).unwrap();
        let b = Scenario::generate(&cfg).unwrap();
        assert_eq!(a.channel(), b.channel());
        assert_eq!(a.signatures(), b.signatures());
        let c = Scenario::generate(&ScenarioConfig { rng_seed: 100, ..cfg }).unwrap();
        assert_ne!(a.channel(), c.channel());
    }

    #[test]
    fn noise_floor_matches_link_budget() {
        let cfg = ScenarioConfig::default();
        // -173 dBm/Hz over 15 MHz / 12 elements.
        let expect_dbw = -173.0 - 30.0 + 10.0 * (15e6f64 / 12.0).log10();
        assert!((10.0 * cfg.noise_power_per_re().log10() - expect_dbw).abs() < 1e-9);
    }

    #[test]
    fn toml_round_trip_of_config() {
        let cfg = ScenarioConfig {
            fading: FadingModel::Rician { k_factor_db: 7.5 },
            num_users: 5,
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let partial: ScenarioConfig = toml::from_str("num_users = 4\nfading = { kind = \"none\" }").unwrap();
        assert_eq!(partial.num_users, 4);
        assert_eq!(partial.fading, FadingModel::None);
        assert_eq!(partial.num_sats, 8);
    }
}
