//! Synthetic RF-like datasets with separately controllable identity and behavior content.
//!
//! A sample is `mixing * [identity_gain * C_I ; behavior_gain * C_A] + N` where
//!
//! * `C_I` is a static per-user signature on the RSS-like channels, scaled by the
//!   user's impedance factor,
//! * `C_A` is the wrapped phase response `(4 pi d(t) / lambda + theta_i) mod 2 pi`
//!   of a behavior displacement trajectory on the phase-like channels,
//! * `mixing` is a seed-derived, well-conditioned `C x C` channel map,
//! * `N` collects all per-sample nuisance: additive Gaussian noise, a small
//!   multiplicative jitter of the signature and a random time warp of the
//!   trajectory. All three scale with `noise_sigma`, so `noise_sigma = 0`
//!   gives noiseless, fully determined samples.
//!
//! The channel axis is axis 0 and the time axis is axis 1; axis 2 indexes links
//! (tags or subcarriers). The first `ceil(C / 2)` channels are RSS-like, the rest
//! phase-like.
//!
//! This is a synthetic stand-in for hardware captures, not a propagation model.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::SignalDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Signature jitter standard deviation per unit of `noise_sigma`.
const SIGNATURE_JITTER_PER_NOISE: f64 = 0.1;
/// Time-warp standard deviation (fraction of duration) per unit of `noise_sigma`.
const WARP_PER_NOISE: f64 = 0.25;
/// Time-shift standard deviation (samples) per unit of `noise_sigma`.
const SHIFT_PER_NOISE: f64 = 5.0;
/// Bound on the mixing matrix condition number.
const MAX_CONDITION: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_behaviors: usize,
    pub samples_per_cell: usize,
    /// `[channels, time, links]`.
    pub sample_shape: Vec<usize>,
    pub noise_sigma: f64,
    pub identity_gain: f64,
    pub behavior_gain: f64,
    /// Spread of user signatures around the shared baseline.
    pub identity_spread: f64,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_users: 5,
            num_behaviors: 10,
            samples_per_cell: 80,
            sample_shape: vec![2, 30, 49],
            noise_sigma: 0.2,
            identity_gain: 1.0,
            behavior_gain: 1.0,
            identity_spread: 0.3,
            wavelength: 0.326,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Shape preset for WiFi CSI windows: 504 = 9 antenna pairs x 56 subcarriers, 10 time steps.
    pub fn wifi_shape() -> Vec<usize> {
        vec![9, 56, 10]
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_behaviors == 0 {
            return Err(Error::Config("need at least one user and one behavior".into()));
        }
        if self.samples_per_cell == 0 {
            return Err(Error::Config("samples_per_cell must be >= 1".into()));
        }
        if self.sample_shape.len() != 3 || self.sample_shape.contains(&0) {
            return Err(Error::Config(format!(
                "sample_shape must be [channels, time, links] with positive dims, got {:?}",
                self.sample_shape
            )));
        }
        if self.sample_shape[0] < 2 {
            return Err(Error::Config(
                "sample_shape needs at least 2 channels (RSS-like and phase-like)".into(),
            ));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("identity_gain", self.identity_gain),
            ("behavior_gain", self.behavior_gain),
            ("identity_spread", self.identity_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::Param(format!(
                "wavelength must be > 0, got {}",
                self.wavelength
            )));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.num_users * self.num_behaviors * self.samples_per_cell
    }

    fn rss_channels(&self) -> usize {
        self.sample_shape[0].div_ceil(2)
    }
}

/// Phase of a reflected path for each displacement: `(2 pi * 2 d / lambda + theta_i) mod 2 pi`.
pub fn gen_phase_series(displacement: &[f64], wavelength: f64, initial_phase: f64) -> Result<Vec<f64>> {
    if !(wavelength > 0.0) {
        return Err(Error::Param(format!("wavelength must be > 0, got {wavelength}")));
    }
    Ok(displacement
        .iter()
        .map(|&d| wrap_phase(2.0 * PI * 2.0 * d / wavelength + initial_phase))
        .collect())
}

fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2 pi for tiny negative inputs.
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityProfile {
    pub user_id: usize,
    /// Static pattern with the full sample shape; zero on phase-like channels.
    pub signature: Tensor<f32>,
    pub impedance_scale: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorTemplate {
    pub behavior_id: usize,
    /// Displacement in meters per time step, always >= 0.
    pub trajectory: Vec<f64>,
}

impl BehaviorTemplate {
    pub fn duration(&self) -> usize {
        self.trajectory.len()
    }

    /// Trajectory resampled at `t * rate + shift`, clamped to the template ends.
    fn warped(&self, rate: f64, shift: f64) -> Vec<f64> {
        let n = self.trajectory.len();
        (0..n)
            .map(|t| {
                let s = (t as f64 * rate + shift).clamp(0.0, (n - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                let frac = s - lo as f64;
                self.trajectory[lo] * (1.0 - frac) + self.trajectory[hi] * frac
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    /// Row-major `C x C` channel mixing map.
    pub mixing: Vec<f64>,
    pub channels: usize,
    /// Path-length multiplier per (phase channel, link).
    pub multipath_gains: Vec<f32>,
    /// Initial phase per (phase channel, link), in `[0, 2 pi)`.
    pub initial_phase: Vec<f64>,
    pub wavelength: f64,
    pub condition_number: f64,
}

impl ChannelModel {
    fn generate(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let c = cfg.sample_shape[0];
        let links = cfg.sample_shape[2];
        let phase_channels = c - cfg.rss_channels();
        let q = random_orthogonal(c, rng);
        let scales: Vec<f64> = (0..c).map(|_| rng.random_range(0.7..1.3)).collect();
        let mut mixing = vec![0.0; c * c];
        for i in 0..c {
            for j in 0..c {
                mixing[i * c + j] = q[i * c + j] * scales[j];
            }
        }
        let smax = scales.iter().copied().fold(f64::MIN, f64::max);
        let smin = scales.iter().copied().fold(f64::MAX, f64::min);
        let condition_number = smax / smin;
        if condition_number > MAX_CONDITION {
            return Err(Error::Integrity(format!(
                "mixing condition number {condition_number} exceeds {MAX_CONDITION}"
            )));
        }
        let multipath_gains = (0..phase_channels * links)
            .map(|_| rng.random_range(0.5f32..1.5))
            .collect();
        let initial_phase = (0..phase_channels * links)
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect();
        Ok(Self {
            mixing,
            channels: c,
            multipath_gains,
            initial_phase,
            wavelength: cfg.wavelength,
            condition_number,
        })
    }
}

/// `Q` from Gram-Schmidt on a Gaussian matrix (rows orthonormal).
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut m: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let dot: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
                for k in 0..n {
                    m[i * n + k] -= dot * m[j * n + k];
                }
            }
            let norm: f64 = (0..n).map(|k| m[i * n + k].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-6 {
                ok = false;
                break;
            }
            for k in 0..n {
                m[i * n + k] /= norm;
            }
        }
        if ok {
            return m;
        }
    }
}

/// Everything derived from the seed before any sample is drawn.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub config: SynthConfig,
    pub channel: ChannelModel,
    pub users: Vec<IdentityProfile>,
    pub behaviors: Vec<BehaviorTemplate>,
}

impl SynthWorld {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let channel = ChannelModel::generate(&config, &mut rng)?;
        let users = generate_users(&config, &mut rng)?;
        let behaviors = generate_behaviors(&config, &mut rng);
        Ok(Self {
            config,
            channel,
            users,
            behaviors,
        })
    }

    /// Sample `index` of the full grid; its randomness depends only on `(seed, index)`.
    pub fn sample(&self, user: usize, behavior: usize, index: u64) -> Result<Tensor<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index + 1);
        synth_sample(
            &self.users[user],
            &self.behaviors[behavior],
            &self.channel,
            &self.config,
            &mut rng,
        )
    }
}

fn generate_users(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<IdentityProfile>> {
    let [c, t, l] = [cfg.sample_shape[0], cfg.sample_shape[1], cfg.sample_shape[2]];
    let rss = cfg.rss_channels();
    // Shared attenuation baseline plus a per-user deviation, constant over time.
    let baseline: Vec<f64> = (0..rss * l).map(|_| StandardNormal.sample(rng)).collect();
    let mut users: Vec<IdentityProfile> = Vec::with_capacity(cfg.num_users);
    for user_id in 0..cfg.num_users {
        let mut sig = Tensor::<f32>::zeros(&[c, t, l]);
        let dev: Vec<f64> = (0..rss * l)
            .map(|_| { let z: f64 = StandardNormal.sample(rng); cfg.identity_spread * z })
            .collect::<Vec<f64>>();
        for ch in 0..rss {
            for step in 0..t {
                for link in 0..l {
                    let v = baseline[ch * l + link] + dev[ch * l + link];
                    sig.data_mut()[(ch * t + step) * l + link] = v as f32;
                }
            }
        }
        let impedance_scale = rng.random_range(0.8f32..1.2);
        if users.iter().any(|u| u.signature.sq_dist(&sig) == 0.0) {
            return Err(Error::Integrity(format!(
                "user {user_id} signature coincides with an earlier user"
            )));
        }
        users.push(IdentityProfile {
            user_id,
            signature: sig,
            impedance_scale,
        });
    }
    Ok(users)
}

fn generate_behaviors(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<BehaviorTemplate> {
    let t = cfg.sample_shape[1];
    (0..cfg.num_behaviors)
        .map(|behavior_id| {
            let amplitude = rng.random_range(0.03..0.08);
            let comps: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| {
                    (
                        rng.random_range(0.2..1.0),
                        rng.random_range(0.5..3.0),
                        rng.random_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            let raw: Vec<f64> = (0..t)
                .map(|step| {
                    let x = step as f64 / t.max(1) as f64;
                    comps
                        .iter()
                        .map(|(a, f, p)| a * (2.0 * PI * f * x + p).sin())
                        .sum()
                })
                .collect();
            let lo = raw.iter().copied().fold(f64::MAX, f64::min);
            let hi = raw.iter().copied().fold(f64::MIN, f64::max);
            let span = (hi - lo).max(1e-9);
            let trajectory = raw.iter().map(|v| amplitude * (v - lo) / span).collect();
            BehaviorTemplate {
                behavior_id,
                trajectory,
            }
        })
        .collect()
}

/// One sample: mixed identity and behavior components plus nuisance.
pub fn synth_sample<R: Rng + ?Sized>(
    profile: &IdentityProfile,
    template: &BehaviorTemplate,
    channel: &ChannelModel,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<Tensor<f32>> {
    let [c, t, l] = [cfg.sample_shape[0], cfg.sample_shape[1], cfg.sample_shape[2]];
    profile.signature.expect_shape("synth_sample", &cfg.sample_shape)?;
    if template.duration() != t || channel.channels != c {
        return Err(Error::shape(
            "synth_sample",
            format!(
                "template duration {} / channel count {} do not fit sample shape {:?}",
                template.duration(),
                channel.channels,
                cfg.sample_shape
            ),
        ));
    }
    let rss = cfg.rss_channels();
    let sigma = cfg.noise_sigma;
    let mut normal = || -> f64 { StandardNormal.sample(rng) };

    let rate = 1.0 + WARP_PER_NOISE * sigma * normal();
    let shift = SHIFT_PER_NOISE * sigma * normal();
    let displacement = template.warped(rate, shift);

    let id_scale = cfg.identity_gain * profile.impedance_scale as f64;
    let mut components = vec![0.0f64; c * t * l];
    for ch in 0..rss {
        for step in 0..t {
            for link in 0..l {
                let i = (ch * t + step) * l + link;
                let jitter = 1.0 + SIGNATURE_JITTER_PER_NOISE * sigma * normal();
                components[i] = id_scale * profile.signature.data()[i] as f64 * jitter;
            }
        }
    }
    let mut path = vec![0.0; t];
    for pc in 0..c - rss {
        for link in 0..l {
            let k = pc * l + link;
            let gain = channel.multipath_gains[k] as f64;
            for (p, d) in path.iter_mut().zip(&displacement) {
                *p = gain * d;
            }
            let phase = gen_phase_series(&path, channel.wavelength, channel.initial_phase[k])?;
            for (step, theta) in phase.into_iter().enumerate() {
                components[((rss + pc) * t + step) * l + link] = cfg.behavior_gain * theta;
            }
        }
    }

    let plane = t * l;
    let mut out = vec![0.0f32; c * plane];
    for row in 0..c {
        for col in 0..c {
            let m = channel.mixing[row * c + col];
            if m == 0.0 {
                continue;
            }
            let src = &components[col * plane..(col + 1) * plane];
            let dst = &mut out[row * plane..(row + 1) * plane];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += (m * s) as f32;
            }
        }
    }
    if sigma > 0.0 {
        for v in out.iter_mut() {
            *v += (sigma * normal()) as f32;
        }
    }
    Tensor::new(cfg.sample_shape.clone(), out)
}

/// Full user x behavior x repeat grid. Sample order is user-major, then behavior, then repeat.
pub fn synth_dataset(config: &SynthConfig) -> Result<SignalDataset> {
    let world = SynthWorld::new(config.clone())?;
    let n = config.num_samples();
    let per: usize = config.sample_shape.iter().product();
    let mut data = Vec::with_capacity(n * per);
    let mut identity = Vec::with_capacity(n);
    let mut behavior = Vec::with_capacity(n);
    let mut index = 0u64;
    for u in 0..config.num_users {
        for b in 0..config.num_behaviors {
            for _ in 0..config.samples_per_cell {
                let s = world.sample(u, b, index)?;
                data.extend_from_slice(s.data());
                identity.push(u);
                behavior.push(b);
                index += 1;
            }
        }
    }
    let provenance = serde_json::json!({
        "generator": "synthetic",
        "config": config,
    });
    Ok(
        SignalDataset::new(config.sample_shape.clone(), data, identity, behavior)?
            .with_provenance(provenance, Some(config.seed)),
    )
}
