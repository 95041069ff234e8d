//! Sequential importance resampling over planar poses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::weights::{score_pose, ReferenceMap};
use super::{LocalMap, LocalizationError, WeightConfig};
use crate::geometry::Pose2D;
use crate::par::{map_slice, Execution};

/// Minimum particle count for [`estimate_pose`].
pub const MIN_ESTIMATE_PARTICLES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pose: Pose2D,
    pub weight: f64,
}

/// Vehicle-frame velocities: forward, left (m/s) and yaw rate (rad/s).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Odometry {
    pub vx: f64,
    pub vy: f64,
    pub vtheta: f64,
}

impl Odometry {
    pub fn new(vx: f64, vy: f64, vtheta: f64) -> Self {
        Self { vx, vy, vtheta }
    }
}

/// Zero-mean Gaussian velocity noise. Component `i` has
/// `sigma_i = factor * |v_i| + cross_i * speed`, where the cross terms keep lateral and yaw
/// hypotheses diverse while the vehicle drives straight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionNoise {
    pub factor: f64,
    /// Lateral velocity sigma per unit speed.
    pub lateral: f64,
    /// Yaw-rate sigma per unit speed (rad/m).
    pub yaw: f64,
}

impl MotionNoise {
    pub const NONE: MotionNoise = MotionNoise {
        factor: 0.0,
        lateral: 0.0,
        yaw: 0.0,
    };

    /// Proportional noise only.
    pub fn proportional(factor: f64) -> Self {
        Self {
            factor,
            ..Self::NONE
        }
    }
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            factor: 0.25,
            lateral: 0.03,
            yaw: 0.01,
        }
    }
}

fn perturb<R: Rng>(v: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 {
        v + Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        v
    }
}

/// Advances every particle by `v * dt` in its own frame, with independent velocity noise.
pub fn predict<R: Rng>(particles: &mut [Particle], odometry: Odometry, dt: f64, noise: MotionNoise, rng: &mut R) {
    assert!(dt > 0.0, "dt must be positive");
    let speed = odometry.vx.hypot(odometry.vy);
    let sx = noise.factor * odometry.vx.abs();
    let sy = noise.factor * odometry.vy.abs() + noise.lateral * speed;
    let st = noise.factor * odometry.vtheta.abs() + noise.yaw * speed;
    for p in particles.iter_mut() {
        let vx = perturb(odometry.vx, sx, rng);
        let vy = perturb(odometry.vy, sy, rng);
        let vt = perturb(odometry.vtheta, st, rng);
        p.pose = p.pose.compose(&Pose2D::new(vx * dt, vy * dt, vt * dt));
    }
}

/// Low-variance resampling. Returns `particles.len()` equally weighted copies.
pub fn systematic_resample<R: Rng>(particles: &[Particle], rng: &mut R) -> Vec<Particle> {
    let n = particles.len();
    if n == 0 {
        return Vec::new();
    }
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    let step = 1.0 / n as f64;
    let start = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut cum = particles[0].weight / total;
    for j in 0..n {
        let u = start + j as f64 * step;
        while u > cum && i + 1 < n {
            i += 1;
            cum += particles[i].weight / total;
        }
        out.push(Particle {
            pose: particles[i].pose,
            weight: step,
        });
    }
    out
}

/// Weighted mean of the top `ceil(top_fraction * N)` particles by weight; the yaw is a
/// circular mean.
pub fn estimate_pose(particles: &[Particle], top_fraction: f64) -> Result<Pose2D, LocalizationError> {
    if particles.len() < MIN_ESTIMATE_PARTICLES {
        return Err(LocalizationError::TooFewParticles {
            needed: MIN_ESTIMATE_PARTICLES,
            got: particles.len(),
        });
    }
    let mut order: Vec<usize> = (0..particles.len()).collect();
    order.sort_by(|&a, &b| particles[b].weight.total_cmp(&particles[a].weight).then(a.cmp(&b)));
    let top = ((top_fraction * particles.len() as f64).ceil() as usize).clamp(1, particles.len());
    let chosen = &order[..top];
    let total: f64 = chosen.iter().map(|&i| particles[i].weight).sum();
    let w = |i: usize| {
        if total > 0.0 {
            particles[i].weight / total
        } else {
            1.0 / top as f64
        }
    };
    let (mut x, mut y, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
    for &i in chosen {
        let p = &particles[i].pose;
        x += w(i) * p.x;
        y += w(i) * p.y;
        s += w(i) * p.yaw.sin();
        c += w(i) * p.yaw.cos();
    }
    Ok(Pose2D::new(x, y, s.atan2(c)))
}

/// Weighted standard deviation of particle positions (m).
pub fn position_spread(particles: &[Particle]) -> f64 {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let mx = particles.iter().map(|p| p.weight * p.pose.x).sum::<f64>() / total;
    let my = particles.iter().map(|p| p.weight * p.pose.y).sum::<f64>() / total;
    let var = particles
        .iter()
        .map(|p| p.weight * ((p.pose.x - mx).powi(2) + (p.pose.y - my).powi(2)))
        .sum::<f64>()
        / total;
    var.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub particles: usize,
    /// Resample when the effective sample size drops below this fraction of N.
    pub ess_fraction: f64,
    /// Fraction of highest-weight particles averaged into the estimate.
    pub top_fraction: f64,
    pub init_sigma_xy: f64,
    pub init_sigma_yaw_deg: f64,
    pub motion_noise: MotionNoise,
    pub weights: WeightConfig,
    pub execution: Execution,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 100,
            ess_fraction: 0.5,
            top_fraction: 0.2,
            init_sigma_xy: 1.0,
            init_sigma_yaw_deg: 5.0,
            motion_noise: MotionNoise::default(),
            weights: WeightConfig::default(),
            execution: Execution::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), LocalizationError> {
        self.weights.validate()?;
        let bad = |m: &str| Err(LocalizationError::Config(m.to_string()));
        if self.particles < MIN_ESTIMATE_PARTICLES {
            return Err(LocalizationError::TooFewParticles {
                needed: MIN_ESTIMATE_PARTICLES,
                got: self.particles,
            });
        }
        if !(0.0..=1.0).contains(&self.ess_fraction) {
            return bad("ess_fraction must lie in [0, 1]");
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return bad("top_fraction must lie in (0, 1]");
        }
        if !(self.init_sigma_xy >= 0.0 && self.init_sigma_yaw_deg >= 0.0 && self.motion_noise.factor >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        Ok(())
    }
}

/// What one measurement update did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateOutcome {
    /// Weights were reset to uniform (empty local map or no finite weight).
    pub degenerate: bool,
    pub resampled: bool,
    /// Effective sample size after weighting, before resampling.
    pub ess: f64,
}

#[derive(Clone, Debug)]
pub struct ParticleFilter {
    cfg: FilterConfig,
    particles: Vec<Particle>,
    rng: ChaCha8Rng,
}

impl ParticleFilter {
    /// Draws `cfg.particles` poses from a Gaussian around `initial`.
    pub fn new(initial: Pose2D, cfg: FilterConfig, seed: u64) -> Result<Self, LocalizationError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cfg.particles;
        let sxy = Normal::new(0.0, cfg.init_sigma_xy).expect("valid sigma");
        let syaw = Normal::new(0.0, cfg.init_sigma_yaw_deg.to_radians()).expect("valid sigma");
        let particles = (0..n)
            .map(|_| {
                let dx = sxy.sample(&mut rng);
                let dy = sxy.sample(&mut rng);
                let dyaw = syaw.sample(&mut rng);
                Particle {
                    pose: Pose2D::new(initial.x + dx, initial.y + dy, initial.yaw + dyaw),
                    weight: 1.0 / n as f64,
                }
            })
            .collect();
        Ok(Self { cfg, particles, rng })
    }

    /// A filter over explicit particles; weights are normalised.
    pub fn from_particles(mut particles: Vec<Particle>, cfg: FilterConfig, seed: u64) -> Result<Self, LocalizationError> {
        cfg.validate()?;
        normalize(&mut particles);
        Ok(Self {
            cfg,
            particles,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn predict(&mut self, odometry: Odometry, dt: f64) {
        predict(&mut self.particles, odometry, dt, self.cfg.motion_noise, &mut self.rng);
    }

    /// Reweights the particles against the reference map and resamples when the effective
    /// sample size falls below `ess_fraction * N`.
    pub fn update(&mut self, local: &LocalMap, reference: &ReferenceMap) -> UpdateOutcome {
        let n = self.particles.len();
        let cfg = self.cfg.weights;
        let log_w: Vec<f64> = if local.is_empty() {
            Vec::new()
        } else {
            map_slice(self.cfg.execution, &self.particles, |p| {
                score_pose(local, reference, p.pose, &cfg).log_weight + p.weight.ln()
            })
        };
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let degenerate = !max.is_finite();
        if degenerate {
            log::debug!("degenerate update, resetting weights to uniform");
            self.particles.iter_mut().for_each(|p| p.weight = 1.0 / n as f64);
        } else {
            for (p, lw) in self.particles.iter_mut().zip(&log_w) {
                p.weight = (lw - max).exp();
            }
            normalize(&mut self.particles);
        }
        let ess = 1.0 / self.particles.iter().map(|p| p.weight * p.weight).sum::<f64>();
        let resampled = ess < self.cfg.ess_fraction * n as f64;
        if resampled {
            self.particles = systematic_resample(&self.particles, &mut self.rng);
        }
        UpdateOutcome {
            degenerate,
            resampled,
            ess,
        }
    }

    pub fn estimate(&self) -> Result<Pose2D, LocalizationError> {
        estimate_pose(&self.particles, self.cfg.top_fraction)
    }

    pub fn spread(&self) -> f64 {
        position_spread(&self.particles)
    }
}

fn normalize(particles: &mut [Particle]) {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    let n = particles.len() as f64;
    for p in particles.iter_mut() {
        p.weight = if total > 0.0 { p.weight / total } else { 1.0 / n };
    }
}
