//! Parametric perception noise and the evidence emitter.
//!
//! Confidence is measured as `1 - u~` (one minus normalized entropy), the same quantity the
//! map's calibration metric bins on. The emitter inverts that relation so a requested
//! confidence maps to an evidence vector with exactly that peak probability.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::evidential::peaked_entropy;
use crate::geometry::ClassId;
use crate::localization::Odometry;

/// Relation between emitted confidence and the actual probability of being right.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Miscalibration {
    #[default]
    Calibrated,
    /// Emits `1 - (1 - c) / 4` for a pixel that is right with probability `c`.
    Overconfident,
    /// Emits `0.6 c`.
    Underconfident,
}

impl Miscalibration {
    #[inline]
    pub fn apply(self, c: f64) -> f64 {
        match self {
            Miscalibration::Calibrated => c,
            Miscalibration::Overconfident => 1.0 - (1.0 - c) * 0.25,
            Miscalibration::Underconfident => 0.6 * c,
        }
    }
}

impl std::str::FromStr for Miscalibration {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "calibrated" => Ok(Self::Calibrated),
            "overconfident" => Ok(Self::Overconfident),
            "underconfident" => Ok(Self::Underconfident),
            other => Err(format!("unknown miscalibration mode {other:?}")),
        }
    }
}

/// How pixels inside a corruption region are relabeled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Corruption {
    /// Always wrong: `class`, or the next class when `class` is the truth.
    Relabel { class: ClassId },
    /// The label of the ground `shift` meters away (world frame), producing ghost copies of
    /// nearby markings.
    Ghost { shift: [f64; 2] },
}

/// An axis-aligned world-frame rectangle of systematically corrupted perception.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRegion {
    pub min: [f64; 2],
    pub max: [f64; 2],
    #[serde(flatten)]
    pub corruption: Corruption,
    /// Per-pixel probability of corruption.
    pub probability: f64,
    /// Emitted confidence range of corrupted pixels; low values give high u~.
    pub confidence: (f64, f64),
}

impl CorruptionRegion {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub mode: Miscalibration,
    /// Range of the persistent per-patch confidence of stuff surfaces.
    pub stuff_confidence: (f64, f64),
    /// Same for landmark plates.
    pub thing_confidence: (f64, f64),
    /// Side of the square world patches sharing one persistent confidence (m).
    pub patch_size: f64,
    /// Per-pixel probability of a transient low-confidence prediction.
    pub flip_probability: f64,
    pub noisy_confidence: (f64, f64),
    /// Evidence scale; doubling it doubles S and halves u.
    pub temperature: f64,
    /// Relative jitter of the off-label evidence.
    pub spread: f64,
    /// Silhouette dilation (pixels) within which background pixels may take a landmark label.
    pub leak_width: u32,
    pub leaking_fraction: f64,
    pub corruption: Vec<CorruptionRegion>,
    /// Odometry noise factor: sigma_i = factor * |v_i|.
    pub odometry_factor: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            mode: Miscalibration::Calibrated,
            stuff_confidence: (0.8, 0.99),
            thing_confidence: (0.85, 0.99),
            patch_size: 1.0,
            flip_probability: 0.0,
            noisy_confidence: (0.3, 0.6),
            temperature: 1.0,
            spread: 0.1,
            leak_width: 0,
            leaking_fraction: 0.0,
            corruption: Vec::new(),
            odometry_factor: 0.25,
        }
    }
}

impl NoiseSpec {
    /// Perfect perception: the true label with maximal confidence everywhere.
    pub fn none() -> Self {
        Self {
            stuff_confidence: (1.0, 1.0),
            thing_confidence: (1.0, 1.0),
            odometry_factor: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        let range = |r: (f64, f64)| prob(r.0) && prob(r.1) && r.0 <= r.1;
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        if !(range(self.stuff_confidence) && range(self.thing_confidence) && range(self.noisy_confidence)) {
            return bad("confidence ranges must be ordered and inside [0, 1]");
        }
        if !(prob(self.flip_probability) && prob(self.leaking_fraction)) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.patch_size > 0.0 && self.spread >= 0.0 && self.odometry_factor >= 0.0) {
            return bad("patch size must be positive; spread and odometry factor non-negative");
        }
        for r in &self.corruption {
            if !(prob(r.probability) && range(r.confidence) && r.min[0] <= r.max[0] && r.min[1] <= r.max[1]) {
                return bad("corruption region needs an ordered rectangle and valid probabilities");
            }
        }
        Ok(())
    }
}

/// Maps a confidence `1 - u~` to Dirichlet evidence peaked on a chosen label.
#[derive(Clone, Debug)]
pub struct Emitter {
    k: usize,
    temperature: f64,
    spread: f64,
    /// `(confidence, peak probability)` pairs, increasing in both.
    table: Vec<(f64, f64)>,
}

const TABLE_SIZE: usize = 4096;
/// Peak probability margin above uniform; keeps the label the strict argmax under jitter.
const MIN_PEAK_MARGIN: f64 = 0.05;
const MAX_PEAK: f64 = 0.9999;

impl Emitter {
    pub fn new(k: usize, temperature: f64, spread: f64) -> Self {
        assert!(k >= 2, "emitter needs at least two classes");
        let lo = 1.0 / k as f64 + MIN_PEAK_MARGIN;
        let table = (0..TABLE_SIZE)
            .map(|i| {
                let a = lo + (MAX_PEAK - lo) * i as f64 / (TABLE_SIZE - 1) as f64;
                (1.0 - peaked_entropy(a, k), a)
            })
            .collect();
        Self {
            k,
            temperature,
            spread,
            table,
        }
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    /// Range of confidences the emitter can represent.
    pub fn confidence_range(&self) -> (f64, f64) {
        (self.table[0].0, self.table[TABLE_SIZE - 1].0)
    }

    /// Peak probability whose peaked vector has confidence `c` (clamped to the table).
    pub fn peak_for(&self, c: f64) -> f64 {
        let t = &self.table;
        if c <= t[0].0 {
            return t[0].1;
        }
        if c >= t[TABLE_SIZE - 1].0 {
            return t[TABLE_SIZE - 1].1;
        }
        let i = t.partition_point(|&(ci, _)| ci < c);
        let (c0, a0) = t[i - 1];
        let (c1, a1) = t[i];
        a0 + (a1 - a0) * (c - c0) / (c1 - c0)
    }

    /// Writes the evidence for `label` at confidence `c` into `alpha`; returns `u = K / S`.
    pub fn emit<R: Rng>(&self, label: ClassId, c: f64, rng: &mut R, alpha: &mut [f32]) -> f32 {
        debug_assert_eq!(alpha.len(), self.k);
        let a = self.peak_for(c);
        let mut off_sum = 0.0;
        let mut off_max: f64 = 0.0;
        for (j, slot) in alpha.iter_mut().enumerate() {
            if j == label as usize {
                continue;
            }
            let v = self.temperature * (1.0 + self.spread * rng.random::<f64>());
            off_sum += v;
            off_max = off_max.max(v);
            *slot = v as f32;
        }
        let peak = (a / (1.0 - a) * off_sum).max(off_max * 1.001);
        alpha[label as usize] = peak as f32;
        let s = off_sum + peak;
        (self.k as f64 / s).min(1.0) as f32
    }
}

/// Perturbs each velocity component with zero-mean Gaussian noise of std `factor * |v_i|`.
pub fn simulate_odometry<R: Rng>(v: &Odometry, factor: f64, rng: &mut R) -> Odometry {
    let mut perturb = |x: f64| {
        let sigma = factor * x.abs();
        if sigma > 0.0 {
            x + Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
        } else {
            x
        }
    };
    Odometry::new(perturb(v.vx), perturb(v.vy), perturb(v.vtheta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidential::{normalized_entropy_of, EvidenceVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn emitted_confidence_matches_request() {
        let e = Emitter::new(4, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut alpha = [0f32; 4];
        for c in [0.2, 0.5, 0.8, 0.95] {
            e.emit(1, c, &mut rng, &mut alpha);
            let s: f64 = alpha.iter().map(|v| *v as f64).sum();
            let p: Vec<f64> = alpha.iter().map(|v| *v as f64 / s).collect();
            assert!((1.0 - normalized_entropy_of(&p) - c).abs() < 1e-4, "c = {c}");
            assert_eq!(crate::evidential::argmax(&p), 1);
        }
    }

    #[test]
    fn label_is_argmax_at_lowest_confidence() {
        let e = Emitter::new(4, 1.0, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut alpha = [0f32; 4];
        for _ in 0..1000 {
            e.emit(2, 0.0, &mut rng, &mut alpha);
            let a: Vec<f64> = alpha.iter().map(|v| *v as f64).collect();
            assert_eq!(crate::evidential::argmax(&a), 2);
            assert!(alpha.iter().all(|v| *v >= 1.0));
        }
    }

    #[test]
    fn temperature_doubling_halves_u() {
        let mut alpha = [0f32; 4];
        let u1 = Emitter::new(4, 1.0, 0.1).emit(0, 0.7, &mut ChaCha8Rng::seed_from_u64(5), &mut alpha);
        let u2 = Emitter::new(4, 2.0, 0.1).emit(0, 0.7, &mut ChaCha8Rng::seed_from_u64(5), &mut alpha);
        assert!((u1 / u2 - 2.0).abs() < 1e-5);
        let ev = EvidenceVector::new(alpha.iter().map(|v| *v as f64).collect()).unwrap();
        assert!((ev.epistemic_uncertainty().unwrap() - u2 as f64).abs() < 1e-6);
    }

    #[test]
    fn miscalibration_modes() {
        assert_eq!(Miscalibration::Calibrated.apply(0.6), 0.6);
        assert!((Miscalibration::Overconfident.apply(0.6) - 0.9).abs() < 1e-12);
        assert!((Miscalibration::Underconfident.apply(0.5) - 0.3).abs() < 1e-12);
        assert_eq!("overconfident".parse::<Miscalibration>(), Ok(Miscalibration::Overconfident));
    }

    #[test]
    fn odometry_noise_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = Odometry::new(2.0, 0.0, 0.0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| simulate_odometry(&v, 0.25, &mut rng).vx).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((std - 0.5).abs() < 0.01, "std {std}");
        assert!((mean - 2.0).abs() < 0.01);
        let exact = simulate_odometry(&Odometry::new(1.0, -0.5, 0.2), 0.0, &mut rng);
        assert_eq!(exact, Odometry::new(1.0, -0.5, 0.2));
        let still = simulate_odometry(&Odometry::new(0.0, 0.0, 0.0), 0.25, &mut rng);
        assert_eq!(still, Odometry::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn spec_validation() {
        assert!(NoiseSpec::default().validate().is_ok());
        assert!(NoiseSpec::none().validate().is_ok());
        let bad = NoiseSpec {
            temperature: 0.0,
            ..NoiseSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = NoiseSpec {
            stuff_confidence: (0.9, 0.5),
            ..NoiseSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn corruption_serde_roundtrip() {
        let r = CorruptionRegion {
            min: [0.0, -1.0],
            max: [10.0, 1.0],
            corruption: Corruption::Ghost { shift: [0.0, 0.6] },
            probability: 0.5,
            confidence: (0.2, 0.4),
        };
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"kind\":\"ghost\""));
        assert_eq!(serde_json::from_str::<CorruptionRegion>(&json).unwrap(), r);
        assert!(r.contains(5.0, 0.0) && !r.contains(5.0, 2.0));
    }
}
