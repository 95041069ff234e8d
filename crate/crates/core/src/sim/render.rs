//! Ground-truth images and simulated evidential perception frames.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::noise::{Corruption, Emitter, NoiseSpec};
use super::sensors::{cast, Hit, SensorRig};
use super::world::World;
use super::{hash_keys, unit};
use crate::geometry::{ClassId, Pose2D, Taxonomy, UNKNOWN};
use crate::ingest::PerceptionFrame;
use crate::par::{map_indexed, Execution};

/// Truth class of pixels that see nothing of the taxonomy (sky, off-road ground).
pub const NO_CLASS: ClassId = UNKNOWN;

/// Camera rays beyond this distance see nothing.
const CAMERA_FAR: f64 = 100.0;

/// Per-pixel ground truth of one camera view.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthImage {
    pub width: u32,
    pub height: u32,
    pub class: Vec<ClassId>,
    /// World landmark id, 0 off landmarks.
    pub landmark: Vec<u32>,
    /// Key of the persistent world patch the pixel sees.
    pub patch: Vec<u64>,
    /// World-frame ground position (or plate hit) of the pixel.
    pub world: Vec<[f32; 2]>,
}

impl TruthImage {
    #[inline]
    fn at(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    pub fn class_at(&self, u: u32, v: u32) -> ClassId {
        self.class[self.at(u, v)]
    }

    pub fn landmark_at(&self, u: u32, v: u32) -> u32 {
        self.landmark[self.at(u, v)]
    }
}

/// Side of the persistent-noise patches on landmark plates (m); finer than the ground
/// patches so one plate is never a single patch.
pub const PLATE_PATCH: f64 = 0.1;

/// Ray-casts the camera at `pose`.
pub fn render_truth(world: &World, rig: &SensorRig, pose: &Pose2D, patch_size: f64, exec: Execution) -> TruthImage {
    let (boards, _) = rig.visible_boards(world, pose);
    let (w, h) = (rig.width(), rig.height());
    let o = *rig.camera_origin();
    let cell = |v: f64| (v / patch_size).floor() as i64;
    let rows = map_indexed(exec, h as usize, |v| {
        let mut class = Vec::with_capacity(w as usize);
        let mut landmark = Vec::with_capacity(w as usize);
        let mut patch = Vec::with_capacity(w as usize);
        let mut xy = Vec::with_capacity(w as usize);
        for u in 0..w {
            let d = rig.pixel_ray(u, v as u32);
            let (_, hit) = cast(&o, d, &boards, CAMERA_FAR);
            match hit {
                Hit::Ground { x, y } => {
                    let (wx, wy) = pose.transform_point(x, y);
                    class.push(world.class_at(wx, wy).unwrap_or(NO_CLASS));
                    landmark.push(0);
                    patch.push(hash_keys(0, &[0, cell(wx), cell(wy)]));
                    xy.push([wx as f32, wy as f32]);
                }
                Hit::Board { index, lateral, z } => {
                    let b = &boards[index];
                    let (wx, wy) = pose.transform_point(b.x + lateral * -b.yaw.sin(), b.y + lateral * b.yaw.cos());
                    class.push(b.class);
                    landmark.push(b.id);
                    let plate = |v: f64| (v / PLATE_PATCH).floor() as i64;
                    patch.push(hash_keys(0, &[1, b.id as i64, plate(lateral + b.half_width), plate(z)]));
                    xy.push([wx as f32, wy as f32]);
                }
                Hit::Nothing => {
                    class.push(NO_CLASS);
                    landmark.push(0);
                    patch.push(0);
                    xy.push([f32::NAN, f32::NAN]);
                }
            }
        }
        (class, landmark, patch, xy)
    });
    let mut img = TruthImage {
        width: w,
        height: h,
        class: Vec::with_capacity((w * h) as usize),
        landmark: Vec::with_capacity((w * h) as usize),
        patch: Vec::with_capacity((w * h) as usize),
        world: Vec::with_capacity((w * h) as usize),
    };
    for (c, l, p, xy) in rows {
        img.class.extend(c);
        img.landmark.extend(l);
        img.patch.extend(p);
        img.world.extend(xy);
    }
    img
}

/// Read-only state shared by every pixel of one frame.
pub(crate) struct Perceiver<'a> {
    pub noise: &'a NoiseSpec,
    pub emitter: Emitter,
    pub taxonomy: &'a Taxonomy,
    pub world: Option<&'a World>,
    /// Seed of the persistent per-patch behavior.
    pub seed: u64,
}

impl<'a> Perceiver<'a> {
    pub fn new(noise: &'a NoiseSpec, taxonomy: &'a Taxonomy, world: Option<&'a World>, seed: u64) -> Self {
        Self {
            noise,
            emitter: Emitter::new(taxonomy.len(), noise.temperature, noise.spread),
            taxonomy,
            world,
            seed,
        }
    }

    fn confuse(&self, truth: ClassId, h: u64) -> ClassId {
        let thing = self.taxonomy.is_thing(truth);
        let k = self.taxonomy.len() as ClassId;
        let mut peers: Vec<ClassId> = (0..k)
            .filter(|&c| c != truth && self.taxonomy.is_thing(c) == thing)
            .collect();
        if peers.is_empty() {
            peers = (0..k).filter(|&c| c != truth).collect();
        }
        peers[(h % peers.len() as u64) as usize]
    }

    /// Emits the perception of a pixel with truth `truth` seeing patch `key` at world `xy`.
    /// Returns `(u, label)`.
    pub fn perceive<R: Rng>(&self, truth: ClassId, key: u64, xy: [f32; 2], rng: &mut R, alpha: &mut [f32]) -> (f32, ClassId) {
        let n = self.noise;
        let (lo, hi) = if self.taxonomy.is_thing(truth) {
            n.thing_confidence
        } else {
            n.stuff_confidence
        };
        let k = key as i64;
        let mut c = lo + (hi - lo) * unit(hash_keys(self.seed, &[k, 0]));
        let mut label = truth;
        if unit(hash_keys(self.seed, &[k, 1])) >= c {
            label = self.confuse(truth, hash_keys(self.seed, &[k, 2]));
        }
        if n.flip_probability > 0.0 && rng.random::<f64>() < n.flip_probability {
            c = rng.random_range(n.noisy_confidence.0..=n.noisy_confidence.1);
            label = if rng.random::<f64>() < c {
                truth
            } else {
                self.confuse(truth, rng.random())
            };
        }
        let mut corrupted = false;
        let (x, y) = (xy[0] as f64, xy[1] as f64);
        if let Some(region) = n.corruption.iter().find(|r| r.contains(x, y)) {
            if rng.random::<f64>() < region.probability {
                let relabel = match region.corruption {
                    Corruption::Relabel { class } => {
                        Some(if class == truth { (class + 1) % self.taxonomy.len() as ClassId } else { class })
                    }
                    Corruption::Ghost { shift } => self.world.and_then(|w| w.class_at(x + shift[0], y + shift[1])),
                };
                if let Some(l) = relabel {
                    label = l;
                    c = rng.random_range(region.confidence.0..=region.confidence.1);
                    corrupted = true;
                }
            }
        }
        let emitted = if corrupted { c } else { n.mode.apply(c) };
        (self.emitter.emit(label, emitted, rng, alpha), label)
    }
}

/// Landmark silhouettes dilated by `width` pixels: `(id, class)` of the nearest-id landmark
/// for background pixels near one.
fn leak_map(truth: &TruthImage, width: u32) -> Vec<(u32, ClassId)> {
    let (w, h) = (truth.width as i64, truth.height as i64);
    let mut out = vec![(0u32, NO_CLASS); truth.class.len()];
    let r = width as i64;
    for v in 0..h {
        for u in 0..w {
            let i = (v * w + u) as usize;
            let id = truth.landmark[i];
            if id == 0 {
                continue;
            }
            for dv in -r..=r {
                for du in -r..=r {
                    let (uu, vv) = (u + du, v + dv);
                    if uu < 0 || vv < 0 || uu >= w || vv >= h {
                        continue;
                    }
                    let j = (vv * w + uu) as usize;
                    if truth.landmark[j] == 0 && (out[j].0 == 0 || id < out[j].0) {
                        out[j] = (id, truth.class[i]);
                    }
                }
            }
        }
    }
    out
}

/// Simulated network output for one camera view.
///
/// Persistent behavior (patch confidence and confusion) depends on `perception_seed` only, so
/// a surface is misperceived the same way in every frame; transient noise, leaking and
/// instance numbering depend on `frame_seed`.
#[allow(clippy::too_many_arguments)]
pub fn render_frame(
    truth: &TruthImage,
    world: &World,
    noise: &NoiseSpec,
    taxonomy: &Taxonomy,
    perception_seed: u64,
    frame_seed: u64,
    timestamp: f64,
    exec: Execution,
) -> PerceptionFrame {
    let k = taxonomy.len();
    let perceiver = Perceiver::new(noise, taxonomy, Some(world), perception_seed);
    let (w, h) = (truth.width, truth.height);

    let max_id = truth.landmark.iter().copied().max().unwrap_or(0) as usize;
    let mut ids: Vec<u32> = (1..=max_id as u32).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(hash_keys(frame_seed, &[-1])));
    let frame_id = |l: u32| ids[l as usize - 1];

    let leaks = (noise.leak_width > 0 && noise.leaking_fraction > 0.0).then(|| leak_map(truth, noise.leak_width));

    let rows = map_indexed(exec, h as usize, |v| {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_keys(frame_seed, &[v as i64]));
        let mut alpha = vec![0f32; w as usize * k];
        let mut unc = vec![1f32; w as usize];
        let mut inst = vec![0u32; w as usize];
        for u in 0..w as usize {
            let i = v * w as usize + u;
            let slot = &mut alpha[u * k..(u + 1) * k];
            if let Some(leaks) = &leaks {
                let (lid, lclass) = leaks[i];
                if lid > 0 && rng.random::<f64>() < noise.leaking_fraction {
                    let (lo, hi) = noise.thing_confidence;
                    let c = noise.mode.apply(rng.random_range(lo..=hi));
                    unc[u] = perceiver.emitter.emit(lclass, c, &mut rng, slot);
                    inst[u] = frame_id(lid);
                    continue;
                }
            }
            let t = truth.class[i];
            if t == NO_CLASS {
                continue;
            }
            let (uu, label) = perceiver.perceive(t, truth.patch[i], truth.world[i], &mut rng, slot);
            unc[u] = uu;
            let lm = truth.landmark[i];
            if lm > 0 && taxonomy.is_thing(label) {
                inst[u] = frame_id(lm);
            }
        }
        (alpha, unc, inst)
    });
    let n = w as usize * h as usize;
    let (mut alpha, mut unc, mut inst) = (Vec::with_capacity(n * k), Vec::with_capacity(n), Vec::with_capacity(n));
    for (a, u, l) in rows {
        alpha.extend(a);
        unc.extend(u);
        inst.extend(l);
    }
    PerceptionFrame::from_parts(timestamp, w, h, k, alpha, unc, inst)
}
