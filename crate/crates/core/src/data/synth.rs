//! Procedural four-phase clips used as a stand-in corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::{SequenceRecord, Split};
use super::sequences::PhaseSegment;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::text::SurgicalPhase;
use crate::video::VideoTensor;

const NOISE_STD: f32 = 0.03;

type Rgb = [f32; 3];

fn base_hue(phase: SurgicalPhase) -> Rgb {
    match phase {
        SurgicalPhase::Preparation => [0.55, -0.15, -0.35],
        SurgicalPhase::CalotTriangleDissection => [-0.15, -0.5, -0.05],
        SurgicalPhase::ClippingAndCutting => [-0.4, -0.2, 0.45],
        SurgicalPhase::GallbladderDissection => [0.05, 0.35, -0.45],
    }
}

/// Soft coverage of a shape at signed distance `d` pixels (negative inside).
fn coverage(d: f32) -> f32 {
    1.0 / (1.0 + (d / 0.6).exp())
}

fn smoothstep(x: f32) -> f32 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn blend(dst: &mut Rgb, src: Rgb, a: f32) {
    for c in 0..3 {
        dst[c] += a * (src[c] - dst[c]);
    }
}

/// Signed distance from `p` to segment `a`-`b`.
fn segment_distance(p: [f32; 2], a: [f32; 2], b: [f32; 2]) -> f32 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
    let q = [a[0] + t * ab[0] - p[0], a[1] + t * ab[1] - p[1]];
    (q[0] * q[0] + q[1] * q[1]).sqrt()
}

/// Signed distance to a triangle (negative inside).
fn triangle_distance(p: [f32; 2], v: &[[f32; 2]; 3]) -> f32 {
    let edge = (0..3)
        .map(|i| segment_distance(p, v[i], v[(i + 1) % 3]))
        .fold(f32::INFINITY, f32::min);
    let side = |a: [f32; 2], b: [f32; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let s = [side(v[0], v[1]), side(v[1], v[2]), side(v[2], v[0])];
    let inside = s.iter().all(|&x| x >= 0.0) || s.iter().all(|&x| x <= 0.0);
    if inside {
        -edge
    } else {
        edge
    }
}

enum Scene {
    Preparation {
        waves: Vec<([f32; 2], f32, f32)>,
        drift: [f32; 2],
    },
    Calot {
        tri: [[f32; 2]; 3],
        pivot: usize,
        amp: f32,
        cycles: f32,
        phase0: f32,
    },
    Clipping {
        y: f32,
        half_height: f32,
        split_x: f32,
        max_gap: f32,
        tilt: f32,
    },
    Gallbladder {
        from: [f32; 2],
        to: [f32; 2],
        radii: [f32; 2],
    },
}

impl Scene {
    fn new(phase: SurgicalPhase, h: f32, w: f32, rng: &mut ChaCha8Rng) -> Scene {
        match phase {
            SurgicalPhase::Preparation => Scene::Preparation {
                waves: (0..3)
                    .map(|_| {
                        let angle = rng.random_range(0.0..std::f32::consts::TAU);
                        let freq = rng.random_range(1.0..2.5) * std::f32::consts::TAU / w;
                        ([freq * angle.cos(), freq * angle.sin()], rng.random_range(0.0..std::f32::consts::TAU), rng.random_range(0.1..0.2))
                    })
                    .collect(),
                drift: {
                    let a = rng.random_range(0.0..std::f32::consts::TAU);
                    let m = rng.random_range(0.2..0.35) * w;
                    [m * a.cos(), m * a.sin()]
                },
            },
            SurgicalPhase::CalotTriangleDissection => {
                let cx = w * rng.random_range(0.4..0.6);
                let cy = h * rng.random_range(0.45..0.55);
                let r = h * rng.random_range(0.32..0.4);
                let rot = rng.random_range(0.0..std::f32::consts::TAU);
                let tri = std::array::from_fn(|i| {
                    let a = rot + i as f32 * std::f32::consts::TAU / 3.0;
                    [cx + r * 1.2 * a.cos(), cy + r * a.sin()]
                });
                Scene::Calot {
                    tri,
                    pivot: rng.random_range(0..3),
                    amp: h * rng.random_range(0.15..0.22),
                    cycles: rng.random_range(1.5..2.5),
                    phase0: rng.random_range(0.0..std::f32::consts::TAU),
                }
            }
            SurgicalPhase::ClippingAndCutting => Scene::Clipping {
                y: h * rng.random_range(0.4..0.6),
                half_height: h * rng.random_range(0.12..0.16),
                split_x: w * rng.random_range(0.4..0.6),
                max_gap: w * rng.random_range(0.25..0.35),
                tilt: rng.random_range(-0.15..0.15),
            },
            SurgicalPhase::GallbladderDissection => {
                let from = [w * rng.random_range(0.3..0.45), h * rng.random_range(0.35..0.65)];
                let to = [w * rng.random_range(0.55..0.7), h * rng.random_range(0.35..0.65)];
                Scene::Gallbladder {
                    from,
                    to,
                    radii: [w * rng.random_range(0.25..0.3), h * rng.random_range(0.3..0.36)],
                }
            }
        }
    }

    /// Color at pixel `(x, y)` for clip progress `u` in `[0, 1]`.
    fn shade(&self, base: Rgb, x: f32, y: f32, u: f32) -> Rgb {
        let mut c = base;
        match self {
            Scene::Preparation { waves, drift } => {
                let (px, py) = (x - drift[0] * u, y - drift[1] * u);
                let tex: f32 = waves.iter().map(|(k, ph, a)| a * (k[0] * px + k[1] * py + ph).sin()).sum();
                for (i, v) in c.iter_mut().enumerate() {
                    *v += tex * [1.0, 0.6, 0.4][i];
                }
            }
            Scene::Calot { tri, pivot, amp, cycles, phase0 } => {
                blend(&mut c, [0.85, 0.75, 0.45], coverage(triangle_distance([x, y], tri)));
                let a = std::f32::consts::TAU * cycles * u + phase0;
                let v = tri[*pivot];
                let tip = [v[0] + amp * a.cos(), v[1] + amp * a.sin()];
                let tail = [tip[0] + 3.0 * amp * a.cos(), tip[1] + 3.0 * amp * a.sin()];
                let d = segment_distance([x, y], tip, tail) - 2.0;
                blend(&mut c, [-0.55, 0.2, 0.8], coverage(d));
            }
            Scene::Clipping { y: yc, half_height, split_x, max_gap, tilt } => {
                let gap = max_gap * smoothstep((u - 0.35) / 0.3);
                let center = yc + tilt * (x - split_x);
                let band = (y - center).abs() - half_height;
                let cut = if x < *split_x {
                    x - (split_x - gap / 2.0)
                } else {
                    (split_x + gap / 2.0) - x
                };
                blend(&mut c, [0.75, 0.75, 0.8], coverage(band.max(cut)));
            }
            Scene::Gallbladder { from, to, radii } => {
                let s = 1.0 - 0.5 * u;
                let cx = from[0] + (to[0] - from[0]) * u;
                let cy = from[1] + (to[1] - from[1]) * u;
                let (rx, ry) = (radii[0] * s, radii[1] * s);
                let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
                let d = ((dx * dx + dy * dy).sqrt() - 1.0) * rx.min(ry);
                blend(&mut c, [0.8, 0.55, -0.3], coverage(d));
            }
        }
        c
    }
}

fn phase_rng(phase: SurgicalPhase, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (phase.code() as u64 + 1))
}

/// Deterministic procedural clip whose appearance and motion identify `phase`.
pub fn synth_phase_video(phase: SurgicalPhase, seed: u64, frames: usize, h: usize, w: usize) -> Result<VideoTensor> {
    if frames % 4 != 1 || h == 0 || w == 0 || !h.is_multiple_of(8) || !w.is_multiple_of(8) {
        return Err(Error::shape(format!(
            "synthetic clip needs 1+4k frames and sides divisible by 8, got {frames}x{h}x{w}"
        )));
    }
    let mut rng = phase_rng(phase, seed);
    let scene = Scene::new(phase, h as f32, w as f32, &mut rng);
    let base = base_hue(phase);
    let noise = Normal::new(0.0f32, NOISE_STD).expect("valid std");
    let mut data = Vec::with_capacity(frames * h * w * 3);
    for t in 0..frames {
        let u = if frames > 1 { t as f32 / (frames - 1) as f32 } else { 0.0 };
        for y in 0..h {
            for x in 0..w {
                let c = scene.shade(base, x as f32 + 0.5, y as f32 + 0.5, u);
                for v in c {
                    data.push((v + noise.sample(&mut rng)).clamp(-1.0, 1.0));
                }
            }
        }
    }
    VideoTensor::new(Tensor::new(vec![frames, h, w, 3], data)?)
}

/// A set of synthetic source videos, each made of four consecutive phase segments.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub split: Split,
    pub videos: usize,
    pub segment_frames: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl SyntheticCorpus {
    pub fn video_id(&self, index: usize) -> String {
        format!("{}{index:03}", self.split.as_str())
    }

    pub fn segments(&self) -> Vec<PhaseSegment> {
        let n = self.segment_frames;
        (0..self.videos)
            .flat_map(|v| {
                SurgicalPhase::ALL.into_iter().enumerate().map(move |(k, phase)| PhaseSegment {
                    video_id: self.video_id(v),
                    phase,
                    first_frame: k * n,
                    last_frame: (k + 1) * n - 1,
                })
            })
            .collect()
    }

    fn segment_seed(&self, video_id: &str) -> u64 {
        let split_tag: u64 = match self.split {
            Split::Train => 0x5452,
            Split::Eval => 0x4556,
        };
        let index: u64 = video_id
            .trim_start_matches(self.split.as_str())
            .parse()
            .unwrap_or(u64::MAX);
        self.seed ^ (split_tag << 32) ^ index.wrapping_mul(1_000_003)
    }

    pub fn render_segment(&self, seg: &PhaseSegment) -> Result<VideoTensor> {
        synth_phase_video(seg.phase, self.segment_seed(&seg.video_id), seg.len(), self.height, self.width)
    }

    /// Frames of `record` cut from its rendered source segment.
    pub fn clip(&self, record: &SequenceRecord) -> Result<VideoTensor> {
        let seg = self
            .segments()
            .into_iter()
            .find(|s| s.video_id == record.video_id && s.contains(record.start_frame))
            .ok_or_else(|| Error::Input(format!("record {}@{} is outside the corpus", record.video_id, record.start_frame)))?;
        if seg.phase != record.phase || !record.source_frames().all(|f| seg.contains(f)) {
            return Err(Error::Input(format!(
                "record {}@{} does not lie inside one {} segment",
                record.video_id, record.start_frame, record.phase
            )));
        }
        let source = self.render_segment(&seg)?;
        let order: Vec<usize> = record.source_frames().map(|f| f - seg.first_frame).collect();
        source.reorder(&order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_range_and_determinism() {
        let a = synth_phase_video(SurgicalPhase::Preparation, 1, 17, 32, 48).unwrap();
        assert_eq!(a.shape(), &[17, 32, 48, 3]);
        assert!(a.as_tensor().data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let b = synth_phase_video(SurgicalPhase::Preparation, 1, 17, 32, 48).unwrap();
        assert!(a.as_tensor().data().iter().zip(b.as_tensor().data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn illegal_dims() {
        assert!(synth_phase_video(SurgicalPhase::Preparation, 1, 16, 32, 48).is_err());
        assert!(synth_phase_video(SurgicalPhase::Preparation, 1, 17, 30, 48).is_err());
    }

    #[test]
    fn phases_differ_in_mean_color() {
        let means: Vec<[f64; 3]> = SurgicalPhase::ALL
            .iter()
            .map(|&p| {
                let v = synth_phase_video(p, 3, 9, 32, 48).unwrap();
                let mut m = [0.0; 3];
                for px in v.as_tensor().data().chunks_exact(3) {
                    for c in 0..3 {
                        m[c] += px[c] as f64;
                    }
                }
                m.map(|x| x / (v.as_tensor().numel() / 3) as f64)
            })
            .collect();
        for i in 0..4 {
            for j in i + 1..4 {
                let d: f64 = (0..3).map(|c| (means[i][c] - means[j][c]).powi(2)).sum::<f64>().sqrt();
                assert!(d > 0.2, "phases {i} and {j} too close: {d}");
            }
        }
    }

    #[test]
    fn clip_matches_segment_frames() {
        let corpus = SyntheticCorpus {
            split: Split::Train,
            videos: 2,
            segment_frames: 65,
            height: 32,
            width: 48,
            seed: 0,
        };
        let seg = corpus.segments()[5].clone();
        let rec = SequenceRecord {
            video_id: seg.video_id.clone(),
            start_frame: seg.first_frame + 3,
            length: 17,
            stride: 2,
            phase: seg.phase,
            path: String::new(),
        };
        let clip = corpus.clip(&rec).unwrap();
        let src = corpus.render_segment(&seg).unwrap();
        assert_eq!(clip.frame(4).unwrap(), src.frame(3 + 8).unwrap());
        let bad = SequenceRecord { start_frame: seg.last_frame - 5, ..rec };
        assert!(corpus.clip(&bad).is_err());
    }
}
