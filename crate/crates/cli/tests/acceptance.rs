//! End-to-end acceptance suite: one PASS/FAIL line per criterion.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use surgen::data::{
    build_manifest, center_crop_width, enumerate_sequences, read_svt, write_svt, DatasetManifest, PhaseSegment, Split,
    SvtTensor, SyntheticCorpus,
};
use surgen::denoiser::{init_denoiser, DenoiserConfig};
use surgen::diffusion::{forward_diffuse, predict_x0, NoiseSchedule};
use surgen::eval::{auroc_binary, frechet_distance, GaussianStats};
use surgen::gradcheck::{check_denoiser, check_vae};
use surgen::text::{SurgicalPhase, TokenizerTable};
use surgen::train::{load_component, train_denoiser, train_vae, ClipSet, TrainConfig};
use surgen::vae::{init_vae, VaeConfig};
use surgen::{Component, ParameterStore, Tensor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn diffusion_algebra() -> Outcome {
    let start = Instant::now();
    let sched = NoiseSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..64);
        let x0 = Tensor::<f64>::randn(&[n], 1.0, &mut rng);
        let eps = Tensor::<f64>::randn(&[n], 1.0, &mut rng);
        let t = rng.random_range(0..sched.len());
        let xt = forward_diffuse(&x0, t, &eps, &sched).unwrap();
        let back = predict_x0(&xt, t, &eps, &sched).unwrap();
        for (a, b) in back.data().iter().zip(x0.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    let ab = sched.alpha_bars();
    let last = ab[ab.len() - 1];
    let decreasing = ab.windows(2).all(|w| w[1] < w[0]);
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-6 && last < 1e-3 && decreasing && elapsed < Duration::from_secs(1),
        format!(
            "max round-trip error {worst:.2e}, alpha_bar[T-1] {last:.2e}, strictly decreasing {decreasing}, {:.3} s",
            secs(elapsed)
        ),
    )
}

fn stats(mu: &[f64], sigma: DMatrix<f64>) -> GaussianStats {
    GaussianStats {
        mu: DVector::from_column_slice(mu),
        sigma,
        n: 1000,
    }
}

fn frechet_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut identical = 0.0f64;
    let mut uni = 0.0f64;
    let mut commuting = 0.0f64;
    for _ in 0..100 {
        let d = 6;
        let m = DMatrix::from_fn(d, d + 3, |_, _| rng.random::<f64>() - 0.5);
        let s = stats(&(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>(), &m * m.transpose());
        identical = identical.max(frechet_distance(&s, &s).unwrap().abs());

        let (m1, m2) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (s1, s2) = (rng.random_range(0.01..3.0f64), rng.random_range(0.01..3.0f64));
        let got = frechet_distance(
            &stats(&[m1], DMatrix::from_element(1, 1, s1 * s1)),
            &stats(&[m2], DMatrix::from_element(1, 1, s2 * s2)),
        )
        .unwrap();
        let want = (m1 - m2).powi(2) + (s1 - s2).powi(2);
        uni = uni.max((got - want).abs());

        let q = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5).qr().q();
        let la: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..4.0)).collect();
        let lb: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..4.0)).collect();
        let ma: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mb: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sig = |l: &[f64]| &q * DMatrix::from_diagonal(&DVector::from_column_slice(l)) * q.transpose();
        let got = frechet_distance(&stats(&ma, sig(&la)), &stats(&mb, sig(&lb))).unwrap();
        let want: f64 = ma.iter().zip(&mb).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            + la.iter().zip(&lb).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum::<f64>();
        commuting = commuting.max((got - want).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        identical <= 1e-6 && uni <= 1e-9 && commuting <= 1e-6 && elapsed < Duration::from_secs(10),
        format!(
            "identical {identical:.1e}, univariate {uni:.1e}, commuting {commuting:.1e}, {:.3} s",
            secs(elapsed)
        ),
    )
}

fn brute_auroc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &p) in positive.iter().enumerate() {
        for (j, &q) in positive.iter().enumerate() {
            if p && !q {
                pairs += 1.0;
                num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    num / pairs
}

fn auroc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut with_ties = 0;
    for _ in 0..500 {
        let n = rng.random_range(2..=100);
        let levels = rng.random_range(2..20);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let mut positive: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        positive[0] = true;
        positive[1] = false;
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            with_ties += 1;
        }
        if auroc_binary(&scores, &positive).unwrap() != brute_auroc(&scores, &positive) {
            mismatches += 1;
        }
    }
    let worked = auroc_binary(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    outcome(
        mismatches == 0 && with_ties > 0 && worked == 0.75,
        format!("{mismatches} mismatches over 500 instances ({with_ties} with ties), worked example {worked}"),
    )
}

fn data_pipeline(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    for _ in 0..1000 {
        let first = rng.random_range(0..200);
        let len = rng.random_range(1..300);
        let length = rng.random_range(1..60);
        let stride = rng.random_range(1..5);
        let seg = PhaseSegment::new("v", SurgicalPhase::Preparation, first, first + len - 1).unwrap();
        let starts = enumerate_sequences(&seg, length, stride).unwrap();
        let span = (length - 1) * stride;
        let brute: Vec<usize> = (first..first + len).filter(|s| s + span < first + len).collect();
        let formula = len.saturating_sub(span);
        if starts != brute || starts.len() != formula {
            bad += 1;
        }
    }
    let seg97 = PhaseSegment::new("v", SurgicalPhase::Preparation, 0, 96).unwrap();
    let n97 = enumerate_sequences(&seg97, 49, 2).unwrap().len();

    let frame = Tensor::<f32>::from_fn(&[2, 840, 3], |i| ((i / 3) % 840) as f32);
    let cropped = center_crop_width(&frame, 720).unwrap();
    let cols: Vec<usize> = cropped.data().chunks(3).take(720).map(|p| p[0] as usize).collect();
    let crop_ok = cropped.shape() == [2, 720, 3] && cols == (60..780).collect::<Vec<_>>();

    let f = Tensor::<f32>::from_fn(&[3, 4, 5], |i| (i as f32 * 0.37).sin() * 1e3 + f32::EPSILON);
    let u = SvtTensor::U8 {
        shape: vec![2, 3, 4, 3],
        data: (0..72).map(|i| (i * 7 % 256) as u8).collect(),
    };
    let mut svt_ok = true;
    for (name, t) in [("f.svt", SvtTensor::F32(f)), ("u.svt", u)] {
        let path = dir.join(name);
        write_svt(&path, &t).unwrap();
        let back = read_svt(&path).unwrap();
        let bits_equal = match (&t, &back) {
            (SvtTensor::F32(a), SvtTensor::F32(b)) => {
                a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => t == back,
        };
        svt_ok &= bits_equal;
    }
    outcome(
        bad == 0 && n97 == 1 && crop_ok && svt_ok,
        format!(
            "{bad} count mismatches over 1000 segments, 97-frame segment -> {n97} sequence(s), crop keeps 60..779 {crop_ok}, SVT bit-exact {svt_ok}"
        ),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let dcfg = DenoiserConfig {
        d_model: 16,
        n_heads: 2,
        n_blocks: 2,
        latent_channels: 4,
        d_text: 8,
        max_text_len: 3,
        max_grid: [2, 1, 2],
        mlp_ratio: 2,
        ..DenoiserConfig::toy()
    };
    let vcfg = VaeConfig {
        channels: [4, 8, 8],
        latent_channels: 4,
        blocks: 1,
        kl_weight: 1e-2,
    };
    let d = check_denoiser(&dcfg, 150, 5).unwrap();
    let v = check_vae(&vcfg, 5, 16, 150, 6).unwrap();
    let elapsed = start.elapsed();
    outcome(
        d.checked >= 100
            && v.checked >= 100
            && d.max_rel_error < 1e-3
            && v.max_rel_error < 1e-3
            && elapsed < Duration::from_secs(300),
        format!(
            "denoiser {} params max rel err {:.2e}, VAE {} params max rel err {:.2e}, {:.1} s",
            d.checked,
            d.max_rel_error,
            v.checked,
            v.max_rel_error,
            secs(elapsed)
        ),
    )
}

fn tiny_clips() -> ClipSet {
    let corpus = SyntheticCorpus {
        split: Split::Train,
        videos: 2,
        segment_frames: 9,
        height: 16,
        width: 16,
        seed: 5,
    };
    let m = build_manifest(&corpus.segments(), 1, 5, 2, 0).unwrap();
    ClipSet::new(
        m.records.iter().map(|r| corpus.clip(r).unwrap()).collect(),
        m.records.iter().map(|r| r.phase).collect(),
    )
    .unwrap()
}

fn tiny_cfg(steps: usize, micro_batch: usize, accum: usize) -> TrainConfig {
    TrainConfig {
        steps,
        micro_batch,
        accum,
        lr: 1e-3,
        seed: 11,
        ..TrainConfig::toy()
    }
}

fn frozen_and_accumulation() -> Outcome {
    let data = tiny_clips();
    let vcfg = VaeConfig {
        channels: [4, 8, 8],
        latent_channels: 4,
        blocks: 1,
        kl_weight: 1e-6,
    };
    let dcfg = DenoiserConfig {
        d_model: 16,
        n_heads: 2,
        n_blocks: 1,
        latent_channels: 4,
        max_grid: [2, 1, 1],
        mlp_ratio: 2,
        ..DenoiserConfig::toy()
    };
    let mut vae = train_vae(&tiny_cfg(2, 2, 2), init_vae(&vcfg, 0).unwrap(), &data, None).unwrap().params;
    vae.freeze();
    let text = TokenizerTable::default();
    let (vae_hash, text_hash) = (vae.fingerprint(), text.fingerprint());
    let sched = NoiseSchedule::default();
    let (_, check) = train_denoiser(
        &tiny_cfg(3, 2, 2),
        init_denoiser(&dcfg, 0).unwrap(),
        &data,
        &vae,
        &text,
        &sched,
        None,
    )
    .unwrap();
    let frozen = check.unchanged() && vae.fingerprint() == vae_hash && text.fingerprint() == text_hash;

    let init: ParameterStore<f64> = init_denoiser(&dcfg, 3).unwrap().cast();
    let run = |micro, accum| {
        train_denoiser(&tiny_cfg(2, micro, accum), init.clone(), &data, &vae, &text, &sched, None)
            .unwrap()
            .0
            .params
    };
    let (a, b) = (run(1, 4), run(4, 1));
    let (mut diff, mut norm) = (0.0f64, 0.0f64);
    for (name, p0) in init.params() {
        for ((x0, xa), xb) in p0.data().iter().zip(a.params()[name].data()).zip(b.params()[name].data()) {
            diff += ((xa - x0) - (xb - x0)).powi(2);
            norm += (xa - x0).powi(2);
        }
    }
    let rel = (diff / norm).sqrt();
    outcome(
        frozen && norm > 0.0 && rel < 1e-5,
        format!("VAE/text hashes unchanged {frozen}, accumulation relative delta difference {rel:.2e}"),
    )
}

fn surgen(args: &[&str], out: &Path, data_root: &Path) -> String {
    let output = Command::new(env!("CARGO_BIN_EXE_surgen"))
        .args(["--profile", "toy", "--seed", "0"])
        .arg("--out")
        .arg(out)
        .arg("--data-root")
        .arg(data_root)
        .args(args)
        .env_remove("SURGEN_DATA_ROOT")
        .output()
        .expect("run surgen");
    assert!(
        output.status.success(),
        "surgen {args:?} failed ({}): {}",
        output.status,
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).unwrap()
}

struct Pipeline {
    out: PathBuf,
    data_root: PathBuf,
    report: Value,
    report_bytes: Vec<u8>,
    elapsed: Duration,
}

fn run_pipeline(dir: &Path) -> Pipeline {
    let (out, data_root) = (dir.join("run"), dir.join("data"));
    std::fs::create_dir_all(&data_root).unwrap();
    let start = Instant::now();
    surgen(&["build-data"], &out, &data_root);
    surgen(&["train", "vae"], &out, &data_root);
    surgen(&["train", "denoiser"], &out, &data_root);
    surgen(&["evaluate"], &out, &data_root);
    let elapsed = start.elapsed();
    let report_bytes = std::fs::read(out.join("reports/eval.json")).unwrap();
    Pipeline {
        report: serde_json::from_slice(&report_bytes).unwrap(),
        report_bytes,
        out,
        data_root,
        elapsed,
    }
}

fn overfit(p: &Pipeline) -> Outcome {
    let vae = load_component(&p.out.join("checkpoints/vae"), Component::Vae).unwrap();
    let m = DatasetManifest::load(&p.data_root.join("prepared/toy/train.json")).unwrap();
    let root = p.data_root.join("prepared/toy");
    let picks: Vec<_> = SurgicalPhase::ALL
        .iter()
        .map(|&ph| m.records.iter().find(|r| r.phase == ph).unwrap().clone())
        .collect();
    let four = DatasetManifest {
        records: picks,
        ..m.clone()
    };
    let data = ClipSet::from_manifest(&four, &root).unwrap();
    let cfg = TrainConfig {
        steps: 1000,
        micro_batch: 4,
        accum: 2,
        lr: 1e-3,
        seed: 0,
        ..TrainConfig::toy()
    };
    let start = Instant::now();
    let (run, _) = train_denoiser(
        &cfg,
        init_denoiser(&DenoiserConfig::toy(), 0).unwrap(),
        &data,
        &vae,
        &TokenizerTable::default(),
        &NoiseSchedule::default(),
        None,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let tail = run.log[run.log.len() - 100..].iter().map(|r| r.loss).sum::<f64>() / 100.0;
    outcome(
        data.len() == 4 && tail < 0.05 && elapsed < Duration::from_secs(600),
        format!("final 100-step mean loss {tail:.4} on {} clips, {:.0} s", data.len(), secs(elapsed)),
    )
}

fn metric(r: &Value, path: &[&str]) -> f64 {
    path.iter().fold(r, |v, k| &v[*k]).as_f64().unwrap_or(f64::NAN)
}

fn end_to_end(p: &Pipeline) -> Outcome {
    let r = &p.report;
    let (fid, fvd) = (metric(r, &["fid"]), metric(r, &["fvd"]));
    let (bfid, bfvd) = (metric(r, &["baseline", "fid"]), metric(r, &["baseline", "fvd"]));
    let same_extractors = r["extractors"].is_object();
    outcome(
        fid < bfid && fvd < bfvd && same_extractors && p.elapsed < Duration::from_secs(3600),
        format!(
            "FID {fid:.3} vs untrained {bfid:.3}, FVD {fvd:.3} vs untrained {bfvd:.3}, pipeline {:.1} min",
            secs(p.elapsed) / 60.0
        ),
    )
}

fn phase_alignment(p: &Pipeline) -> Outcome {
    let r = &p.report;
    let real = metric(r, &["real_top1"]);
    let (top1, auroc) = (metric(r, &["top1"]), metric(r, &["auroc"]));
    let n = r["n_generated"].as_u64().unwrap_or(0);
    let balanced = r["per_phase_generated"]
        .as_object()
        .is_some_and(|m| m.len() == 4 && m.values().all(|v| v.as_u64() == Some(100)));
    outcome(
        real >= 0.9 && n == 400 && balanced && top1 >= 0.5 && auroc >= 0.8,
        format!("real top-1 {real:.4}, generated top-1 {top1:.4}, macro AUROC {auroc:.4} over {n} clips"),
    )
}

fn determinism(p: &Pipeline) -> Outcome {
    let sample = |dir: &Path| {
        surgen(
            &["sample", "--prompt", "Laparoscopic cholecystectomy during clipping and cutting", "--n", "2", "--out-dir", dir.to_str().unwrap()],
            &p.out,
            &p.data_root,
        );
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files
            .iter()
            .map(|f| (f.file_name().unwrap().to_owned(), std::fs::read(f).unwrap()))
            .collect::<Vec<_>>()
    };
    let a = sample(&p.out.join("det_a"));
    let b = sample(&p.out.join("det_b"));
    let samples_equal = a.len() == 2 && a == b;
    surgen(&["evaluate"], &p.out, &p.data_root);
    let again = std::fs::read(p.out.join("reports/eval.json")).unwrap();
    let report_equal = again == p.report_bytes;
    outcome(
        samples_equal && report_equal,
        format!("sample reruns byte-identical {samples_equal}, evaluate rerun byte-identical {report_equal}"),
    )
}

/// Writes straight to the process stdout so the line survives test output capture.
fn report(n: usize, name: &str, o: Outcome) -> bool {
    let line = format!(
        "criterion {n:>2} {name}: {} ({})\n",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    let mut out = std::io::stdout();
    out.write_all(line.as_bytes()).and_then(|_| out.flush()).unwrap();
    o.pass
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let mut failed = Vec::new();
    let mut check = |n: usize, name: &str, o: Outcome| {
        if !report(n, name, o) {
            failed.push(n);
        }
    };
    check(1, "diffusion algebra", diffusion_algebra());
    check(2, "Frechet oracles", frechet_oracles());
    check(3, "AUROC oracle", auroc_oracle());
    check(4, "data pipeline", data_pipeline(dir.path()));
    check(5, "gradient check", gradient_check());
    check(6, "frozenness and accumulation", frozen_and_accumulation());
    let pipeline = run_pipeline(dir.path());
    check(8, "end-to-end directional", end_to_end(&pipeline));
    check(9, "phase alignment", phase_alignment(&pipeline));
    check(7, "overfit", overfit(&pipeline));
    check(10, "determinism", determinism(&pipeline));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
