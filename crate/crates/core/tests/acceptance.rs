//! Acceptance suite. Runs every criterion in order and prints one
//! `PASS`/`FAIL` line each; the process fails if any criterion fails or
//! overruns its time limit. Only in-process backends are used.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dts_core::attention::{
    base_attention, build_condition_map, build_size_map, covered_queries, modulate, modulate_with_lambda,
    modulation_bias, raw_scores, ModulationParams, SegmentSpec,
};
use dts_core::diffusion::{
    reverse_sample, vcjd, AnalyticGaussian, Denoiser, JointContext, MockDenoiser, NoiseSchedule, Purpose, RngStream,
    SamplerConfig, ScheduleConfig, ZeroDenoiser,
};
use dts_core::layout::{
    inclusion_check, numerical_matching, spatial_matching, BoundingBox, Canvas, ExpectedCounts, GroupLayout,
    InstanceKind, InstanceLayout, Joint, Keypoints, SceneLayout, SpatialCondition,
};
use dts_core::pyramid::{interpolate, pixel_perturb, pixel_perturb_traced, Boundary, InterpMethod, PyramidConfig};
use dts_core::run::{generate_with, replay, BackendChoice, GenerateParams};
use dts_core::view::{crop, plan_windows, stitch, ConditionSet, Dims, ViewCondition, Window, WindowPlan};
use dts_core::LatentTensor;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "stitching consensus",
            limit: Duration::from_secs(10),
            run: stitching_consensus,
        },
        Criterion {
            name: "degenerate tiling equivalence",
            limit: Duration::from_secs(5),
            run: degenerate_tiling,
        },
        Criterion {
            name: "analytic moment test",
            limit: Duration::from_secs(60),
            run: analytic_moments,
        },
        Criterion {
            name: "pixel perturbation statistics",
            limit: Duration::from_secs(10),
            run: perturbation_statistics,
        },
        Criterion {
            name: "pyramid dimensions and replay",
            limit: Duration::from_secs(120),
            run: pyramid_dimensions,
        },
        Criterion {
            name: "attention modulation",
            limit: Duration::from_secs(5),
            run: attention_modulation,
        },
        Criterion {
            name: "layout metrics oracle",
            limit: Duration::from_secs(5),
            run: layout_metrics,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let line = match outcome {
            Ok(detail) if elapsed <= c.limit => format!("PASS {} ({:.2?} / {:?}) {detail}", c.name, elapsed, c.limit),
            Ok(detail) => {
                failed += 1;
                format!("FAIL {} over time ({:.2?} / {:?}) {detail}", c.name, elapsed, c.limit)
            }
            Err(why) => {
                failed += 1;
                format!("FAIL {} ({:.2?}) {why}", c.name, elapsed)
            }
        };
        println!("{line}");
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn normal(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize) -> LatentTensor {
    LatentTensor::from_fn(h, w, d, |_, _, _| rng.random_range(-3.0..3.0))
}

/// Covering plan of 1 to 6 windows: a random grid of cells, each grown
/// outward by a random margin so neighbours overlap.
fn random_plan(rng: &mut ChaCha8Rng) -> WindowPlan {
    let canvas = Dims::new(rng.random_range(1..=96), rng.random_range(1..=96));
    let n = rng.random_range(1..=6usize);
    let (gr, gc) = loop {
        let gr = rng.random_range(1..=n);
        let gc = n / gr;
        if gr <= canvas.height && gc <= canvas.width {
            break (gr, gc);
        }
    };
    let cuts = |len: usize, parts: usize| -> Vec<usize> { (0..=parts).map(|i| i * len / parts).collect() };
    let (rows, cols) = (cuts(canvas.height, gr), cuts(canvas.width, gc));
    let mut windows = Vec::new();
    for i in 0..gr {
        for j in 0..gc {
            let grow = |rng: &mut ChaCha8Rng| rng.random_range(0..=12usize);
            let r0 = rows[i].saturating_sub(grow(rng));
            let r1 = (rows[i + 1] + grow(rng)).min(canvas.height);
            let c0 = cols[j].saturating_sub(grow(rng));
            let c1 = (cols[j + 1] + grow(rng)).min(canvas.width);
            windows.push(Window {
                index: 0,
                row: r0,
                col: c0,
                height: r1 - r0,
                width: c1 - c0,
            });
        }
    }
    // fill the remaining budget with arbitrary rectangles
    while windows.len() < n {
        let row = rng.random_range(0..canvas.height);
        let col = rng.random_range(0..canvas.width);
        windows.push(Window {
            index: 0,
            row,
            col,
            height: rng.random_range(1..=canvas.height - row),
            width: rng.random_range(1..=canvas.width - col),
        });
    }
    WindowPlan::new(canvas, windows).expect("plan covers the canvas")
}

fn stitching_consensus() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5717c4);
    let mut overlapped = 0;
    for case in 0..200 {
        let plan = random_plan(&mut rng);
        ensure!((1..=6).contains(&plan.len()), "case {case}: {} windows", plan.len());
        let Dims { height, width } = plan.canvas();
        let d = rng.random_range(1..=4);
        let z = normal(&mut rng, height, width, d);

        let views: Vec<LatentTensor> = plan.windows().iter().map(|w| crop(&z, w).unwrap()).collect();
        let back = stitch(views.iter().zip(plan.windows()), plan.canvas()).map_err(|e| e.to_string())?;
        ensure!(back == z, "case {case}: stitch of crops differs from the canvas");

        // independent views disagree; the stitch must be their per-pixel mean
        let views: Vec<LatentTensor> = plan
            .windows()
            .iter()
            .map(|w| normal(&mut rng, w.height, w.width, d))
            .collect();
        let got = stitch(views.iter().zip(plan.windows()), plan.canvas()).map_err(|e| e.to_string())?;
        let mut sum = vec![0.0; height * width * d];
        let mut count = vec![0u32; height * width];
        for (v, w) in views.iter().zip(plan.windows()) {
            for r in 0..w.height {
                for c in 0..w.width {
                    count[(w.row + r) * width + w.col + c] += 1;
                    for k in 0..d {
                        sum[((w.row + r) * width + w.col + c) * d + k] += v.get(r, c, k);
                    }
                }
            }
        }
        if count.iter().any(|&n| n > 1) {
            overlapped += 1;
        }
        for (i, s) in sum.iter().enumerate() {
            let want = s / count[i / d] as f64;
            let have = got.as_slice()[i];
            ensure!((want - have).abs() <= 1e-12, "case {case}: flat {i} has {have}, oracle {want}");
        }
    }
    Ok(format!("200 plans, {overlapped} with overlaps"))
}

fn degenerate_tiling() -> Check {
    let sched = NoiseSchedule::linear(50).map_err(|e| e.to_string())?;
    let canvas = Dims::new(24, 40);
    let plan = WindowPlan::single(canvas);
    let cs = ConditionSet::empty(canvas, 1);
    let z = RngStream::new(17, Purpose::InitialNoise).normal(24, 40, 4);
    let backends: [&dyn Denoiser; 3] = [&AnalyticGaussian::new(2.0, 1.0), &ZeroDenoiser, &MockDenoiser];
    let mut runs = 0;
    for eta in [0.0, 1.0] {
        let ctx = JointContext {
            sampler: SamplerConfig { eta },
            ..JointContext::new(23)
        };
        for b in backends {
            let joint = vcjd(&z, &cs, sched.steps(), &plan, b, &sched, &ctx).map_err(|e| e.to_string())?;
            let plain = reverse_sample(
                &z,
                sched.steps(),
                &ViewCondition::blank(Window::full(canvas)),
                b,
                &sched,
                &ctx.sampler,
                &ctx.sampler_stream().window(0),
            )
            .map_err(|e| e.to_string())?;
            let same = joint.as_slice().iter().zip(plain.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure!(same, "{} backend at eta {eta} differs", b.capabilities().name);
            runs += 1;
        }
    }
    Ok(format!("{runs} backend/eta combinations bit-identical"))
}

fn analytic_moments() -> Check {
    let sched = NoiseSchedule::from_config(&ScheduleConfig {
        steps: 200,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let canvas = Dims::new(64, 64);
    let plan = plan_windows(canvas, Dims::new(40, 40), 24).map_err(|e| e.to_string())?;
    ensure!(plan.len() == 4, "expected a 2x2 plan, got {} windows", plan.len());
    let cs = ConditionSet::empty(canvas, 1);
    let backend = AnalyticGaussian::new(2.0, 1.0);
    let mut values = Vec::new();
    for seed in 0..5 {
        let z = RngStream::new(seed, Purpose::InitialNoise).normal(64, 64, 1);
        let out = vcjd(&z, &cs, 200, &plan, &backend, &sched, &JointContext::new(seed)).map_err(|e| e.to_string())?;
        values.extend_from_slice(out.as_slice());
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let tol = 4.0 / 4096f64.sqrt();
    ensure!((mean - 2.0).abs() <= tol, "mean {mean:.5} not within {tol} of 2");
    ensure!((var - 1.0).abs() <= 0.1, "variance {var:.5} not within 10% of 1");
    Ok(format!("mean {mean:.5}, variance {var:.5} over {} values", values.len()))
}

fn perturbation_statistics() -> Check {
    let (alpha, gamma, d) = (2.0, 0.05, 1usize);
    let low = RngStream::new(31, Purpose::InitialNoise).normal(128, 128, 3);
    let interp = interpolate(&low, alpha, InterpMethod::Bilinear, Boundary::Clamp).map_err(|e| e.to_string())?;
    ensure!(interp.dims() == (256, 256, 3), "interpolated to {:?}", interp.dims());
    let stream = RngStream::new(5, Purpose::Perturb);
    let (out, trace) = pixel_perturb_traced(&low, &interp, alpha, gamma, d, &stream).map_err(|e| e.to_string())?;

    let n = 256u64 * 256;
    let binom = Binomial::new(gamma, n).map_err(|e| e.to_string())?;
    let (lo, hi) = (binom.inverse_cdf(0.0005), binom.inverse_cdf(0.9995));
    let k = trace.len() as u64;
    ensure!((lo..=hi).contains(&k), "{k} perturbed pixels outside [{lo}, {hi}]");

    // every pixel either keeps its interpolated value or equals some low-res
    // pixel in the (2d+1)^2 neighbourhood of its nearest source
    let mut replaced = 0usize;
    for r in 0..256 {
        for c in 0..256 {
            let px = out.pixel(r, c);
            if px == interp.pixel(r, c) {
                continue;
            }
            replaced += 1;
            let (cr, cc) = ((r as f64 / alpha).round() as i64, (c as f64 / alpha).round() as i64);
            let mut found = false;
            for u in -(d as i64)..=d as i64 {
                for v in -(d as i64)..=d as i64 {
                    let sr = (cr + u).clamp(0, 127) as usize;
                    let sc = (cc + v).clamp(0, 127) as usize;
                    found |= low.pixel(sr, sc) == px;
                }
            }
            ensure!(found, "pixel ({r}, {c}) is not from its source neighbourhood");
        }
    }
    ensure!(replaced <= trace.len(), "{replaced} changed pixels but {} recorded", trace.len());
    for p in &trace {
        ensure!(out.pixel(p.row, p.col) == low.pixel(p.src_row, p.src_col), "recorded source mismatch");
    }

    let untouched = pixel_perturb(&low, &interp, alpha, 0.0, d, &stream).map_err(|e| e.to_string())?;
    let exact = untouched
        .as_slice()
        .iter()
        .zip(interp.as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure!(exact, "gamma 0 changed the interpolation");
    Ok(format!("{k} of {n} perturbed, interval [{lo}, {hi}]"))
}

fn pyramid_dimensions() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let params = GenerateParams {
        canvas: Some(Canvas::new(512, 384)),
        latent_scale: 1,
        window: 64,
        stride: 32,
        channels: 4,
        backend: BackendChoice::Analytic { mean: 0.0, std: 1.0 },
        seed: 2024,
        pyramid: Some(PyramidConfig::with_phases(3)),
        ..Default::default()
    };
    let out = dir.path().join("pyramid.dtxl");
    let manifest = generate_with(&params, &AnalyticGaussian::new(0.0, 1.0), &out).map_err(|e| e.to_string())?;
    ensure!(manifest.base == Dims::new(48, 64), "base is {}", manifest.base);
    let dims: Vec<Dims> = manifest.phases.iter().map(|p| p.dims).collect();
    let want = [Dims::new(48, 64), Dims::new(96, 128), Dims::new(192, 256), Dims::new(384, 512)];
    ensure!(dims == want, "phase dims {dims:?}");
    ensure!(manifest.output.shape == [384, 512, 4], "output shape {:?}", manifest.output.shape);

    let report = replay(&manifest, &dir.path().join("replay.dtxl"), None).map_err(|e| e.to_string())?;
    ensure!(report.matches(), "replay digest {} != {}", report.actual, report.expected);
    Ok(format!("64x48 -> 512x384, digest {}", &manifest.output.sha256[..12]))
}

struct AttentionCase {
    q: Array2<f64>,
    k: Array2<f64>,
    segments: Vec<SegmentSpec>,
}

/// 8 queries by 8 keys with up to three disjoint segments.
fn attention_case(rng: &mut ChaCha8Rng) -> AttentionCase {
    let dim = rng.random_range(1..=8);
    let q = Array2::from_shape_fn((8, dim), |_| rng.random_range(-2.0..2.0));
    let k = Array2::from_shape_fn((8, dim), |_| rng.random_range(-2.0..2.0));
    let nseg = rng.random_range(0..=3usize);
    let mut segments = vec![SegmentSpec::new(vec![false; 8], vec![false; 8]); nseg];
    if nseg > 0 {
        for i in 0..8 {
            // each position is unowned or owned by one segment
            if let Some(n) = Some(rng.random_range(0..=nseg)).filter(|&n| n < nseg) {
                segments[n].query[i] = true;
            }
            if let Some(n) = Some(rng.random_range(0..=nseg)).filter(|&n| n < nseg) {
                segments[n].key[i] = true;
            }
        }
    }
    AttentionCase { q, k, segments }
}

fn attention_modulation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa77e);
    let lambdas = [0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0];
    let mut single_positive_rows = 0;
    for case in 0..500 {
        let AttentionCase { q, k, segments } = attention_case(&mut rng);
        let area = 64;
        let params = ModulationParams {
            w: rng.random_range(0.0..20.0),
            t: rng.random_range(0..=50),
            total: 50,
        };
        let a = modulate(&q, &k, &segments, &params, area).map_err(|e| e.to_string())?;
        for (i, row) in a.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            ensure!((s - 1.0).abs() <= 1e-9, "case {case}: row {i} sums to {s}");
        }

        let base = base_attention(&q, &k).map_err(|e| e.to_string())?;
        let zero = modulate_with_lambda(&q, &k, &segments, 0.0, area).map_err(|e| e.to_string())?;
        ensure!(zero == base, "case {case}: lambda 0 changed the attention");

        // positive-pair scores before the softmax never decrease with lambda,
        // and neither does each row's attention mass on its positive keys
        let raw = raw_scores(&q, &k).map_err(|e| e.to_string())?;
        let r = build_condition_map(&segments, 8, 8).map_err(|e| e.to_string())?;
        let s = build_size_map(&segments, area, 8, 8).map_err(|e| e.to_string())?;
        let covered = covered_queries(&segments, 8);
        let mut prev_scores: Option<Array2<f64>> = None;
        let mut prev_attn: Option<Array2<f64>> = None;
        for &lambda in &lambdas {
            let scores = &raw + &modulation_bias(&raw, &r, &s, &covered, lambda);
            let attn = modulate_with_lambda(&q, &k, &segments, lambda, area).map_err(|e| e.to_string())?;
            if let (Some(ps), Some(pa)) = (&prev_scores, &prev_attn) {
                for i in 0..8 {
                    let positives: Vec<usize> = (0..8).filter(|&j| r[[i, j]]).collect();
                    for &j in &positives {
                        ensure!(scores[[i, j]] >= ps[[i, j]], "case {case}: score ({i}, {j}) fell at lambda {lambda}");
                    }
                    let mass = |m: &Array2<f64>| positives.iter().map(|&j| m[[i, j]]).sum::<f64>();
                    ensure!(
                        mass(&attn) >= mass(pa) - 1e-12,
                        "case {case}: positive mass of row {i} fell at lambda {lambda}"
                    );
                    if positives.len() == 1 {
                        let j = positives[0];
                        ensure!(attn[[i, j]] >= pa[[i, j]] - 1e-12, "case {case}: A'({i}, {j}) fell");
                    }
                }
            }
            prev_scores = Some(scores);
            prev_attn = Some(attn);
        }
        single_positive_rows += (0..8).filter(|&i| (0..8).filter(|&j| r[[i, j]]).count() == 1).count();

        // a segment spanning the whole canvas is never modulated
        let full = vec![SegmentSpec::new(
            vec![true; 8],
            (0..8).map(|j| j % 2 == 0).collect(),
        )];
        let untouched = modulate_with_lambda(&q, &k, &full, 3.0, 8).map_err(|e| e.to_string())?;
        ensure!(untouched == base, "case {case}: full-size segment modulated its rows");
    }
    Ok(format!("500 instances, {single_positive_rows} single-positive rows"))
}

fn human_with_joints(id: &str, bbox: BoundingBox, points: &[(f64, f64)]) -> InstanceLayout {
    let mut joints = [Joint {
        x: 0.0,
        y: 0.0,
        visible: false,
    }; 17];
    for (j, &(x, y)) in joints.iter_mut().zip(points) {
        *j = Joint { x, y, visible: true };
    }
    InstanceLayout {
        id: id.into(),
        kind: InstanceKind::Human,
        bbox,
        caption: "a person".into(),
        keypoints: Some(Keypoints::new(joints)),
    }
}

fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
    BoundingBox::new(x0, y0, x1, y1).unwrap()
}

fn counted_layout(groups: usize, humans: usize, objects: usize) -> SceneLayout {
    let mut l = SceneLayout::empty(Canvas::new(100, 100));
    for i in 0..humans {
        l.instances.push(InstanceLayout {
            id: format!("h{i}"),
            kind: InstanceKind::Human,
            bbox: bx(0.0, 0.0, 5.0, 5.0),
            caption: "a person".into(),
            keypoints: None,
        });
    }
    for i in 0..objects {
        l.instances.push(InstanceLayout {
            id: format!("o{i}"),
            kind: InstanceKind::Object,
            bbox: bx(0.0, 0.0, 5.0, 5.0),
            caption: "a thing".into(),
            keypoints: None,
        });
    }
    for i in 0..groups {
        l.groups.push(GroupLayout {
            id: format!("g{i}"),
            bbox: bx(0.0, 0.0, 50.0, 50.0),
            caption: "a group".into(),
            member_ids: vec![],
        });
    }
    l
}

/// Counts by pairing items one at a time. Empty denominators score 1.
fn brute_force(expected: &[(char, usize)], generated: &[(char, usize)]) -> (f64, f64, f64) {
    let want: Vec<char> = expected.iter().flat_map(|&(c, n)| std::iter::repeat_n(c, n)).collect();
    let have: Vec<char> = generated.iter().flat_map(|&(c, n)| std::iter::repeat_n(c, n)).collect();
    let mut used = vec![false; want.len()];
    let mut matched = 0;
    for g in &have {
        if let Some(i) = (0..want.len()).find(|&i| !used[i] && want[i] == *g) {
            used[i] = true;
            matched += 1;
        }
    }
    let p = if have.is_empty() { 1.0 } else { matched as f64 / have.len() as f64 };
    let r = if want.is_empty() { 1.0 } else { matched as f64 / want.len() as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

type SpatialFixture = (u32, &'static [(f64, f64)], SpatialCondition, Option<f64>);
type BoxArr = [f64; 4];
/// Visible joints of each member.
type Members = &'static [&'static [(f64, f64)]];
type InclusionFixture = (&'static [(BoxArr, Members)], Option<f64>);

const L: SpatialCondition = SpatialCondition::Left;
const R: SpatialCondition = SpatialCondition::Right;

/// Canvas width, group x-extents, condition, expected fraction.
const SPATIAL: [SpatialFixture; 25] = [
    (100, &[], L, None),
    (100, &[], R, None),
    (100, &[(0.0, 20.0)], L, Some(1.0)),
    (100, &[(0.0, 20.0)], R, Some(0.0)),
    (100, &[(80.0, 100.0)], R, Some(1.0)),
    (100, &[(80.0, 100.0)], L, Some(0.0)),
    (100, &[(40.0, 60.0)], L, Some(0.0)),
    (100, &[(40.0, 60.0)], R, Some(0.0)),
    (100, &[(0.0, 99.0)], L, Some(1.0)),
    (100, &[(1.0, 100.0)], R, Some(1.0)),
    (100, &[(0.0, 10.0), (90.0, 100.0)], L, Some(0.5)),
    (100, &[(0.0, 10.0), (90.0, 100.0)], R, Some(0.5)),
    (100, &[(0.0, 10.0), (10.0, 20.0), (90.0, 100.0)], L, Some(2.0 / 3.0)),
    (100, &[(0.0, 10.0), (10.0, 20.0), (90.0, 100.0)], R, Some(1.0 / 3.0)),
    (100, &[(45.0, 55.0), (0.0, 10.0)], L, Some(0.5)),
    (100, &[(45.0, 55.0), (0.0, 10.0)], R, Some(0.0)),
    (101, &[(0.0, 101.0)], L, Some(0.0)),
    (101, &[(0.0, 100.0)], L, Some(1.0)),
    (101, &[(1.0, 101.0)], R, Some(1.0)),
    (64, &[(10.0, 20.0), (20.0, 30.0), (30.0, 40.0), (40.0, 50.0)], L, Some(0.5)),
    (64, &[(10.0, 20.0), (20.0, 30.0), (30.0, 40.0), (40.0, 50.0)], R, Some(0.5)),
    (64, &[(20.0, 44.0)], L, Some(0.0)),
    (64, &[(20.0, 43.0)], L, Some(1.0)),
    (64, &[(21.0, 44.0)], R, Some(1.0)),
    (2, &[(0.0, 1.0), (1.0, 2.0), (0.0, 2.0), (0.5, 1.0)], L, Some(0.5)),
];

/// Groups as (box, members' visible joints), expected fraction.
const INCLUSION: [InclusionFixture; 25] = [
    (&[], None),
    (&[([0.0, 0.0, 50.0, 50.0], &[])], None),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[(10.0, 10.0)]])], Some(1.0)),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[(60.0, 10.0)]])], Some(0.0)),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[(10.0, 10.0), (60.0, 10.0)]])], Some(0.0)),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[(0.0, 0.0)]])], Some(1.0)),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[(50.0, 50.0)]])], Some(1.0)),
    (&[([10.0, 10.0, 50.0, 50.0], &[&[(9.99, 20.0)]])], Some(0.0)),
    (&[([10.0, 10.0, 50.0, 50.0], &[&[(20.0, 50.01)]])], Some(0.0)),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[]])], Some(1.0)),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[(5.0, 5.0)], &[(55.0, 5.0)]])], Some(0.5)),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[(5.0, 5.0)], &[(15.0, 5.0)], &[(95.0, 95.0)]])], Some(2.0 / 3.0)),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[(5.0, 5.0)]]), ([50.0, 50.0, 100.0, 100.0], &[&[(75.0, 75.0)]])], Some(1.0)),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[(75.0, 75.0)]]), ([50.0, 50.0, 100.0, 100.0], &[&[(5.0, 5.0)]])], Some(0.0)),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[(5.0, 5.0)]]), ([50.0, 50.0, 100.0, 100.0], &[&[(5.0, 5.0)]])], Some(0.5)),
    (&[([0.0, 0.0, 50.0, 50.0], &[&[(50.0, 50.0)]]), ([50.0, 50.0, 100.0, 100.0], &[&[(50.0, 50.0)]])], Some(1.0)),
    (&[([20.0, 20.0, 80.0, 80.0], &[&[(20.0, 20.0), (80.0, 80.0), (50.0, 50.0), (20.0, 80.0)]])], Some(1.0)),
    (&[([20.0, 20.0, 80.0, 80.0], &[&[(20.0, 20.0), (80.0, 80.0), (50.0, 50.0), (19.0, 80.0)]])], Some(0.0)),
    (&[([0.0, 0.0, 100.0, 10.0], &[&[(50.0, 5.0)], &[(50.0, 11.0)], &[(99.0, 9.0)], &[(0.0, 10.0)]])], Some(0.75)),
    (&[([0.0, 0.0, 10.0, 100.0], &[&[(5.0, 99.0)], &[(11.0, 5.0)]])], Some(0.5)),
    (&[([30.0, 30.0, 40.0, 40.0], &[&[(35.0, 35.0)], &[(35.0, 35.0)], &[(35.0, 35.0)], &[(45.0, 35.0)], &[(35.0, 25.0)]])], Some(0.6)),
    (&[([0.0, 0.0, 50.0, 50.0], &[]), ([50.0, 0.0, 100.0, 50.0], &[&[(60.0, 10.0)]])], Some(1.0)),
    (&[([0.0, 0.0, 50.0, 50.0], &[]), ([50.0, 0.0, 100.0, 50.0], &[&[(40.0, 10.0)]])], Some(0.0)),
    (
        &[
            ([0.0, 0.0, 30.0, 30.0], &[&[(10.0, 10.0)]]),
            ([30.0, 0.0, 60.0, 30.0], &[&[(40.0, 10.0)]]),
            ([60.0, 0.0, 90.0, 30.0], &[&[(10.0, 10.0)]]),
            ([0.0, 30.0, 30.0, 60.0], &[&[(10.0, 40.0)]]),
        ],
        Some(0.75),
    ),
    (&[([0.0, 0.0, 99.0, 99.0], &[&[(99.0, 0.0), (0.0, 99.0), (99.0, 99.0), (0.0, 0.0), (49.5, 49.5)]])], Some(1.0)),
];

fn inclusion_layout(groups: &[(BoxArr, Members)]) -> SceneLayout {
    let mut l = SceneLayout::empty(Canvas::new(100, 100));
    for (gi, (b, members)) in groups.iter().enumerate() {
        let mut ids = Vec::new();
        for (mi, joints) in members.iter().enumerate() {
            let id = format!("g{gi}m{mi}");
            l.instances.push(human_with_joints(&id, bx(0.0, 0.0, 1.0, 1.0), joints));
            ids.push(id);
        }
        l.groups.push(GroupLayout {
            id: format!("g{gi}"),
            bbox: bx(b[0], b[1], b[2], b[3]),
            caption: "a group".into(),
            member_ids: ids,
        });
    }
    // ungrouped people never count
    l.instances.push(human_with_joints("loose", bx(0.0, 0.0, 1.0, 1.0), &[(99.0, 99.0)]));
    l
}

fn same(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        _ => false,
    }
}

fn layout_metrics() -> Check {
    let mut pairs = 0;
    for e in 0..=10 {
        for g in 0..=10 {
            for (cat, layout, expected) in [
                ('h', counted_layout(0, g, 0), ExpectedCounts { humans: Some(e), ..Default::default() }),
                ('o', counted_layout(0, 0, g), ExpectedCounts { objects: Some(e), ..Default::default() }),
                ('g', counted_layout(g, 0, 0), ExpectedCounts { groups: Some(e), ..Default::default() }),
            ] {
                let got = numerical_matching(&expected, &layout);
                let want = brute_force(&[(cat, e)], &[(cat, g)]);
                ensure!(
                    (got.precision, got.recall, got.f1) == want,
                    "{cat} expected {e}, generated {g}: {:?} vs {want:?}",
                    (got.precision, got.recall, got.f1)
                );
                pairs += 1;
            }
        }
    }
    // micro-average across categories
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a70);
    for _ in 0..200 {
        let e: [usize; 3] = std::array::from_fn(|_| rng.random_range(0..=10));
        let g: [usize; 3] = std::array::from_fn(|_| rng.random_range(0..=10));
        let got = numerical_matching(&ExpectedCounts::all(e[0], e[1], e[2]), &counted_layout(g[0], g[1], g[2]));
        let want = brute_force(&[('g', e[0]), ('h', e[1]), ('o', e[2])], &[('g', g[0]), ('h', g[1]), ('o', g[2])]);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        ensure!(
            close(got.precision, want.0) && close(got.recall, want.1) && close(got.f1, want.2),
            "counts {e:?} vs {g:?}"
        );
    }

    for (n, (width, extents, cond, want)) in SPATIAL.iter().enumerate() {
        let mut l = SceneLayout::empty(Canvas::new(*width, 10));
        for (i, &(x0, x1)) in extents.iter().enumerate() {
            l.groups.push(GroupLayout {
                id: format!("g{i}"),
                bbox: bx(x0, 0.0, x1, 10.0),
                caption: "a group".into(),
                member_ids: vec![],
            });
        }
        let got = spatial_matching(&l, *cond);
        ensure!(same(got, *want), "spatial fixture {n}: {got:?}, expected {want:?}");
    }
    for (n, (groups, want)) in INCLUSION.iter().enumerate() {
        let got = inclusion_check(&inclusion_layout(groups));
        ensure!(same(got, *want), "inclusion fixture {n}: {got:?}, expected {want:?}");
    }
    Ok(format!(
        "{pairs} count pairs, {} spatial and {} inclusion fixtures",
        SPATIAL.len(),
        INCLUSION.len()
    ))
}
