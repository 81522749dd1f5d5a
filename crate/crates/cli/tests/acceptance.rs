//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the PASS/FAIL lines are
//! always printed. Criteria run one after another on the calling thread; the
//! injection-heavy ones pin rayon to a single worker.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

use tofnoise::calib::{
    axial_setup, axial_statistics, extract_edge, fit_axial_model, percentile, Aggregation, AxialSample, EdgeSearch,
    ExponentGrid,
};
use tofnoise::frame::{decode_dpf, default_intrinsics, read_stack, sidecar_path, write_stack, Analysis};
use tofnoise::inject::{inject, inject_stack, AngleSource, InjectionConfig};
use tofnoise::model::preset_coefficients;
use tofnoise::rng::{CounterRng, Stream};
use tofnoise::scene::{default_distances, DEFAULT_ANGLES};
use tofnoise::validate::validate_stack;
use tofnoise::{
    Error, FrameStack, LateralMode, ModeId, NoiseModelCoefficients, PlanarScene, StackMeta,
};

const PAPER_MODES: [ModeId; 3] = [ModeId::Mode5At30Fps, ModeId::Mode5At60Fps, ModeId::Mode9At30Fps];
const FRAMES: usize = 300;

type Check = Result<String, String>;

fn check(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn coeffs(mode: ModeId) -> NoiseModelCoefficients {
    preset_coefficients(mode).expect("paper mode")
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

// ln via 2·atanh((x−1)/(x+1)) and exp via its Taylor series: an evaluation
// of z^n that shares nothing with `f64::powf`.
fn ln_series(x: f64) -> f64 {
    let y = (x - 1.0) / (x + 1.0);
    let (mut term, mut sum) = (y, 0.0);
    for k in 0..200 {
        sum += term / f64::from(2 * k + 1);
        term *= y * y;
    }
    2.0 * sum
}

fn exp_series(x: f64) -> f64 {
    let (mut term, mut sum) = (1.0, 0.0);
    for k in 1..200 {
        sum += term;
        term *= x / f64::from(k);
    }
    sum
}

fn oracle_sigma(c: &NoiseModelCoefficients, z: f64, angular: f64) -> f64 {
    c.a + c.b * z + c.c * z * z + c.d * exp_series(c.n * ln_series(z)) * angular
}

fn criterion_1() -> Check {
    // θ²/(π/2 − θ)² is 1/25 at 15° and 1/4 at 30°.
    let cases = [
        (ModeId::Mode5At30Fps, 1.0, 15.0, 1.0 / 25.0, 0.0020814),
        (ModeId::Mode9At30Fps, 2.0, 30.0, 0.25, 0.005923),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (mode, z, deg, angular, printed) in cases {
        let c = coeffs(mode);
        let got = c.axial_sigma(z, f64::to_radians(deg)).map_err(|e| e.to_string())?;
        let want = oracle_sigma(&c, z, angular);
        let rel = (got / want - 1.0).abs();
        // The printed reference values carry 5 and 4 significant digits.
        let half_ulp = if printed == 0.0020814 { 5e-8 } else { 5e-7 };
        ok &= rel <= 1e-6 && (got - printed).abs() <= half_ulp;
        parts.push(format!("{mode} z={z} θ={deg}° σ={got:.9} oracle rel err {rel:.1e}"));
    }
    check(ok, parts.join("; "))
}

fn exact_samples(c: &NoiseModelCoefficients) -> Vec<AxialSample> {
    let mut out = Vec::new();
    for z in default_distances() {
        for deg in DEFAULT_ANGLES {
            let t = f64::to_radians(deg);
            out.push(AxialSample::summary(z, t, c.raw_axial_sigma(z, t), 1));
        }
    }
    out
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut ns = Vec::new();
    for mode in PAPER_MODES {
        let c = coeffs(mode);
        let fit = fit_axial_model(&exact_samples(&c), &ExponentGrid::default(), Aggregation::Condition)
            .map_err(|e| e.to_string())?;
        let err = [fit.a - c.a, fit.b - c.b, fit.c - c.c, fit.d - c.d]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(err);
        ok &= fit.n == 2.7 && err < 1e-9;
        ns.push(format!("{mode} n={}", fit.n));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        ok && secs < 1.0,
        format!("{}; max |Δcoef| {worst:.1e}; {secs:.3} s", ns.join(", ")),
    )
}

struct GridRun {
    samples: Vec<(f64, f64, AxialSample)>,
    kl: Vec<(f64, f64, Option<f64>)>,
    seconds: f64,
}

/// Renders, injects and analyzes every default-grid condition for
/// Mode_5_30fps, one stack in memory at a time.
fn grid_run() -> Result<GridRun, Error> {
    let k = default_intrinsics();
    let c = coeffs(ModeId::Mode5At30Fps);
    let start = Instant::now();
    let mut run = GridRun {
        samples: Vec::new(),
        kl: Vec::new(),
        seconds: 0.0,
    };
    for (i, dist) in default_distances().into_iter().enumerate() {
        for (j, deg) in DEFAULT_ANGLES.into_iter().enumerate() {
            let scene = PlanarScene::new(dist, deg)?;
            let meta = StackMeta::for_scene(c.mode_id, &scene, k)?;
            let config = InjectionConfig::new(c, 1000 + (i * 10 + j) as u64)
                .lateral(LateralMode::Off)
                .angles(AngleSource::Analytic(scene));
            let stack = single_thread(|| inject_stack(&scene.render(&k)?, FRAMES, meta, &config))?;
            let (roi, plane) = axial_setup(&stack)?;
            run.samples.push((dist, deg, axial_statistics(&stack, &roi, &plane)?));
            run.kl.push((dist, deg, validate_stack(&stack, &c)?.kl));
        }
    }
    run.seconds = start.elapsed().as_secs_f64();
    Ok(run)
}

fn criterion_3(run: &GridRun) -> Check {
    let c = coeffs(ModeId::Mode5At30Fps);
    let samples: Vec<AxialSample> = run
        .samples
        .iter()
        .filter(|(_, deg, _)| *deg >= 15.0)
        .map(|(_, _, s)| s.clone())
        .collect();
    let fit = fit_axial_model(&samples, &ExponentGrid::default(), Aggregation::Condition).map_err(|e| e.to_string())?;
    let fitted = fit.coefficients(c.mode_id, c.sigma_x).map_err(|e| e.to_string())?;
    let mut worst = (0.0f64, 0.0, 0.0);
    for (dist, deg, _) in run.samples.iter().filter(|(_, deg, _)| *deg >= 15.0) {
        let t = deg.to_radians();
        let rel = (fitted.axial_sigma(*dist, t).unwrap() / c.axial_sigma(*dist, t).unwrap() - 1.0).abs();
        if rel > worst.0 {
            worst = (rel, *dist, *deg);
        }
    }
    // The grid pass also covers 0°, so it bounds the 40-condition time.
    check(
        worst.0 <= 0.10 && (fit.n - 2.7).abs() <= 0.2 + 1e-9 && run.seconds < 300.0,
        format!(
            "{} conditions, n={} (a={:.6} b={:.6} c={:.6} d={:.6}), worst σ_z rel err {:.2}% at {} m {}°, {:.0} s",
            samples.len(),
            fit.n,
            fit.a,
            fit.b,
            fit.c,
            fit.d,
            100.0 * worst.0,
            worst.1,
            worst.2,
            run.seconds
        ),
    )
}

fn criterion_4(run: &GridRun) -> Check {
    let mut worst = (0.0f64, 0.0, 0.0);
    let mut missing = 0;
    let mut sum = 0.0;
    for &(dist, deg, kl) in &run.kl {
        match kl {
            Some(v) => {
                sum += v;
                if v > worst.0 {
                    worst = (v, dist, deg);
                }
            }
            None => missing += 1,
        }
    }
    let mean = sum / (run.kl.len() - missing) as f64;
    check(
        missing == 0 && worst.0 <= 0.02,
        format!(
            "{} conditions, mean {mean:.4} nats, max {:.4} nats at {} m {}°",
            run.kl.len(),
            worst.0,
            worst.1,
            worst.2
        ),
    )
}

/// p-th percentile by selection and exact integer interpolation.
fn percentile_oracle(values: &[i64], p: i64) -> f64 {
    let mut rest = values.to_vec();
    let mut ordered = Vec::new();
    while !rest.is_empty() {
        let (i, _) = rest.iter().enumerate().min_by_key(|(_, v)| **v).unwrap();
        ordered.push(rest.remove(i));
    }
    let t = (ordered.len() as i64 - 1) * p;
    let lo = (t / 100) as usize;
    let r = t % 100;
    let hi = (lo + 1).min(ordered.len() - 1);
    (100 * ordered[lo] + r * (ordered[hi] - ordered[lo])) as f64 / 100.0
}

fn criterion_5() -> Check {
    let k = default_intrinsics();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, mode) in PAPER_MODES.into_iter().enumerate() {
        let c = coeffs(mode);
        let scene = PlanarScene::new(1.0, 0.0)
            .and_then(|s| s.with_extent(0.25))
            .map_err(|e| e.to_string())?;
        let meta = StackMeta::for_scene(mode, &scene, k)
            .map_err(|e| e.to_string())?
            .with_analysis(Analysis::Lateral);
        let config = InjectionConfig::new(c, 500 + i as u64).angles(AngleSource::Analytic(scene));
        let sample = single_thread(|| -> Result<_, Error> {
            let stack = inject_stack(&scene.render(&k)?, FRAMES, meta, &config)?;
            extract_edge(&stack, &EdgeSearch::for_stack(&stack)?)
        })
        .map_err(|e| e.to_string())?;
        let rel = sample.sigma_px / c.sigma_x - 1.0;
        ok &= rel.abs() <= 0.15;
        parts.push(format!("{mode} σ_x {} → {:.3} px ({:+.1}%)", c.sigma_x, sample.sigma_px, 100.0 * rel));
    }
    let mut vectors = 0;
    for len in 1..=60u64 {
        for rep in 0..4u64 {
            let mut rng = CounterRng::new(77, Stream::User(5), len, rep);
            let ints: Vec<i64> = (0..len).map(|_| (rng.standard_normal() * 1000.0).round() as i64).collect();
            let floats: Vec<f64> = ints.iter().map(|&v| v as f64).collect();
            for p in [0, 10, 25, 50, 75, 90, 99, 100] {
                let got = percentile(&floats, p as f64).map_err(|e| e.to_string())?;
                ok &= got == percentile_oracle(&ints, p);
            }
            vectors += 1;
        }
    }
    let ten: Vec<f64> = (1..=10).map(f64::from).collect();
    ok &= percentile(&ten, 90.0).ok() == Some(9.1);
    parts.push(format!("percentile exact on {vectors} integer vectors × 8 ranks"));
    check(ok, parts.join("; "))
}

fn criterion_6() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    let n = 1_000_000u64;
    for (mode, z, deg) in [(ModeId::Mode5At30Fps, 1.0, 15.0), (ModeId::Mode9At30Fps, 2.0, 30.0)] {
        let c = coeffs(mode);
        let t = f64::to_radians(deg);
        let sigma = c.axial_sigma(z, t).unwrap();
        let (mut sum, mut sq) = (0.0, 0.0);
        for i in 0..n {
            let x = c.sample_axial(z, t, &mut CounterRng::new(6, Stream::Axial, 0, i)).unwrap();
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let std = ((sq - n as f64 * mean * mean) / (n as f64 - 1.0)).sqrt();
        let rel = std / sigma - 1.0;
        let bound = 4.0 * sigma / (n as f64).sqrt();
        ok &= rel.abs() < 0.01 && mean.abs() < bound;
        parts.push(format!("{mode}: std {:+.3}%, |mean| {:.2}σ/√N", 100.0 * rel, mean.abs() / (sigma / (n as f64).sqrt())));
    }
    let k = default_intrinsics();
    let scene = PlanarScene::new(1.1, 40.0).unwrap().with_extent(0.5).unwrap();
    let clean = scene.render(&k).unwrap();
    let config = InjectionConfig::new(coeffs(ModeId::Mode5At60Fps), 2024);
    let bits = |threads: usize| {
        let frame = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| inject(&clean, &k, &config).unwrap());
        frame.depths().iter().map(|d| d.to_bits()).collect::<Vec<_>>()
    };
    let reference = bits(1);
    let same = [2, 4, 8].into_iter().all(|t| bits(t) == reference);
    ok &= same && reference == bits(1);
    parts.push(format!("injection bit-identical across 1/2/4/8 threads: {same}"));
    check(ok, parts.join("; "))
}

fn criterion_7() -> Check {
    let out = Command::new(env!("CARGO_BIN_EXE_tofnoise"))
        .args(["bench", "--frames", "1000", "--mode", "Mode_5_60fps", "--threads", "1"])
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout).trim().to_string();
    if !out.status.success() {
        return Err(format!("bench exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)));
    }
    let field = |key: &str| -> Option<f64> {
        text.split_whitespace()
            .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
    };
    let (Some(frames), Some(p50), Some(p99)) = (field("frames"), field("p50_ms"), field("p99_ms")) else {
        return Err(format!("unparsable bench output: {text}"));
    };
    check(frames >= 1000.0 && p99 <= 16.6, format!("frames={frames} p50={p50:.2} ms p99={p99:.2} ms (budget 16.6 ms)"))
}

fn criterion_8() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let k = default_intrinsics();
    let scene = PlanarScene::new(0.9, 20.0).unwrap().with_extent(0.3).unwrap();
    let meta = StackMeta::for_scene(ModeId::Mode5At30Fps, &scene, k).unwrap();
    let config = InjectionConfig::new(coeffs(ModeId::Mode5At30Fps), 8);
    let stack = inject_stack(&scene.render(&k).unwrap(), 4, meta, &config).unwrap();
    let (a, b) = (dir.path().join("a.dpf"), dir.path().join("b.dpf"));
    write_stack(&stack, &a).map_err(|e| e.to_string())?;
    let back = read_stack(&a).map_err(|e| e.to_string())?;
    write_stack(&back, &b).map_err(|e| e.to_string())?;
    let bytes_a = std::fs::read(&a).unwrap();
    let identical = bytes_a == std::fs::read(&b).unwrap()
        && std::fs::read(sidecar_path(&a)).unwrap() == std::fs::read(sidecar_path(&b)).unwrap();
    let nan_mask = |s: &FrameStack| -> Vec<bool> { s.frames().iter().flat_map(|f| f.depths().iter().map(|d| d.is_nan())).collect() };
    let nan_count = nan_mask(&stack).iter().filter(|&&m| m).count();
    let same_nans = nan_mask(&stack) == nan_mask(&back) && nan_count > 0;
    let f32_values = stack.frames().iter().zip(back.frames()).all(|(x, y)| x.to_f32_precision() == *y);
    let stable = read_stack(&b).map_err(|e| e.to_string())? == back;

    let mut corrupt: Vec<(&str, Vec<u8>)> = Vec::new();
    let mut bad_magic = bytes_a.clone();
    bad_magic[0] = b'X';
    corrupt.push(("magic", bad_magic));
    corrupt.push(("short header", bytes_a[..10].to_vec()));
    corrupt.push(("truncated payload", bytes_a[..bytes_a.len() - 3].to_vec()));
    let mut extra = bytes_a.clone();
    extra.extend_from_slice(&[0, 0, 0, 0]);
    corrupt.push(("trailing bytes", extra));
    for (name, offset, value) in [("count", 12, 5u32), ("width", 4, 0), ("height", 8, 171)] {
        let mut b = bytes_a.clone();
        b[offset..offset + 4].copy_from_slice(&value.to_le_bytes());
        corrupt.push((name, b));
    }
    let mut negative = bytes_a.clone();
    negative[16..20].copy_from_slice(&(-1.0f32).to_le_bytes());
    corrupt.push(("negative depth", negative));
    let rejected: Vec<bool> = corrupt
        .iter()
        .map(|(_, bytes)| matches!(decode_dpf(bytes), Err(Error::Format(_))))
        .collect();
    let all_rejected = rejected.iter().all(|&r| r);

    let sidecar = sidecar_path(&a);
    let text = std::fs::read_to_string(&sidecar).unwrap();
    std::fs::write(&sidecar, text.replacen('{', "{\"surprise\": 1,", 1)).unwrap();
    let sidecar_rejected = matches!(read_stack(&a), Err(Error::Sidecar { .. }));

    check(
        identical && same_nans && f32_values && stable && all_rejected && sidecar_rejected,
        format!(
            "rewrite byte-identical: {identical}, NaN mask kept ({nan_count} NaN): {same_nans}, \
             values = f32 rounding: {f32_values}, corrupt inputs rejected {}/{}, unknown sidecar field rejected: {sidecar_rejected}",
            rejected.iter().filter(|&&r| r).count(),
            rejected.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: u32, title: &str, result: std::thread::Result<Check>| {
        let (status, detail) = match result {
            Ok(Ok(d)) => ("PASS", d),
            Ok(Err(d)) => ("FAIL", d),
            Err(_) => ("FAIL", "panicked".to_string()),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!("acceptance {id} {status} {title}: {detail}");
    };
    report(1, "closed-form axial sigma", catch_unwind(criterion_1));
    report(2, "exact inverse problem", catch_unwind(criterion_2));
    let run = catch_unwind(|| single_thread(grid_run));
    let grid = match run {
        Ok(Ok(r)) => Some(r),
        Ok(Err(e)) => {
            println!("grid pass failed: {e}");
            None
        }
        Err(_) => None,
    };
    match &grid {
        Some(r) => {
            report(3, "round trip at full scale", catch_unwind(AssertUnwindSafe(|| criterion_3(r))));
            report(4, "axial KL self-consistency", catch_unwind(AssertUnwindSafe(|| criterion_4(r))));
        }
        None => {
            report(3, "round trip at full scale", Ok(Err("grid pass failed".into())));
            report(4, "axial KL self-consistency", Ok(Err("grid pass failed".into())));
        }
    }
    report(5, "lateral round trip and percentile", catch_unwind(criterion_5));
    report(6, "sampling statistics and reproducibility", catch_unwind(criterion_6));
    report(7, "single-frame injection latency", catch_unwind(criterion_7));
    report(8, "DPF1 format round trip", catch_unwind(criterion_8));
    println!("acceptance: {} of 8 criteria passed", 8 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
