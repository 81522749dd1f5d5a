use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tofnoise::calib::{analyze_stack, percentile, Aggregation, ExponentGrid, FitReportBuilder};
use tofnoise::dataset::list_stacks;
use tofnoise::frame::{default_intrinsics, read_stack, write_atomic, write_stack, Analysis};
use tofnoise::inject::{inject_each, inject_stack, AngleSource, AxialMode, InjectionConfig, Injector};
use tofnoise::model::preset_coefficients;
use tofnoise::validate::{emit_report, validate_stack, KlReport, ReportFormat};
use tofnoise::{
    Background, Error, FrameStack, LateralMode, ModeId, ModePreset, NoiseModelCoefficients, PlanarScene, StackMeta,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "tofnoise", version, about = "Time-of-flight depth noise: render, inject, fit, validate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render clean frames of a planar target.
    Render(RenderArgs),
    /// Add model noise to a stack.
    Inject(InjectArgs),
    /// Fit the noise model to a dataset directory.
    Fit(FitArgs),
    /// Score coefficients against a dataset with pixel-wise KL divergence.
    Validate(ValidateArgs),
    /// Time single-frame injection.
    Bench(BenchArgs),
    /// Print the built-in coefficient sets.
    Presets(PresetsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalysisArg {
    Axial,
    Lateral,
}

#[derive(Clone, Copy, ValueEnum)]
enum LateralArg {
    Iso,
    X,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnglesArg {
    Analytic,
    Estimated,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Condition,
    Pixel,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

#[derive(Args)]
struct RenderArgs {
    /// Distance along the optical axis to the target, meters.
    #[arg(long)]
    distance: f64,
    /// Incidence angle, degrees.
    #[arg(long)]
    angle: f64,
    #[arg(long, value_parser = parse_mode)]
    mode: ModeId,
    #[arg(long, default_value_t = 1)]
    frames: usize,
    #[arg(long)]
    out: PathBuf,
    /// Half-size of a square target, meters. Unbounded if absent.
    #[arg(long)]
    extent: Option<f64>,
    /// `nan` for no return, or a depth in meters.
    #[arg(long, default_value = "nan", value_parser = parse_background)]
    background: Background,
    #[arg(long, value_enum, default_value = "axial")]
    analysis: AnalysisArg,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("model").required(true).args(["mode", "coeffs"]))]
struct InjectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "iso")]
    lateral: LateralArg,
    /// Use the built-in coefficients of this mode.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ModeId>,
    /// Coefficient JSON file.
    #[arg(long)]
    coeffs: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "on")]
    axial: OnOff,
    /// Incidence angles from the sidecar's scene or from the frame's normals.
    /// Defaults to analytic when the sidecar describes a scene.
    #[arg(long, value_enum)]
    angles: Option<AnglesArg>,
    /// Angle for pixels without a normal estimate, degrees.
    #[arg(long, default_value_t = 0.0)]
    theta_fallback: f64,
    /// Emit this many noisy frames from the first input frame instead of one
    /// noisy frame per input frame.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Directory for one `<mode>.json` coefficient file per fitted mode.
    #[arg(long)]
    coeffs_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "condition")]
    aggregation: AggregationArg,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    n_min: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    n_max: f64,
    #[arg(long, default_value_t = 0.1)]
    n_step: f64,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("model").required(true).multiple(true).args(["mode", "coeffs"]))]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Coefficient JSON file; repeat for several modes.
    #[arg(long)]
    coeffs: Vec<PathBuf>,
    /// Built-in coefficients; repeat for several modes.
    #[arg(long, value_parser = parse_mode)]
    mode: Vec<ModeId>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1000)]
    frames: usize,
    #[arg(long, value_parser = parse_mode)]
    mode: ModeId,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 1.0)]
    distance: f64,
    #[arg(long, default_value_t = 30.0)]
    angle: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PresetsArgs {
    /// Print a JSON array instead of one line per mode.
    #[arg(long)]
    json: bool,
}

fn parse_mode(s: &str) -> Result<ModeId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_background(s: &str) -> Result<Background, String> {
    if s.eq_ignore_ascii_case("nan") {
        return Ok(Background::Invalid);
    }
    s.parse::<f64>()
        .map(Background::Depth)
        .map_err(|_| format!("expected `nan` or a depth in meters, got {s:?}"))
}

fn preset(mode: ModeId) -> tofnoise::Result<NoiseModelCoefficients> {
    preset_coefficients(mode).ok_or_else(|| Error::Invalid(format!("no built-in coefficients for {mode}")))
}

fn read_coeffs(path: &Path) -> tofnoise::Result<NoiseModelCoefficients> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    NoiseModelCoefficients::from_json(&text).map_err(|e| e.context(path.display().to_string()))
}

fn load(path: &Path) -> tofnoise::Result<FrameStack> {
    read_stack(path).map_err(|e| e.context(path.display().to_string()))
}

fn render(args: RenderArgs) -> tofnoise::Result<()> {
    if args.frames == 0 {
        return Err(Error::Invalid("--frames must be at least 1".into()));
    }
    let k = default_intrinsics();
    let mut scene = PlanarScene::new(args.distance, args.angle)?.with_background(args.background)?;
    if let Some(e) = args.extent {
        scene = scene.with_extent(e)?;
    }
    let analysis = match args.analysis {
        AnalysisArg::Axial => Analysis::Axial,
        AnalysisArg::Lateral => Analysis::Lateral,
    };
    let meta = StackMeta::for_scene(args.mode, &scene, k)?.with_analysis(analysis);
    let frame = scene.render(&k)?;
    let stack = FrameStack::new(vec![frame; args.frames], meta)?;
    write_stack(&stack, &args.out)
}

fn inject(args: InjectArgs) -> tofnoise::Result<()> {
    let coeffs = match (&args.mode, &args.coeffs) {
        (Some(m), _) => preset(*m)?,
        (None, Some(p)) => read_coeffs(p)?,
        (None, None) => unreachable!("clap enforces the model group"),
    };
    let stack = load(&args.input)?;
    let meta = *stack.meta();
    if meta.mode_id != coeffs.mode_id {
        return Err(Error::Invalid(format!(
            "input stack is {} but the coefficients are for {}",
            meta.mode_id, coeffs.mode_id
        )));
    }
    let angle_source = match (args.angles, meta.scene()) {
        (Some(AnglesArg::Estimated), _) | (None, None) => AngleSource::EstimatedNormals,
        (Some(AnglesArg::Analytic) | None, Some(scene)) => AngleSource::Analytic(scene),
        (Some(AnglesArg::Analytic), None) => {
            return Err(Error::Invalid("--angles analytic needs a sidecar that describes the scene".into()))
        }
    };
    let config = InjectionConfig::new(coeffs, args.seed)
        .lateral(match args.lateral {
            LateralArg::Iso => LateralMode::Isotropic,
            LateralArg::X => LateralMode::XOnly,
            LateralArg::Off => LateralMode::Off,
        })
        .axial(match args.axial {
            OnOff::On => AxialMode::On,
            OnOff::Off => AxialMode::Off,
        })
        .angles(angle_source)
        .theta_fallback(args.theta_fallback.to_radians());
    let noisy = match args.frames {
        Some(n) => inject_stack(&stack.frames()[0], n, meta, &config)?,
        None => inject_each(&stack, &config)?,
    };
    write_stack(&noisy, &args.out)
}

fn fit(args: FitArgs) -> tofnoise::Result<()> {
    let grid = ExponentGrid {
        min: args.n_min,
        max: args.n_max,
        step: args.n_step,
    };
    grid.values()?;
    let aggregation = match args.aggregation {
        AggregationArg::Condition => Aggregation::Condition,
        AggregationArg::Pixel => Aggregation::Pixel,
    };
    let mut builder = FitReportBuilder::new(grid, aggregation);
    for path in list_stacks(&args.dataset)? {
        let stack = load(&path)?;
        let analysis = analyze_stack(&stack).map_err(|e| e.context(path.display().to_string()))?;
        builder.add(analysis);
    }
    let report = builder.finish()?;
    let fitted: Vec<&NoiseModelCoefficients> = report.modes.iter().filter_map(|m| m.coefficients.as_ref()).collect();
    if args.coeffs_out.is_some() && fitted.is_empty() {
        return Err(Error::InsufficientData(
            "no mode has both an axial and a lateral fit; no coefficients to write".into(),
        ));
    }
    write_atomic(&args.out, report.to_json()?.as_bytes())?;
    if let Some(dir) = &args.coeffs_out {
        std::fs::create_dir_all(dir)?;
        for c in fitted {
            write_atomic(&dir.join(format!("{}.json", c.mode_id)), c.to_json()?.as_bytes())?;
        }
    }
    for m in &report.modes {
        let n = m.axial_fit.as_ref().map_or("-".to_string(), |f| f.n.to_string());
        let sx = m.sigma_x.map_or("-".to_string(), |s| format!("{s:.4}"));
        println!(
            "{} axial_conditions={} lateral_conditions={} n={n} sigma_x={sx}",
            m.mode_id,
            m.axial_conditions.len(),
            m.lateral_conditions.len()
        );
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> tofnoise::Result<()> {
    let mut models: BTreeMap<ModeId, NoiseModelCoefficients> = BTreeMap::new();
    let sets = args
        .mode
        .iter()
        .map(|&m| preset(m))
        .chain(args.coeffs.iter().map(|p| read_coeffs(p)));
    for c in sets {
        let c = c?;
        if models.insert(c.mode_id, c).is_some() {
            return Err(Error::Invalid(format!("two coefficient sets for {}", c.mode_id)));
        }
    }
    let mut entries = Vec::new();
    for path in list_stacks(&args.dataset)? {
        let stack = load(&path)?;
        let label = path.display().to_string();
        let coeffs = models
            .get(&stack.meta().mode_id)
            .ok_or_else(|| Error::Invalid(format!("no coefficients for {}", stack.meta().mode_id)).context(&label))?;
        entries.push(validate_stack(&stack, coeffs).map_err(|e| e.context(&label))?);
    }
    let report = KlReport::new(entries)?;
    let format = match args.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Text => ReportFormat::Text,
    };
    write_atomic(&args.out, emit_report(&report, format)?.as_bytes())?;
    let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
    println!(
        "conditions={} axial_kl={} lateral_kl={}",
        report.entries.len(),
        show(report.overall.axial.kl),
        show(report.overall.lateral.kl)
    );
    Ok(())
}

fn bench(args: BenchArgs) -> tofnoise::Result<()> {
    if args.frames == 0 || args.threads == 0 {
        return Err(Error::Invalid("--frames and --threads must be at least 1".into()));
    }
    let k = default_intrinsics();
    let coeffs = preset(args.mode)?;
    let clean = PlanarScene::new(args.distance, args.angle)?.render(&k)?;
    let config = InjectionConfig::new(coeffs, args.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let times = pool.install(|| -> tofnoise::Result<Vec<f64>> {
        for i in 0..10 {
            Injector::new(&clean, &k, config)?.frame(i)?;
        }
        (0..args.frames as u64)
            .map(|i| {
                let start = Instant::now();
                // Angles are re-estimated per frame, as for a moving scene.
                let frame = Injector::new(&clean, &k, config)?.frame(i)?;
                let ms = start.elapsed().as_secs_f64() * 1e3;
                std::hint::black_box(frame);
                Ok(ms)
            })
            .collect()
    })?;
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let max = times.iter().copied().fold(0.0, f64::max);
    println!(
        "frames={} threads={} p50_ms={:.4} p99_ms={:.4} mean_ms={:.4} max_ms={:.4}",
        times.len(),
        args.threads,
        percentile(&times, 50.0)?,
        percentile(&times, 99.0)?,
        mean,
        max
    );
    Ok(())
}

fn presets(args: PresetsArgs) -> tofnoise::Result<()> {
    let all = ModePreset::all();
    if args.json {
        let coeffs: Vec<_> = all.iter().map(|p| p.coefficients).collect();
        println!("{}", serde_json::to_string_pretty(&coeffs)?);
        return Ok(());
    }
    for p in all {
        let c = p.coefficients;
        println!(
            "{} a={} b={} c={} d={} n={} sigma_x={} range_m={}-{} fps={}",
            p.mode_id, c.a, c.b, c.c, c.d, c.n, c.sigma_x, p.range_min, p.range_max, p.frame_rate
        );
    }
    Ok(())
}

fn run(cli: Cli) -> tofnoise::Result<()> {
    match cli.command {
        Command::Render(a) => render(a),
        Command::Inject(a) => inject(a),
        Command::Fit(a) => fit(a),
        Command::Validate(a) => validate(a),
        Command::Bench(a) => bench(a),
        Command::Presets(a) => presets(a),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let head = text.split("\n\n").next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {}", one_line(head));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    std::panic::set_hook(Box::new(|info| {
        eprintln!("error: internal: {}", one_line(&info.to_string()));
    }));
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {}: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::from(EXIT_DATA)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
