//! `neoprint` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 external matcher
//! failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::warn;

use neoprint::aging::age_template;
use neoprint::enroll::{template_from_extraction, CaptureInfo};
use neoprint::eval::{
    build_report, calibrate_pairs, load_samples, read_manifest, score_protocol, tar_at_far, PairLabel, ScoreTable,
};
use neoprint::extract::extract;
use neoprint::imageio::read_pgm;
use neoprint::iptf::{read_template, write_template};
use neoprint::matching::{fuse_scores, gate_genders, normalize_scores, ExternalConnector, Sample, SubjectRecord};
use neoprint::minmap::{dump_channels, encode_minutiae_map};
use neoprint::synth::{build_benchmark, DegradationProfile};
use neoprint::{Config, FusionWeights, Gender, Thumb};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_EXTERNAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "neoprint", version, about = "Infant fingerprint enrollment, matching and evaluation")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Resolution assumed for PGM inputs.
    #[arg(long, global = true)]
    ppi: Option<u32>,
    #[command(flatten)]
    matching: MatchOverrides,
    /// Log debug output.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct MatchOverrides {
    /// Fusion weights as `minutiae,texture,external`.
    #[arg(long, global = true, value_parser = parse_weights)]
    weights: Option<FusionWeights>,
    /// External matcher command with `{probe}` and `{enrolled}` placeholders.
    #[arg(long, global = true)]
    external_cmd: Option<String>,
    /// Growth factor applied to young enrollees.
    #[arg(long, global = true)]
    lambda: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract templates from PGM images.
    Enroll(EnrollArgs),
    /// Fused score of probe templates against enrolled templates.
    Match(MatchArgs),
    /// Rank gallery subjects for a probe.
    Search(SearchArgs),
    /// Longitudinal evaluation report over a manifest.
    Eval(EvalArgs),
    /// Generate a synthetic longitudinal benchmark.
    Synth(SynthArgs),
    /// Grid-search fusion weights on a manifest.
    Calibrate(CalibrateArgs),
    /// Print the effective configuration.
    Config,
}

#[derive(Debug, Args)]
struct EnrollArgs {
    #[arg(required = true)]
    images: Vec<PathBuf>,
    #[arg(long)]
    subject: String,
    #[arg(long)]
    session: String,
    #[arg(long)]
    thumb: Thumb,
    #[arg(long, default_value = "unknown")]
    gender: Gender,
    #[arg(long)]
    age_weeks: u32,
    /// Output directory for `<stem>.iptf`.
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
    /// Store unaged minutiae regardless of age.
    #[arg(long)]
    no_aging: bool,
    /// Also write `<stem>.txt` with one `x y theta_degrees type` line per minutia.
    #[arg(long)]
    minutiae_txt: bool,
    /// Dump the minutiae map channels of each image into this directory.
    #[arg(long)]
    dump_minmap: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long, required = true, num_args = 1..)]
    probe: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    enrolled: Vec<PathBuf>,
    /// Probe images for the external matcher, in `--probe` order.
    #[arg(long, num_args = 1..)]
    probe_image: Vec<PathBuf>,
    /// Enrolled images for the external matcher, in `--enrolled` order.
    #[arg(long, num_args = 1..)]
    enrolled_image: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long, required = true, num_args = 1..)]
    probe: Vec<PathBuf>,
    /// Manifest of gallery images or templates.
    #[arg(long)]
    gallery: PathBuf,
    /// Print only the best `top` candidates.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for report.csv, report.txt and scores.csv.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// FAR targets as fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    far: Vec<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    impressions: Option<usize>,
    /// clean, mild or hard.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    canvas: Option<usize>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    far: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Write the effective configuration with the calibrated weights here.
    #[arg(long)]
    write_config: Option<PathBuf>,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_weights(s: &str) -> std::result::Result<FusionWeights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [m, t, e] => FusionWeights::new(m, t, e).map_err(|e| e.to_string()),
        _ => Err("expected three comma-separated weights".into()),
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path).map_err(|e| usage(format!("loading {}: {e}", path.display())))?,
        None => Config::default(),
    };
    if let Some(ppi) = cli.ppi {
        config.image.ppi = ppi;
    }
    let o = &cli.matching;
    if let Some(w) = o.weights {
        config.weights = w;
    }
    if let Some(cmd) = &o.external_cmd {
        let timeout = config.external.as_ref().map(|c| c.timeout_secs);
        let mut c = ExternalConnector::new(cmd.clone());
        if let Some(t) = timeout {
            c.timeout_secs = t;
        }
        config.external = Some(c);
    }
    if let Some(l) = o.lambda {
        config.aging.lambda = l;
    }
    config.validate().map_err(|e| usage(format!("configuration: {e}")))?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose {
        "debug"
    } else {
        "warn"
    }))
    .init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if e.downcast_ref::<UsageError>().is_some() { EXIT_USAGE } else { EXIT_DATA };
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let config = load_config(cli)?;
    match &cli.command {
        Command::Enroll(a) => enroll(&config, a),
        Command::Match(a) => match_cmd(&config, a),
        Command::Search(a) => search(&config, a),
        Command::Eval(a) => eval(config, a),
        Command::Synth(a) => synth(config, a),
        Command::Calibrate(a) => calibrate(config, a),
        Command::Config => {
            print!("{}", config.to_toml()?);
            Ok(0)
        }
    }
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| anyhow!("{}: no file name", path.display()))
}

fn enroll(config: &Config, a: &EnrollArgs) -> Result<u8> {
    let info = CaptureInfo {
        subject_id: a.subject.clone(),
        session_id: a.session.clone(),
        thumb: a.thumb,
        gender: a.gender,
        age_weeks: a.age_weeks,
    };
    if info.subject_id.is_empty() || info.subject_id.len() > 255 || info.session_id.len() > 255 {
        return Err(usage("subject and session ids must be 1 to 255 bytes"));
    }
    std::fs::create_dir_all(&a.out)?;
    let mut empty = 0;
    for path in &a.images {
        let img = read_pgm(path, config.image.ppi).with_context(|| format!("reading {}", path.display()))?;
        let ex = extract(&img, &config.extract)?;
        let raw = template_from_extraction(&ex, &info)?;
        let template = if a.no_aging { raw.clone() } else { age_template(&raw, &config.aging)? };
        let name = stem(path)?;
        let out = a.out.join(format!("{name}.iptf"));
        std::fs::write(&out, write_template(&template)?).with_context(|| format!("writing {}", out.display()))?;
        if a.minutiae_txt {
            let mut text = String::new();
            for (m, d) in template.minutiae.iter().zip(&ex.detections) {
                writeln!(text, "{:.2} {:.2} {:.2} {}", m.x, m.y, m.theta.to_degrees(), d.kind.label())?;
            }
            std::fs::write(a.out.join(format!("{name}.txt")), text)?;
        }
        if let Some(dir) = &a.dump_minmap {
            let map = encode_minutiae_map(&raw.minutiae, img.height(), img.width(), &config.minmap)?;
            dump_channels(&map, dir, &name)?;
        }
        println!("{}: {} minutiae, aged={}", out.display(), template.minutiae.len(), template.aged);
        if template.minutiae.is_empty() {
            warn!("{}: no minutiae found", path.display());
            empty += 1;
        }
    }
    Ok(if empty > 0 { EXIT_DATA } else { 0 })
}

fn read_samples(templates: &[PathBuf], images: &[PathBuf], what: &str) -> Result<Vec<Sample>> {
    if !images.is_empty() && images.len() != templates.len() {
        return Err(usage(format!("{what}: {} images for {} templates", images.len(), templates.len())));
    }
    templates
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let template = read_template(&bytes).with_context(|| format!("decoding {}", path.display()))?;
            Ok(Sample {
                template,
                image: images.get(i).cloned(),
            })
        })
        .collect()
}

fn record(samples: Vec<Sample>) -> SubjectRecord {
    SubjectRecord {
        subject_id: samples.first().map(|s| s.template.subject_id.clone()).unwrap_or_default(),
        samples,
    }
}

fn warn_aged_probes(probes: &[Sample]) {
    for p in probes.iter().filter(|p| p.template.aged) {
        warn!("probe {} / {} was stored aged; enroll probes with --no-aging", p.template.subject_id, p.template.session_id);
    }
}

fn match_cmd(config: &Config, a: &MatchArgs) -> Result<u8> {
    let matcher = config.matcher();
    let probe = record(read_samples(&a.probe, &a.probe_image, "--probe")?);
    let enrolled = record(read_samples(&a.enrolled, &a.enrolled_image, "--enrolled")?);
    warn_aged_probes(&probe.samples);
    let mut scores = Vec::new();
    let mut external_failed = false;
    for p in &probe.samples {
        for e in &enrolled.samples {
            if p.template.thumb != e.template.thumb {
                continue;
            }
            let raw = matcher.compare(p, e)?;
            if matcher.connector.is_some() && p.image.is_some() && e.image.is_some() && raw.external.is_none() {
                external_failed = true;
            }
            scores.push(fuse_scores(&normalize_scores(&raw, &matcher.bounds), &matcher.weights)?);
        }
    }
    if scores.is_empty() {
        bail!("no same-thumb template pairs to compare");
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let score = gate_genders(probe.gender(), enrolled.gender(), mean);
    println!("{score:.4}");
    if external_failed {
        eprintln!("error: external matcher failed; score fused from the remaining matchers");
        return Ok(EXIT_EXTERNAL);
    }
    Ok(0)
}

fn search(config: &Config, a: &SearchArgs) -> Result<u8> {
    let matcher = config.matcher();
    let probe = record(read_samples(&a.probe, &[], "--probe")?);
    warn_aged_probes(&probe.samples);
    let manifest = read_manifest(&a.gallery)?;
    let samples = load_samples(&manifest, config.image.ppi, &config.extract)?;
    let mut by_subject: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    for s in samples {
        by_subject.entry(s.template.subject_id.clone()).or_default().push(s);
    }
    let gallery: Vec<SubjectRecord> = by_subject
        .into_iter()
        .map(|(subject_id, samples)| SubjectRecord { subject_id, samples })
        .collect();
    let ranked = matcher.search(&probe, &gallery);
    let n = a.top.unwrap_or(ranked.len());
    for c in ranked.iter().take(n) {
        println!("{}\t{}\t{:.4}", c.rank, c.subject_id, c.fused_score);
    }
    Ok(0)
}

/// Pairs whose images were available but produced no external score.
fn external_failures(config: &Config, table: &ScoreTable, all_images: bool) -> usize {
    if config.external.is_none() || !all_images {
        return 0;
    }
    table.scores.iter().flat_map(|s| &s.bundles).filter(|b| b.external.is_none()).count()
}

fn eval(mut config: Config, a: &EvalArgs) -> Result<u8> {
    if !a.far.is_empty() {
        config.eval.far_targets = a.far.clone();
        config.validate().map_err(|e| usage(e.to_string()))?;
    }
    let manifest = read_manifest(&a.manifest)?;
    let matcher = config.matcher();
    let samples = load_samples(&manifest, config.image.ppi, &config.extract)?;
    let table = score_protocol(&manifest, &samples, &matcher)?;
    let report = build_report(&table, &config.weights, &config.eval)?;
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("report.csv"), report.to_csv())?;
        std::fs::write(out.join("report.txt"), report.to_table())?;
        std::fs::write(out.join("scores.csv"), table.to_csv(&config.weights)?)?;
    }
    let failed = external_failures(&config, &table, samples.iter().all(|s| s.image.is_some()));
    if failed > 0 {
        eprintln!("error: external matcher failed on {failed} comparisons");
        return Ok(EXIT_EXTERNAL);
    }
    Ok(0)
}

fn synth(mut config: Config, a: &SynthArgs) -> Result<u8> {
    let spec = &mut config.synth;
    spec.seed = a.seed;
    if let Some(n) = a.subjects {
        spec.n_subjects = n;
    }
    if let Some(n) = a.sessions {
        spec.sessions = n;
    }
    if let Some(n) = a.impressions {
        spec.impressions = n;
    }
    if let Some(c) = a.canvas {
        spec.canvas = c;
    }
    if let Some(p) = &a.profile {
        spec.profile = DegradationProfile::by_name(p).map_err(|e| usage(e.to_string()))?;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let manifest = build_benchmark(&a.out, spec)?;
    println!(
        "{}: {} images from {} subjects",
        a.out.join("manifest.tsv").display(),
        manifest.entries.len(),
        spec.n_subjects
    );
    Ok(0)
}

fn calibrate(mut config: Config, a: &CalibrateArgs) -> Result<u8> {
    let manifest = read_manifest(&a.manifest)?;
    let matcher = config.matcher();
    let samples = load_samples(&manifest, config.image.ppi, &config.extract)?;
    let table = score_protocol(&manifest, &samples, &matcher)?;
    let split = |label: PairLabel| -> Vec<_> {
        table
            .pairs
            .iter()
            .zip(&table.scores)
            .filter(|(p, _)| p.label == label)
            .map(|(_, s)| s.clone())
            .collect()
    };
    let (genuine, imposter) = (split(PairLabel::Genuine), split(PairLabel::Imposter));
    let weights = calibrate_pairs(&genuine, &imposter, a.far, a.step)?;
    let tar = |w: &FusionWeights| -> Result<f64> {
        let g: Vec<f64> = genuine.iter().map(|p| p.fused(w)).collect::<neoprint::Result<_>>()?;
        let i: Vec<f64> = imposter.iter().map(|p| p.fused(w)).collect::<neoprint::Result<_>>()?;
        Ok(tar_at_far(&g, &i, a.far)?.0)
    };
    println!("[weights]");
    println!("minutiae = {}", weights.minutiae);
    println!("texture = {}", weights.texture);
    println!("external = {}", weights.external);
    eprintln!(
        "TAR @ FAR {}: {:.4} calibrated, {:.4} with previous weights",
        a.far,
        tar(&weights)?,
        tar(&config.weights)?
    );
    if let Some(path) = &a.write_config {
        config.weights = weights;
        std::fs::write(path, config.to_toml()?)?;
    }
    Ok(0)
}
