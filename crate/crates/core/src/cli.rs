//! Command-line front end.
//!
//! Exit codes: 0 success, 1 domain error (validation or evaluation),
//! 2 I/O or usage error. Errors go to stderr as `error[<code>]: <message>`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    filter_speakers, load_manifest, read_manifest, validate, write_corpus, AttributeFilter, CorpusError,
};
use crate::histogram::{RangePolicy, DEFAULT_NBINS};
use crate::leakage::{evaluate, run_experiment, EvalConfig, LeakageError, Mismatch, DEFAULT_TAU};
use crate::metric::proximal_ranking;
use crate::report::{experiment_records, histogram_tsv, render_records, render_report, Format};
use crate::synth::{append_conversion, generate_corpus, ConversionSimConfig, SynthConfig, SynthError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_DOMAIN: u8 = 1;
pub const EXIT_IO: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "vcleak",
    version,
    about = "Measure source-speaker leakage in voice-converted speech"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RangeArg {
    /// min/max over B, R and G together
    Shared,
    /// the full cosine range [-1, 1]
    Fixed,
}

impl From<RangeArg> for RangePolicy {
    fn from(r: RangeArg) -> Self {
        match r {
            RangeArg::Shared => RangePolicy::Shared,
            RangeArg::Fixed => RangePolicy::Fixed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TripleArgs {
    /// Corpus manifest.
    pub manifest: PathBuf,
    /// Target speaker P.
    #[arg(long)]
    pub target: String,
    /// Source speaker D.
    #[arg(long)]
    pub source: String,
    /// Conversion set P'.
    #[arg(long)]
    pub conversion: String,
    #[arg(long, default_value_t = DEFAULT_NBINS)]
    pub nbins: usize,
    #[arg(long, value_enum, default_value = "shared")]
    pub range: RangeArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a corpus manifest; prints CODE<TAB>location<TAB>detail per violation.
    Validate { manifest: PathBuf },

    /// Proximal speaker of a filtered subset, with every member's summed cosine distance.
    Proximal {
        manifest: PathBuf,
        /// Attribute constraint `key=value`; repeatable.
        #[arg(long = "filter", value_name = "KEY=VALUE")]
        filters: Vec<String>,
    },

    /// Evaluate one (target, source, conversion) configuration.
    Eval {
        #[command(flatten)]
        triple: TripleArgs,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },

    /// Run a JSON experiment config: one row per mismatch plus the matched control.
    Experiment {
        config: PathBuf,
        /// Overrides the config's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's `format`.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },

    /// Generate a synthetic corpus (manifest + EMB1 files).
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        speakers: usize,
        #[arg(long, default_value_t = 50)]
        utterances: usize,
        #[arg(long, default_value_t = 192)]
        dim: usize,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `key=v1,v2,...`, values assigned to speakers cyclically; repeatable.
        #[arg(long = "attr", value_name = "KEY=V1,V2")]
        attrs: Vec<String>,
        /// `src=ID,tgt=ID,alpha=A[,n=N][,sigma=S][,seed=K][,id=ID]`; repeatable.
        #[arg(long = "convert", value_name = "SPEC")]
        converts: Vec<String>,
        /// Write into an existing output directory.
        #[arg(long)]
        force: bool,
    },

    /// Dump the B/R/G histograms as TSV.
    Hist {
        #[command(flatten)]
        triple: TripleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Experiment definition read by `vcleak experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    #[serde(default)]
    pub target_filter: AttributeFilter,
    #[serde(default)]
    pub mismatches: Vec<Mismatch>,
    #[serde(default = "default_nbins")]
    pub nbins: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub range: RangePolicy,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

fn default_nbins() -> usize {
    DEFAULT_NBINS
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

#[derive(Debug)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub exit: u8,
}

impl CliError {
    fn io(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            message: message.into(),
            exit: EXIT_IO,
        }
    }

    fn domain(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            message: message.into(),
            exit: EXIT_DOMAIN,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let exit = if e.is_io() { EXIT_IO } else { EXIT_DOMAIN };
        let message = match &e {
            CorpusError::Invalid(v) => {
                let lines: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                format!("{e}\n{}", lines.join("\n"))
            }
            _ => e.to_string(),
        };
        CliError {
            code: e.code().into(),
            message,
            exit,
        }
    }
}

impl From<LeakageError> for CliError {
    fn from(e: LeakageError) -> Self {
        match e {
            LeakageError::Corpus(inner) => inner.into(),
            other => CliError::domain(other.code(), other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::domain(e.code(), e.to_string())
    }
}

type CmdResult = Result<u8, CliError>;

/// Runs a parsed command, writing human output to `stdout` and errors to
/// `stderr`. Returns the process exit code.
pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Validate { manifest } => cmd_validate(&manifest, stdout),
        Command::Proximal { manifest, filters } => cmd_proximal(&manifest, &filters, stdout),
        Command::Eval {
            triple,
            tau,
            out,
            format,
        } => cmd_eval(&triple, tau, out.as_deref(), format, stdout),
        Command::Experiment { config, out, format } => cmd_experiment(&config, out.as_deref(), format, stdout, stderr),
        Command::Synth {
            out,
            speakers,
            utterances,
            dim,
            sigma,
            seed,
            attrs,
            converts,
            force,
        } => {
            let config = SynthConfig {
                n_speakers: speakers,
                n_utterances: utterances,
                dim,
                sigma,
                seed,
                attribute_plan: Default::default(),
            };
            cmd_synth(config, &attrs, &converts, &out, force, stdout)
        }
        Command::Hist { triple, out } => cmd_hist(&triple, out.as_deref(), stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error[{}]: {}", e.code, e.message);
            e.exit
        }
    }
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::io("io", format!("cannot write {}: {e}", path.display())))
        }
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("io", format!("cannot write to stdout: {e}"))),
    }
}

fn stdout_line(stdout: &mut dyn Write, line: &str) -> Result<(), CliError> {
    writeln!(stdout, "{line}").map_err(|e| CliError::io("io", format!("cannot write to stdout: {e}")))
}

pub fn cmd_validate(manifest: &Path, stdout: &mut dyn Write) -> CmdResult {
    let corpus = match read_manifest(manifest) {
        Ok(c) => c,
        Err(e) if e.is_io() => return Err(e.into()),
        // file-level content problems are reported like any other violation
        Err(e) => {
            stdout_line(stdout, &format!("{}\t{}\t{}", e.code(), manifest.display(), e))?;
            return Ok(EXIT_DOMAIN);
        }
    };
    let violations = validate(&corpus);
    for v in &violations {
        stdout_line(stdout, &v.to_string())?;
    }
    Ok(if violations.is_empty() { EXIT_OK } else { EXIT_DOMAIN })
}

pub fn cmd_proximal(manifest: &Path, filters: &[String], stdout: &mut dyn Write) -> CmdResult {
    let filter = AttributeFilter::parse(filters).map_err(|m| CliError::io("usage", m))?;
    let corpus = load_manifest(manifest)?;
    let subset = filter_speakers(&corpus, &filter)?;
    let mut ranking = proximal_ranking(&subset, &corpus).map_err(LeakageError::from)?;
    // stable: ties keep manifest order, so the first line is the proximal speaker
    ranking.sort_by(|a, b| a.1.total_cmp(&b.1));
    stdout_line(stdout, &format!("proximal\t{}\tn={}", ranking[0].0, subset.n()))?;
    for (id, sum) in &ranking {
        stdout_line(stdout, &format!("{id}\t{sum:.6}"))?;
    }
    Ok(EXIT_OK)
}

fn eval_config(nbins: usize, tau: f64, range: RangePolicy) -> Result<EvalConfig, CliError> {
    let config = EvalConfig { nbins, tau, range };
    config.check().map_err(|e| CliError::io("usage", e.to_string()))?;
    Ok(config)
}

pub fn cmd_eval(args: &TripleArgs, tau: f64, out: Option<&Path>, format: Format, stdout: &mut dyn Write) -> CmdResult {
    let config = eval_config(args.nbins, tau, args.range.into())?;
    let corpus = load_manifest(&args.manifest)?;
    let report = evaluate(&corpus, &args.target, &args.source, &args.conversion, &config)?;
    emit(&render_report(&report, format), out, stdout)?;
    Ok(EXIT_OK)
}

pub fn cmd_hist(args: &TripleArgs, out: Option<&Path>, stdout: &mut dyn Write) -> CmdResult {
    let config = eval_config(args.nbins, DEFAULT_TAU, args.range.into())?;
    let corpus = load_manifest(&args.manifest)?;
    let report = evaluate(&corpus, &args.target, &args.source, &args.conversion, &config)?;
    let tsv = histogram_tsv(&report).map_err(|e| CliError::domain(e.code(), e.to_string()))?;
    emit(&tsv, out, stdout)?;
    Ok(EXIT_OK)
}

pub fn read_experiment_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::io("io", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::io("malformed-config", format!("{}: {e}", path.display())))
}

pub fn cmd_experiment(
    config_path: &Path,
    out: Option<&Path>,
    format: Option<Format>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CmdResult {
    let config = read_experiment_config(config_path)?;
    let eval = eval_config(config.nbins, config.tau, config.range)?;
    let corpus = load_manifest(&config.manifest)?;
    let experiment = run_experiment(&corpus, &config.target_filter, &config.mismatches, &eval)?;
    let records = experiment_records(&experiment);
    let text = render_records(&records, &experiment.target, format.unwrap_or(config.format));
    emit(&text, out.or(config.out.as_deref()), stdout)?;

    for row in &experiment.rows {
        if let Err(e) = &row.outcome {
            let _ = writeln!(stderr, "error[{}]: row `{}`: {e}", e.code(), row.label);
        }
    }
    Ok(if experiment.failed_rows() > 0 {
        EXIT_DOMAIN
    } else {
        EXIT_OK
    })
}

fn parse_attr_plan(items: &[String]) -> Result<Vec<(String, Vec<String>)>, String> {
    items
        .iter()
        .map(|item| {
            let (k, vs) = item
                .split_once('=')
                .ok_or_else(|| format!("expected key=v1,v2,..., got `{item}`"))?;
            let values: Vec<String> = vs.split(',').map(str::to_string).collect();
            if k.is_empty() || values.iter().any(String::is_empty) {
                return Err(format!("malformed attribute plan `{item}`"));
            }
            Ok((k.to_string(), values))
        })
        .collect()
}

/// Parses `src=..,tgt=..,alpha=..[,n=..][,sigma=..][,seed=..][,id=..]`.
pub fn parse_convert_spec(spec: &str, defaults: &SynthConfig, index: usize) -> Result<ConversionSimConfig, String> {
    let mut source = None;
    let mut target = None;
    let mut alpha = None;
    let mut sim = ConversionSimConfig {
        id: None,
        source_id: String::new(),
        target_id: String::new(),
        alpha: 0.0,
        n_utterances: defaults.n_utterances,
        sigma: defaults.sigma,
        seed: defaults.seed.wrapping_add(1 + index as u64),
    };
    for part in spec.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value in `{part}`"))?;
        let bad = |e: &dyn std::fmt::Display| format!("bad value for `{k}` in `{spec}`: {e}");
        match k {
            "src" => source = Some(v.to_string()),
            "tgt" => target = Some(v.to_string()),
            "alpha" => alpha = Some(v.parse::<f64>().map_err(|e| bad(&e))?),
            "n" => sim.n_utterances = v.parse().map_err(|e| bad(&e))?,
            "sigma" => sim.sigma = v.parse().map_err(|e| bad(&e))?,
            "seed" => sim.seed = v.parse().map_err(|e| bad(&e))?,
            "id" => sim.id = Some(v.to_string()),
            other => return Err(format!("unknown key `{other}` in `{spec}`")),
        }
    }
    sim.source_id = source.ok_or_else(|| format!("`{spec}` lacks src="))?;
    sim.target_id = target.ok_or_else(|| format!("`{spec}` lacks tgt="))?;
    sim.alpha = alpha.ok_or_else(|| format!("`{spec}` lacks alpha="))?;
    Ok(sim)
}

pub fn cmd_synth(
    mut config: SynthConfig,
    attrs: &[String],
    converts: &[String],
    out: &Path,
    force: bool,
    stdout: &mut dyn Write,
) -> CmdResult {
    for (k, values) in parse_attr_plan(attrs).map_err(|m| CliError::io("usage", m))? {
        config.attribute_plan.insert(k, values);
    }
    let sims = converts
        .iter()
        .enumerate()
        .map(|(i, spec)| parse_convert_spec(spec, &config, i))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|m| CliError::io("usage", m))?;
    if out.exists() && !force {
        return Err(CliError::io(
            "output-exists",
            format!("{} already exists (use --force to write into it)", out.display()),
        ));
    }

    let mut corpus = generate_corpus(&config)?;
    for sim in &sims {
        append_conversion(&mut corpus, sim)?;
    }
    let manifest = write_corpus(&corpus, out)?;
    stdout_line(stdout, &manifest.display().to_string())?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> SynthConfig {
        SynthConfig {
            n_speakers: 2,
            n_utterances: 7,
            dim: 4,
            sigma: 0.1,
            seed: 10,
            attribute_plan: Default::default(),
        }
    }

    #[test]
    fn convert_spec_parsing() {
        let sim = parse_convert_spec("src=spk1,tgt=spk0,alpha=0.5,n=50", &defaults(), 0).unwrap();
        assert_eq!(sim.source_id, "spk1");
        assert_eq!(sim.target_id, "spk0");
        assert_eq!(sim.alpha, 0.5);
        assert_eq!(sim.n_utterances, 50);
        assert_eq!(sim.sigma, 0.1);
        assert_eq!(sim.seed, 11);
        assert_eq!(sim.conversion_id(), "spk1_to_spk0");

        let sim = parse_convert_spec("tgt=a,src=b,alpha=0,seed=3,id=x,sigma=0", &defaults(), 4).unwrap();
        assert_eq!((sim.seed, sim.sigma, sim.conversion_id().as_str()), (3, 0.0, "x"));

        assert!(parse_convert_spec("src=a,tgt=b", &defaults(), 0).is_err());
        assert!(parse_convert_spec("src=a,tgt=b,alpha=x", &defaults(), 0).is_err());
        assert!(parse_convert_spec("src=a,tgt=b,alpha=1,beta=2", &defaults(), 0).is_err());
    }

    #[test]
    fn attr_plan_parsing() {
        let plan = parse_attr_plan(&["gender=male,female".to_string()]).unwrap();
        assert_eq!(
            plan,
            vec![("gender".to_string(), vec!["male".to_string(), "female".to_string()])]
        );
        assert!(parse_attr_plan(&["gender".to_string()]).is_err());
        assert!(parse_attr_plan(&["gender=male,".to_string()]).is_err());
    }

    #[test]
    fn experiment_config_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"manifest": "m.json"}"#).unwrap();
        assert_eq!(cfg.nbins, 50);
        assert_eq!(cfg.tau, 0.33);
        assert_eq!(cfg.range, RangePolicy::Shared);
        assert_eq!(cfg.format, Format::Json);
        assert!(cfg.mismatches.is_empty() && cfg.target_filter.is_empty());
    }
}
