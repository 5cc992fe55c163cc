//! Command-line flags.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::{Map, Value};

use crate::config::{load_config_file, Experiment, ExperimentConfig, KEY_DOCS};
use crate::{commands, CliError, EXIT_CONFIG, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "dmsb", version, about = "Dark-state battery experiments")]
pub struct Args {
    /// classify, evolve, robustness, compare, decay or optimize.
    pub experiment: Option<String>,
    /// Config file, JSON or `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "J")]
    pub coupling_j: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub sites: Option<usize>,
    #[arg(long)]
    pub drive_amp: Option<f64>,
    #[arg(long)]
    pub drive_phase: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub sweep_alpha: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub show_config: bool,
}

impl Args {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("experiment", self.experiment.clone().map(Value::from));
        put("omega", self.omega.map(Value::from));
        put("alpha", self.alpha.map(Value::from));
        put("J", self.coupling_j.map(Value::from));
        put("gamma", self.gamma.map(Value::from));
        put("d", self.d.map(Value::from));
        put("sites", self.sites.map(Value::from));
        put("drive_amp", self.drive_amp.map(Value::from));
        put("drive_phase", self.drive_phase.map(Value::from));
        put("cutoff", self.cutoff.map(Value::from));
        put("t_final", self.t_final.map(Value::from));
        put("dt", self.dt.map(Value::from));
        put(
            "out",
            self.out.as_ref().map(|p| Value::from(p.to_string_lossy().into_owned())),
        );
        put("sweep_alpha", self.sweep_alpha.then_some(Value::Bool(true)));
        m
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        if let Some(name) = &self.experiment {
            name.parse::<Experiment>()?;
        }
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg = cfg.merge(load_config_file(path)?)?;
        }
        cfg = cfg.merge(self.overrides())?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn show_config(cfg: &ExperimentConfig) -> String {
    let v = serde_json::to_value(cfg).expect("config serializes");
    let mut s = String::new();
    for (key, doc) in KEY_DOCS {
        s += &format!("{key} = {}  # {doc}\n", v[*key]);
    }
    s + &format!("# config hash {}\n", cfg.hash())
}

/// Parse `argv`, run, and map the outcome to an exit code.
pub fn main_with<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    let outcome = args.resolve().and_then(|cfg| {
        if args.show_config {
            print!("{}", show_config(&cfg));
            return Ok(());
        }
        if args.experiment.is_none() && args.config.is_none() {
            return Err(CliError::Config("no experiment given".into()));
        }
        let report = commands::run(&cfg)?;
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        print!("{}", report.summary);
        for f in &report.files {
            println!("wrote {}", f.display());
        }
        Ok(())
    });
    match outcome {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
