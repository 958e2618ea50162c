//! Executes a parsed [`RunConfig`] and renders its output.

use std::io::Write;
use std::path::Path;

use semigen::{
    read_sample_csv, run_erp_experiment, run_mc_experiment, run_test, BandwidthMode, KernelSpec, McReport,
    TestResult, ThirdBandwidth,
};
use thiserror::Error;

use crate::config::{Command, Format, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    /// Unreadable or invalid input, or an inconsistent specification.
    #[error("{0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Data(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Output(_) => 1,
        }
    }
}

impl From<semigen::Error> for RunError {
    fn from(e: semigen::Error) -> Self {
        let text = format!("{}: {e}", e.module());
        if e.is_numerical() {
            RunError::Numerical(text)
        } else {
            RunError::Data(text)
        }
    }
}

fn csv_error(e: impl std::fmt::Display) -> RunError {
    RunError::Output(e.to_string())
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, RunError> {
    let mut text = serde_json::to_string_pretty(value).map_err(csv_error)?;
    text.push('\n');
    Ok(text)
}

fn bandwidth_label(mode: BandwidthMode) -> String {
    match mode {
        BandwidthMode::Selected => "auto".into(),
        BandwidthMode::RuleC(c) => format!("c:{c}"),
    }
}

fn test_csv(result: &TestResult) -> Result<String, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "critical_value", "reject", "s_n", "p_value"]).map_err(csv_error)?;
    for level in &result.levels {
        w.write_record([
            level.alpha.to_string(),
            level.critical_value.map(|c| c.to_string()).unwrap_or_default(),
            level.reject.to_string(),
            result.s_n.to_string(),
            result.p_value.to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

fn rejection_csv(report: &McReport) -> Result<String, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dgp", "n", "p", "alpha", "variant", "bandwidth", "frequency"]).map_err(csv_error)?;
    for row in &report.rejection_freq {
        let variant = match row.variant {
            semigen::TestVariant::Bc => "bc",
            semigen::TestVariant::Un => "un",
        };
        w.write_record([
            row.dgp.number().to_string(),
            row.n.to_string(),
            row.p.to_string(),
            row.alpha.to_string(),
            variant.to_string(),
            bandwidth_label(row.bandwidth),
            row.frequency.to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

fn erp_csv(report: &McReport) -> Result<String, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["C", "nominal", "erp_bc", "erp_un"]).map_err(csv_error)?;
    for row in &report.erp {
        w.serialize((row.c, row.nominal, row.erp_bc, row.erp_un)).map_err(csv_error)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, RunError> {
    let bytes = w.into_inner().map_err(csv_error)?;
    String::from_utf8(bytes).map_err(csv_error)
}

fn simulate_mode(bandwidth: ThirdBandwidth) -> Result<BandwidthMode, RunError> {
    match bandwidth {
        ThirdBandwidth::Auto => Ok(BandwidthMode::Selected),
        ThirdBandwidth::RuleOfThumb(c) => Ok(BandwidthMode::RuleC(c)),
        ThirdBandwidth::Fixed(_) => Err(RunError::Data("simulate accepts --bandwidth auto or c:<C>".into())),
    }
}

/// Runs the command and returns the text it would write.
pub fn render(config: &RunConfig) -> Result<String, RunError> {
    match config.command {
        Command::Test => {
            let path = config
                .input_csv
                .as_deref()
                .ok_or_else(|| RunError::Data("no input file".into()))?;
            let sample = read_sample_csv::<f64>(path)?;
            let model = config.model.build(sample.x.ncols())?;
            let result = run_test(&sample, &model, KernelSpec::default(), &config.trimming, &config.test)?;
            match config.format {
                Format::Json => json(&result),
                Format::Csv => test_csv(&result),
            }
        }
        Command::Simulate => {
            let mode = simulate_mode(config.test.bandwidth)?;
            let report = run_mc_experiment::<f64>(&config.dgp, &config.test, config.reps, config.warp_speed, mode)?;
            match config.format {
                Format::Json => json(&report),
                Format::Csv => rejection_csv(&report),
            }
        }
        Command::Erp => {
            let report = run_erp_experiment::<f64>(&config.dgp, &config.test, config.reps, &config.c_grid)?;
            match config.format {
                Format::Json => json(&report),
                Format::Csv => erp_csv(&report),
            }
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), RunError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| RunError::Output(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| RunError::Output(e.to_string())),
    }
}

/// Runs the command on a pool of `config.threads` workers and writes the output.
pub fn run(config: &RunConfig) -> Result<(), RunError> {
    let text = match config.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| RunError::Data(e.to_string()))?
            .install(|| render(config))?,
        None => render(config)?,
    };
    write_output(config.output.as_deref(), &text)
}
