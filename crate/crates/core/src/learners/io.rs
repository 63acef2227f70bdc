//! Plain-text model files.
//!
//! ```text
//! fairscore-model 1
//! kind logistic|network
//! inputs <k>
//! hidden <h>            (0 for logistic)
//! seed <u64>
//! label <text>
//! iterations <n>
//! converged true|false
//! final_loss <f64>
//! data_loss <f64>
//! mean <k values>
//! scale <k values>
//! parameters <values>
//! ```
//!
//! Numbers use the shortest representation that parses back to the same
//! `f64`, so a save/load round trip is bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Architecture, Diagnostics, LearnerError, LearnerKind, Standardizer, TrainedModel};

const MAGIC: &str = "fairscore-model 1";

fn join(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:?}").expect("string write");
    }
    out
}

pub fn write_model(m: &TrainedModel, mut out: impl Write) -> Result<(), LearnerError> {
    let (kind, inputs, hidden) = match m.architecture {
        Architecture::Logistic { inputs } => (LearnerKind::Logistic, inputs, 0),
        Architecture::Network { inputs, hidden } => (LearnerKind::Network, inputs, hidden),
    };
    let d = &m.diagnostics;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "kind {}", kind.as_str())?;
    writeln!(out, "inputs {inputs}")?;
    writeln!(out, "hidden {hidden}")?;
    writeln!(out, "seed {}", m.seed)?;
    writeln!(out, "label {}", m.label.replace('\n', " "))?;
    writeln!(out, "iterations {}", d.iterations)?;
    writeln!(out, "converged {}", d.converged)?;
    writeln!(out, "final_loss {:?}", d.final_loss)?;
    writeln!(out, "data_loss {:?}", d.data_loss)?;
    writeln!(out, "mean {}", join(&m.standardizer.mean))?;
    writeln!(out, "scale {}", join(&m.standardizer.scale))?;
    writeln!(out, "parameters {}", join(&m.parameters))?;
    Ok(())
}

pub fn save_model(m: &TrainedModel, path: impl AsRef<Path>) -> Result<(), LearnerError> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_model(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, LearnerError> {
    read_model(std::fs::File::open(path)?)
}

fn bad(msg: impl Into<String>) -> LearnerError {
    LearnerError::Format(msg.into())
}

pub fn read_model(input: impl Read) -> Result<TrainedModel, LearnerError> {
    let mut lines = BufReader::new(input).lines();
    let mut next = |key: &str| -> Result<String, LearnerError> {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing `{key}` line")))??;
        if key.is_empty() {
            return Ok(line);
        }
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.to_string()),
            None if line == key => Ok(String::new()),
            _ => Err(bad(format!("expected `{key}`, found `{line}`"))),
        }
    };
    if next("")? != MAGIC {
        return Err(bad("not a fairscore model file (or unsupported version)"));
    }
    let kind = match next("kind")?.as_str() {
        "logistic" => LearnerKind::Logistic,
        "network" => LearnerKind::Network,
        other => return Err(bad(format!("unknown kind `{other}`"))),
    };
    let int = |s: String| {
        s.trim()
            .parse::<u64>()
            .map_err(|e| bad(format!("`{s}`: {e}")))
    };
    let inputs = int(next("inputs")?)? as usize;
    let hidden = int(next("hidden")?)? as usize;
    let seed = int(next("seed")?)?;
    let label = next("label")?;
    let iterations = int(next("iterations")?)? as usize;
    let converged = next("converged")?.trim() == "true";
    let float = |s: String| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| bad(format!("`{s}`: {e}")))
    };
    let final_loss = float(next("final_loss")?)?;
    let data_loss = float(next("data_loss")?)?;
    let floats = |s: String| -> Result<Vec<f64>, LearnerError> {
        s.split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| bad(format!("`{t}`: {e}"))))
            .collect()
    };
    let mean = floats(next("mean")?)?;
    let scale = floats(next("scale")?)?;
    let parameters = floats(next("parameters")?)?;

    let architecture = match kind {
        LearnerKind::Logistic => Architecture::Logistic { inputs },
        LearnerKind::Network => Architecture::Network { inputs, hidden },
    };
    if mean.len() != inputs || scale.len() != inputs {
        return Err(bad("standardization length does not match inputs"));
    }
    if parameters.len() != architecture.n_params() {
        return Err(bad(format!(
            "expected {} parameters, found {}",
            architecture.n_params(),
            parameters.len()
        )));
    }
    if parameters.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    Ok(TrainedModel {
        kind,
        architecture,
        parameters,
        standardizer: Standardizer { mean, scale },
        diagnostics: Diagnostics {
            final_loss,
            data_loss,
            iterations,
            converged,
            loss_history: Vec::new(),
        },
        seed,
        label,
    })
}
