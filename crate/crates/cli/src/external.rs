//! External tools invoked through command templates.
//!
//! A template is split on whitespace; `{wav}` and `{transcript}` are replaced
//! inside each token. No shell is involved, so paths with spaces stay intact.

use std::path::Path;
use std::process::Command;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("empty command template")]
    EmptyTemplate,
    #[error("could not start '{program}'")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error("'{program}' exited with {status}: {stderr}")]
    Failed { program: String, status: String, stderr: String },
    #[error("'{program}' printed non-UTF-8 output")]
    Encoding { program: String },
    #[error("could not parse a vector from the output of '{program}': {detail}")]
    BadVector { program: String, detail: String },
}

pub fn expand(template: &str, wav: &Path, transcript: Option<&Path>) -> Vec<String> {
    template
        .split_whitespace()
        .map(|tok| {
            let tok = tok.replace("{wav}", &wav.to_string_lossy());
            match transcript {
                Some(t) => tok.replace("{transcript}", &t.to_string_lossy()),
                None => tok,
            }
        })
        .collect()
}

/// Runs the expanded template and returns its standard output.
pub fn run(template: &str, wav: &Path, transcript: Option<&Path>) -> Result<String, ExternalError> {
    let argv = expand(template, wav, transcript);
    let (program, rest) = argv.split_first().ok_or(ExternalError::EmptyTemplate)?;
    let out = Command::new(program)
        .args(rest)
        .output()
        .map_err(|source| ExternalError::Spawn {
            program: program.clone(),
            source,
        })?;
    if !out.status.success() {
        return Err(ExternalError::Failed {
            program: program.clone(),
            status: out.status.to_string(),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    String::from_utf8(out.stdout).map_err(|_| ExternalError::Encoding {
        program: program.clone(),
    })
}

/// Runs an embedder template and parses whitespace- or comma-separated numbers.
pub fn run_vector(template: &str, wav: &Path) -> Result<Vec<f64>, ExternalError> {
    let text = run(template, wav, None)?;
    let program = template.split_whitespace().next().unwrap_or_default().to_string();
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ExternalError::BadVector {
            program: program.clone(),
            detail: e.to_string(),
        })?;
    if values.is_empty() {
        return Err(ExternalError::BadVector {
            program,
            detail: "no values".into(),
        });
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expands_placeholders_per_token() {
        let argv = expand("asr --in={wav} --ref {transcript}", Path::new("a b.wav"), Some(Path::new("t.txt")));
        assert_eq!(argv, vec!["asr", "--in=a b.wav", "--ref", "t.txt"]);
        assert_eq!(expand("x {transcript}", Path::new("w"), None), vec!["x", "{transcript}"]);
    }

    #[test]
    fn reports_failures() {
        assert!(matches!(run("", Path::new("w"), None), Err(ExternalError::EmptyTemplate)));
        assert!(matches!(
            run("/nonexistent/tool {wav}", Path::new("w"), None),
            Err(ExternalError::Spawn { .. })
        ));
        assert!(matches!(run("false", Path::new("w"), None), Err(ExternalError::Failed { .. })));
        assert_eq!(run("echo hi {wav}", Path::new("w"), None).unwrap(), "hi w\n");
        assert_eq!(run_vector("echo 1,2 3", Path::new("w")).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(run_vector("echo a", Path::new("w")).is_err());
    }
}
