//! `key = value` recipe files spliced into argv.

use std::ffi::OsString;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Syntax {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("--config needs a path")]
    MissingPath,
}

/// Parses `key = value` lines into `--key value` pairs. Blank lines and
/// `#` comments are skipped; underscores in keys become dashes.
pub fn parse(text: &str, origin: &Path) -> Result<Vec<OsString>, ConfigFileError> {
    let mut args = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |msg: String| ConfigFileError::Syntax {
            path: origin.display().to_string(),
            line: n + 1,
            msg,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| syntax(format!("expected `key = value`, got {line:?}")))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key.starts_with('-') || key.contains(char::is_whitespace) {
            return Err(syntax(format!("bad key {key:?}")));
        }
        if key == "config" {
            return Err(syntax(
                "config files cannot include other config files".into(),
            ));
        }
        args.push(OsString::from(format!("--{key}")));
        args.push(OsString::from(value));
    }
    Ok(args)
}

fn config_path(argv: &[OsString]) -> Result<Option<OsString>, ConfigFileError> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it
                .next()
                .cloned()
                .map(Some)
                .ok_or(ConfigFileError::MissingPath);
        }
        if let Some(p) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Ok(Some(p.into()));
        }
    }
    Ok(None)
}

/// Inserts the flags of the `--config` file right after the subcommand so that
/// anything given on the command line parses later and wins.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, ConfigFileError> {
    if argv.len() < 2 {
        return Ok(argv);
    }
    let Some(path) = config_path(&argv[2..])? else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let extra = parse(&text, path)?;
    let mut out = argv[..2].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[2..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs_and_comments() {
        let text = "# recipe\nlr = 0.01  # faster\n\nmax_steps=5\nmilestones = 3,4\n";
        let got = parse(text, Path::new("r.cfg")).unwrap();
        assert_eq!(
            got,
            os(&["--lr", "0.01", "--max-steps", "5", "--milestones", "3,4"])
        );
    }

    #[test]
    fn rejects_malformed_lines() {
        let e = parse("lr 0.1\n", Path::new("r.cfg")).unwrap_err();
        assert!(e.to_string().starts_with("r.cfg:1:"), "{e}");
        assert!(parse("config = x\n", Path::new("r")).is_err());
        assert!(parse(" = 3\n", Path::new("r")).is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cfg");
        std::fs::write(&p, "seed = 3\n").unwrap();
        let argv = os(&[
            "attnup",
            "gradcheck",
            "--config",
            p.to_str().unwrap(),
            "--seed",
            "4",
        ]);
        let out = expand(argv).unwrap();
        assert_eq!(out[2..4], os(&["--seed", "3"])[..]);
        assert_eq!(out.last().unwrap(), "4");
        assert_eq!(expand(os(&["attnup", "params"])).unwrap().len(), 2);
        assert!(matches!(
            expand(os(&["attnup", "params", "--config"])),
            Err(ConfigFileError::MissingPath)
        ));
    }
}
