//! Tab-separated dataset lists: `role<TAB>target[<TAB>guide]`, one record per
//! line, `#` starts a comment. Relative paths resolve against the manifest's
//! directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Eval,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Eval => "eval",
        })
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Role::Train),
            "eval" => Ok(Role::Eval),
            _ => Err(format!("unknown role {s:?}, expected train or eval")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub role: Role,
    pub target: PathBuf,
    pub guide: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<Record>,
}

impl Manifest {
    /// Parses manifest text. `origin` labels errors; `base` anchors relative paths.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let records = parse_lines(text, origin, base)?
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        Ok(Manifest { records })
    }

    /// Reads and parses `path`, checking that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let lines = parse_lines(&text, path, base)?;
        for (line, r) in &lines {
            for p in std::iter::once(&r.target).chain(r.guide.as_ref()) {
                if !p.is_file() {
                    return Err(Error::Manifest {
                        path: path.to_path_buf(),
                        line: *line,
                        msg: format!("missing file {}", p.display()),
                    });
                }
            }
        }
        Ok(Manifest {
            records: lines.into_iter().map(|(_, r)| r).collect(),
        })
    }

    pub fn role(&self, role: Role) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.role == role)
    }

    /// Serialises with paths relative to `base` where possible.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&format!("{}\t{}", r.role, rel(&r.target)));
            if let Some(g) = &r.guide {
                s.push_str(&format!("\t{}", rel(g)));
            }
            s.push('\n');
        }
        s
    }
}

fn parse_lines(text: &str, origin: &Path, base: &Path) -> Result<Vec<(usize, Record)>> {
    let mut records = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Manifest {
            path: origin.to_path_buf(),
            line: n + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) || fields.iter().any(|f| f.is_empty()) {
            return Err(err(format!(
                "expected role<TAB>target[<TAB>guide], got {} field(s)",
                fields.len()
            )));
        }
        let role = fields[0].parse().map_err(err)?;
        let resolve = |p: &str| base.join(p);
        records.push((
            n + 1,
            Record {
                role,
                target: resolve(fields[1]),
                guide: fields.get(2).map(|g| resolve(g)),
            },
        ));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records_in_order() {
        let text = "# header\ntrain\ta.png\n\neval\tb.png\tb_rgb.png # note\ntrain\tsub/c.png\n";
        let m = Manifest::parse(text, Path::new("m.tsv"), Path::new("/data")).unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(m.records[0].target, Path::new("/data/a.png"));
        assert_eq!(
            m.records[1].guide.as_deref(),
            Some(Path::new("/data/b_rgb.png"))
        );
        assert_eq!(m.role(Role::Train).count(), 2);
        let again = Manifest::parse(
            &m.to_text(Path::new("/data")),
            Path::new("m"),
            Path::new("/data"),
        );
        assert_eq!(again.unwrap(), m);
    }

    #[test]
    fn rejects_bad_lines() {
        for (text, line) in [
            ("train\n", 1),
            ("ok\tx\n", 1),
            ("train\ta\nfoo\tb\n", 2),
            ("eval\ta\tb\tc\n", 1),
        ] {
            match Manifest::parse(text, Path::new("m"), Path::new(".")) {
                Err(Error::Manifest { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn load_checks_existence() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.png"), b"x").unwrap();
        let path = dir.path().join("m.tsv");
        std::fs::write(&path, "train\ta.png\n").unwrap();
        assert_eq!(Manifest::load(&path).unwrap().records.len(), 1);
        std::fs::write(&path, "train\ta.png\neval\tmissing.png\n").unwrap();
        assert!(matches!(
            Manifest::load(&path),
            Err(Error::Manifest { line: 2, .. })
        ));
    }
}
