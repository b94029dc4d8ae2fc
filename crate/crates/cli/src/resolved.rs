//! The effective flag values of one run, printed up front and stored with
//! training outputs as a reusable `--config` file.

use std::fmt::Display;
use std::path::Path;

use attnup::{Error, Result};
use clap::{ArgMatches, Command};

const SKIP: [&str; 3] = ["config", "help", "version"];

pub struct Resolved {
    command: String,
    entries: Vec<(String, Option<String>)>,
}

impl Resolved {
    pub fn from_matches(cmd: &Command, m: &ArgMatches) -> Self {
        let entries = cmd
            .get_arguments()
            .filter_map(|a| {
                let key = a.get_long()?;
                if SKIP.contains(&key) {
                    return None;
                }
                let value = m.get_raw(a.get_id().as_str()).map(|vals| {
                    vals.map(|v| v.to_string_lossy().into_owned())
                        .collect::<Vec<_>>()
                        .join(",")
                });
                Some((key.to_string(), value))
            })
            .collect();
        Resolved {
            command: cmd.get_name().to_string(),
            entries,
        }
    }

    /// Records the value a flag left unset resolved to.
    pub fn fill(&mut self, key: &str, value: impl Display) {
        if let Some((_, v @ None)) = self.entries.iter_mut().find(|(k, _)| k == key) {
            *v = Some(value.to_string());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| v.as_deref())
    }

    pub fn text(&self) -> String {
        let mut out = format!("# attnup {}\n", self.command);
        for (k, v) in &self.entries {
            match v {
                Some(v) => out.push_str(&format!("{k} = {v}\n")),
                None => out.push_str(&format!("# {k} unset\n")),
            }
        }
        if self.get("seed").is_none() {
            out.push_str("# seed: none, this command draws no random numbers\n");
        }
        out
    }

    /// Prints the configuration to stderr and, for training runs, writes it to
    /// `config.txt` in the output directory.
    pub fn announce(&self, out_dir: Option<&Path>) -> Result<()> {
        let text = self.text();
        eprint!("{text}");
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join("config.txt");
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
