//! Layered run configuration: built-in defaults < config file < flags.
//!
//! Every setting is a `key = value` line in the config file and a `--key`
//! flag on the command line. The file may hold keys for any command; a key
//! that no command knows is an error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmd {
    Train,
    Eval,
    Audit,
    Synth,
    DumpBeams,
}

impl Cmd {
    pub const ALL: [Cmd; 5] = [Cmd::Train, Cmd::Eval, Cmd::Audit, Cmd::Synth, Cmd::DumpBeams];

    pub fn name(self) -> &'static str {
        match self {
            Cmd::Train => "train",
            Cmd::Eval => "eval",
            Cmd::Audit => "audit",
            Cmd::Synth => "synth",
            Cmd::DumpBeams => "dump-beams",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Cmd::Train => "Train a parser and write a checkpoint plus metrics report",
            Cmd::Eval => "Exact-match accuracy of a checkpoint",
            Cmd::Audit => "Count spurious top-ranked compatible programs",
            Cmd::Synth => "Generate a synthetic corpus with known gold programs",
            Cmd::DumpBeams => "Write the training-time candidate set of every example",
        }
    }

    pub fn from_name(name: &str) -> Option<Cmd> {
        Cmd::ALL.into_iter().find(|c| c.name() == name)
    }
}

pub struct Key {
    pub name: &'static str,
    /// `None` means unset (optional setting).
    pub default: Option<&'static str>,
    pub help: &'static str,
    pub cmds: &'static [Cmd],
}

use Cmd::*;

const DATA: &[Cmd] = &[Train, Eval, Audit, DumpBeams];
const SEARCH: &[Cmd] = &[Train, Eval, Audit, DumpBeams];

pub const KEYS: &[Key] = &[
    Key { name: "data", default: None, help: "question file (TSV)", cmds: DATA },
    Key { name: "tables", default: None, help: "directory holding the table CSV files", cmds: DATA },
    Key { name: "test-data", default: None, help: "held-out question file scored after training", cmds: &[Train] },
    Key { name: "test-tables", default: None, help: "table directory for test-data (defaults to tables)", cmds: &[Train] },
    Key { name: "checkpoint", default: None, help: "model checkpoint to read", cmds: &[Eval, Audit, DumpBeams] },
    Key { name: "out", default: None, help: "output directory", cmds: &[Train, Synth] },
    Key { name: "lexicon", default: None, help: "lexicon file (token<TAB>keyword); built-in pairs when unset", cmds: SEARCH },
    Key { name: "algo", default: Some("maver"), help: "update spec: mml, merit:<beta>, reinforce, offpg, mmr, maver, mix:<w>,<q>", cmds: &[Train] },
    Key { name: "lr", default: Some("0.1"), help: "learning rate", cmds: &[Train] },
    Key { name: "epochs", default: Some("30"), help: "training epochs", cmds: &[Train] },
    Key { name: "seed", default: Some("1"), help: "random seed (synth default 7)", cmds: &[Train, Synth] },
    Key { name: "dev-fraction", default: Some("0.2"), help: "share of sequences held out for model selection", cmds: &[Train] },
    Key { name: "refit", default: Some("off"), help: "retrain on train+dev for the best epoch count", cmds: &[Train] },
    Key { name: "clip", default: Some("none"), help: "max L2 norm of a per-example update, or none", cmds: &[Train] },
    Key { name: "softening", default: Some("5"), help: "reward multiplier of the exploration distribution", cmds: &[Train] },
    Key { name: "beam-size", default: Some("32"), help: "beam size", cmds: SEARCH },
    Key { name: "max-actions", default: Some("6"), help: "maximum actions per program", cmds: SEARCH },
    Key { name: "max-conditions", default: Some("2"), help: "maximum conditions per program", cmds: SEARCH },
    Key { name: "lambda", default: Some("inf"), help: "reward weight of the search ranking: inf or a number >= 0", cmds: SEARCH },
    Key { name: "shaping", default: Some("off"), help: "policy shaping of the training search", cmds: &[Train, DumpBeams] },
    Key { name: "eta", default: Some("5"), help: "critique confidence", cmds: SEARCH },
    Key { name: "model-shaping", default: Some("off"), help: "add eta*critique to the model score (ablation)", cmds: SEARCH },
    Key { name: "parallelism", default: Some("auto"), help: "auto or sequential", cmds: &[Train, Eval, Audit, Synth, DumpBeams] },
    Key { name: "audit-sample", default: Some("100"), help: "examples sampled by the spurious audit", cmds: &[Train, Audit] },
    Key { name: "audit-trials", default: Some("10"), help: "row permutations tried per audited program", cmds: &[Train, Audit] },
    Key { name: "audit-seed", default: Some("0"), help: "seed of the audit sample", cmds: &[Train, Audit] },
    Key { name: "predictions", default: None, help: "write per-example predictions as JSON lines", cmds: &[Eval] },
    Key { name: "dump-beams", default: None, help: "write the final beam of every example as JSON lines", cmds: &[Eval] },
    Key { name: "beams-out", default: None, help: "output file for the beam dump (stdout when unset)", cmds: &[DumpBeams] },
    Key { name: "sequences", default: Some("50"), help: "number of question sequences", cmds: &[Synth] },
    Key { name: "min-rows", default: Some("5"), help: "minimum table rows", cmds: &[Synth] },
    Key { name: "max-rows", default: Some("7"), help: "maximum table rows", cmds: &[Synth] },
    Key { name: "planted-rate", default: Some("0.5"), help: "chance a superlative's row is moved to the table edge", cmds: &[Synth] },
];

pub fn key(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

fn default_for(cmd: Cmd, k: &Key) -> Option<&'static str> {
    match (cmd, k.name) {
        (Synth, "seed") => Some("7"),
        _ => k.default,
    }
}

/// Parses `key = value` lines. `#` starts a comment line.
pub fn parse_file(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = || format!("{}:{}", path.display(), i + 1);
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}: expected key = value", at()))?;
        let k = k.trim().replace('_', "-");
        if key(&k).is_none() {
            bail!("{}: unknown key {k:?}", at());
        }
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            bail!("{}: duplicate key {k:?}", at());
        }
    }
    Ok(out)
}

/// The resolved settings of one command.
#[derive(Debug, Clone)]
pub struct Settings {
    pub cmd: Cmd,
    values: BTreeMap<&'static str, Option<String>>,
}

impl Settings {
    pub fn resolve(cmd: Cmd, file: Option<&Path>, flags: &BTreeMap<String, String>) -> Result<Settings> {
        let from_file = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                parse_file(&text, p)?
            }
            None => BTreeMap::new(),
        };
        let mut values = BTreeMap::new();
        for k in KEYS.iter().filter(|k| k.cmds.contains(&cmd)) {
            let v = flags
                .get(k.name)
                .or_else(|| from_file.get(k.name))
                .cloned()
                .or_else(|| default_for(cmd, k).map(String::from));
            values.insert(k.name, v);
        }
        Ok(Settings { cmd, values })
    }

    pub fn raw(&self, name: &str) -> Option<&str> {
        match self.values.get(name) {
            Some(v) => v.as_deref(),
            None => panic!("key {name} is not used by {}", self.cmd.name()),
        }
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.raw(name).map(PathBuf::from)
    }

    pub fn required_path(&self, name: &str) -> Result<PathBuf> {
        self.path(name)
            .ok_or_else(|| anyhow!("{}: missing required setting {name} (flag --{name})", self.cmd.name()))
    }

    pub fn parse<T: std::str::FromStr>(&self, name: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(name).ok_or_else(|| anyhow!("missing setting {name}"))?;
        raw.parse::<T>().map_err(|e| anyhow!("bad value for {name}: {raw:?} ({e})"))
    }

    pub fn flag(&self, name: &str) -> Result<bool> {
        match self.raw(name) {
            Some("on" | "true" | "yes" | "1") => Ok(true),
            Some("off" | "false" | "no" | "0") => Ok(false),
            other => bail!("bad value for {name}: {other:?} (expected on or off)"),
        }
    }

    pub fn optional_f64(&self, name: &str) -> Result<Option<f64>> {
        match self.raw(name) {
            None | Some("none") => Ok(None),
            Some(_) => self.parse(name).map(Some),
        }
    }

    /// Every setting as `key = value`; unset optional keys are commented out.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            if let Some(v) = self.values.get(k.name) {
                match v {
                    Some(v) => writeln!(out, "{} = {v}", k.name),
                    None => writeln!(out, "# {} =", k.name),
                }
                .unwrap();
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        self.values
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone().map_or(serde_json::Value::Null, serde_json::Value::String)))
            .collect::<serde_json::Map<_, _>>()
            .into()
    }
}
