mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{Cmd, Settings, KEYS};

fn cli() -> Command {
    let mut root = Command::new("spfd")
        .about("Weakly supervised semantic parsing over tables")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for cmd in Cmd::ALL {
        let mut sub = Command::new(cmd.name())
            .about(cmd.about())
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .help("key = value settings, overridden by flags"),
            )
            .arg(
                Arg::new("print-config")
                    .long("print-config")
                    .action(ArgAction::SetTrue)
                    .help("print the resolved configuration and exit"),
            );
        for k in KEYS.iter().filter(|k| k.cmds.contains(&cmd)) {
            let help = match k.default {
                Some(d) => format!("{} [default: {d}]", k.help),
                None => k.help.to_string(),
            };
            sub = sub.arg(Arg::new(k.name).long(k.name).value_name("VALUE").help(help));
        }
        root = root.subcommand(sub);
    }
    root
}

fn settings(cmd: Cmd, m: &ArgMatches) -> anyhow::Result<Settings> {
    let flags: BTreeMap<String, String> = KEYS
        .iter()
        .filter(|k| k.cmds.contains(&cmd))
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect();
    let file = m.get_one::<String>("config").map(PathBuf::from);
    Settings::resolve(cmd, file.as_deref(), &flags)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let cmd = Cmd::from_name(name).expect("registered subcommand");
    let result = settings(cmd, sub).and_then(|s| {
        if sub.get_flag("print-config") {
            print!("{}", s.render());
            return Ok(());
        }
        commands::run(&s)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
