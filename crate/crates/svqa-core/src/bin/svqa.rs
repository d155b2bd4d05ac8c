//! Command line front end: `svqa <command> [--config FILE] [--key value]...`
//!
//! Flags share names with config file keys; later sources win (defaults,
//! then file, then flags). Every command echoes the resolved configuration
//! before running so logs are self-describing.

use svqa_core::config::Config;
use svqa_core::error::Result;
use svqa_core::pipeline;

const USAGE: &str = "\
usage: svqa <command> [--config FILE] [--key value]...

commands:
  gen-data    render the synthetic dataset into data_dir
  train       train on the train manifest, write a checkpoint
  eval        score a checkpoint over the test manifest
  predict     answer --question about --clip_dir
  ablate      sweep lambda_grid from one shared initialization
  gradcheck   verify every tape op against numeric gradients
  help        print this text

Any config key works as a flag, e.g. --epochs 5 --data_dir tmp/data.
";

fn parse_args(args: &[String]) -> std::result::Result<(String, Config), String> {
    let Some(command) = args.first() else {
        return Err("missing command".into());
    };
    let mut file = None;
    let mut overrides = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let key = args[i]
            .strip_prefix("--")
            .ok_or_else(|| format!("expected a --flag, got {:?}", args[i]))?;
        let value = args
            .get(i + 1)
            .ok_or_else(|| format!("--{key} needs a value"))?;
        if key == "config" {
            file = Some(value.clone());
        } else {
            overrides.push((key.to_string(), value.clone()));
        }
        i += 2;
    }

    let mut cfg = Config::default();
    if let Some(path) = file {
        cfg.apply_file(std::path::Path::new(&path))
            .map_err(|e| e.to_string())?;
    }
    for (k, v) in &overrides {
        cfg.apply(k, v).map_err(|e| e.to_string())?;
    }
    Ok((command.clone(), cfg))
}

fn run(command: &str, cfg: &Config) -> Result<String> {
    match command {
        "gen-data" => pipeline::cmd_gen_data(cfg),
        "train" => pipeline::cmd_train(cfg, |s| {
            if (s.epoch + 1) % 10 == 0 || s.epoch == 0 {
                println!("epoch {:>4}  loss {:.4}", s.epoch + 1, s.mean_loss);
            }
        }),
        "eval" => pipeline::cmd_eval(cfg),
        "predict" => pipeline::cmd_predict(cfg),
        "ablate" => pipeline::cmd_ablate(cfg, |line| println!("{line}")),
        "gradcheck" => pipeline::cmd_gradcheck(cfg),
        other => Err(svqa_core::Error::Config(format!(
            "unknown command {other:?}; try svqa help"
        ))),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.first().map(String::as_str) == Some("help") || args.is_empty() {
        print!("{USAGE}");
        std::process::exit(if args.is_empty() { 2 } else { 0 });
    }
    let (command, cfg) = match parse_args(&args) {
        Ok(x) => x,
        Err(msg) => {
            eprintln!("svqa: {msg}");
            eprint!("{USAGE}");
            std::process::exit(2);
        }
    };
    println!("# resolved configuration\n{}", cfg.to_text());
    match run(&command, &cfg) {
        Ok(summary) => print!("{summary}"),
        Err(e) => {
            eprintln!("svqa {command}: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
