use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cv2x_mode4::analysis::{reallocation_probability, tbc_ccdf, tbc_distribution_with, TbeForm};
use cv2x_mode4::config::RunConfig;
use cv2x_mode4::metrics::write_hidden_node_csv;
use cv2x_mode4::sim::{run_hidden_node, run_scenario, summary_text, sweep, write_outputs, write_sweep};
use cv2x_mode4::Error;

#[derive(Parser)]
#[command(version, about = "LTE-V2X Mode 4 sidelink simulator and hold-time analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its metric files.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one simulation per value of a config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hold-time distribution and change probability of the counter process.
    Analyze {
        #[arg(long, default_value_t = 5)]
        n_min: u32,
        #[arg(long, default_value_t = 15)]
        n_max: u32,
        #[arg(long, default_value_t = 0.4)]
        p_keep: f64,
        #[arg(long, default_value_t = 1000)]
        t_sense_ms: u32,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        beacon_period_ms: u32,
        #[arg(long, value_enum, default_value_t = Form::Uniform)]
        tbe_form: Form,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Hidden-node probability from mobility and channel alone.
    HiddenNode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Form {
    Uniform,
    OneOverN,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Parse { .. } | Error::Input(_) => 3,
        _ => 2,
    }
}

fn load(config: &Path) -> Result<RunConfig, Error> {
    RunConfig::load(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let res = run_scenario(&cfg)?;
            write_outputs(&res, &cfg.output_dir)?;
            print!("{}", summary_text(&res));
        }
        Command::Sweep { config, param, values, out } => {
            let mut cfg = load(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let results = sweep(&cfg, &param, &values)?;
            write_sweep(&results, &param, &cfg.output_dir)?;
            for (v, r) in &results {
                println!("{param}={v}: pooled_prr={}", r.prr.pooled().map_or_else(|| "none".into(), |p| format!("{p:.6}")));
            }
        }
        Command::Analyze {
            n_min,
            n_max,
            p_keep,
            t_sense_ms,
            eps,
            beacon_period_ms,
            tbe_form,
            out,
        } => {
            if beacon_period_ms == 0 || t_sense_ms % beacon_period_ms != 0 || t_sense_ms == 0 {
                return Err(Error::Config(format!(
                    "t_sense_ms = {t_sense_ms} must be a positive multiple of the {beacon_period_ms} ms beacon period"
                )));
            }
            let form = match tbe_form {
                Form::Uniform => TbeForm::Uniform,
                Form::OneOverN => TbeForm::OneOverN,
            };
            let dist = tbc_distribution_with(n_min, n_max, p_keep, eps, form)?;
            let pr = reallocation_probability(&dist, t_sense_ms / beacon_period_ms)?;
            fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            let mut csv = String::from("periods,seconds,ccdf\n");
            for (n, c) in tbc_ccdf(&dist).iter().enumerate() {
                let _ = writeln!(csv, "{n},{:.3},{c:.9}", n as f64 * f64::from(beacon_period_ms) / 1000.0);
            }
            let path = out.join("tbc_ccdf.csv");
            fs::write(&path, csv).map_err(|e| Error::Io { path, source: e })?;
            println!("P_r: {pr:.6}");
            println!("truncated_mass: {:.3e}", dist.truncated_mass);
        }
        Command::HiddenNode { config, out } => {
            let cfg = load(&config)?;
            let acc = run_hidden_node(&cfg)?;
            let dir = out.unwrap_or(cfg.output_dir.clone());
            fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            write_hidden_node_csv(&dir.join("hidden_node.csv"), &acc.bins())?;
            println!(
                "hidden_node_probability: {}",
                acc.mean_probability().map_or_else(|| "none (no interfered pairs)".into(), |p| format!("{p:.6}"))
            );
            println!("snapshots: {}", acc.snapshots());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invoke(args: &[&str]) -> Result<(), Error> {
        let argv = std::iter::once("cv2x-mode4").chain(args.iter().copied());
        run(Cli::try_parse_from(argv).expect("arguments parse"))
    }

    #[test]
    fn analyze_writes_ccdf() {
        let dir = tempfile::tempdir().unwrap();
        invoke(&["analyze", "--n-min", "5", "--n-max", "15", "--p-keep", "0", "--out", dir.path().to_str().unwrap()]).unwrap();
        let csv = fs::read_to_string(dir.path().join("tbc_ccdf.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("periods,seconds,ccdf"));
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
        assert_eq!(rows[0][2], 1.0);
        // no keeping: every hold ends by n_max
        assert_eq!(rows.last().unwrap()[0], 15.0);
        assert!(rows.windows(2).all(|w| w[1][2] <= w[0][2]));
    }

    #[test]
    fn bad_inputs_map_to_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.toml");
        let e = invoke(&["simulate", "--config", missing.to_str().unwrap()]).unwrap_err();
        assert_eq!(exit_code(&e), 3);

        let e = invoke(&["analyze", "--t-sense-ms", "150"]).unwrap_err();
        assert_eq!(exit_code(&e), 2);

        let cfg = dir.path().join("bad.toml");
        fs::write(&cfg, "vehicels = 10\n").unwrap();
        let e = invoke(&["simulate", "--config", cfg.to_str().unwrap()]).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("vehicels"));

        assert!(Cli::try_parse_from(["cv2x-mode4", "analyze", "--tbe-form", "triangle"]).is_err());
    }

    #[test]
    fn simulate_writes_metric_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(&cfg, "vehicles = 40\nlength_m = 1000.0\nduration_s = 3.0\nwarmup_s = 1.0\nhidden_node_snapshots = 1\n").unwrap();
        let out = dir.path().join("out");
        invoke(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).unwrap();
        for f in ["prr_by_distance.csv", "ud_percentiles.csv", "hidden_node.csv", "hold_times.csv", "summary.txt", "config.toml"] {
            assert!(out.join(f).exists(), "{f}");
        }
        let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
        assert!(summary.contains("half_duplex_violations: 0"));
        assert!(summary.contains("config.vehicles: 40"));
        // the echoed config loads back
        RunConfig::load(&out.join("config.toml")).unwrap();
    }

    #[test]
    fn sweep_writes_one_directory_per_value() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(&cfg, "vehicles = 30\nlength_m = 1000.0\nduration_s = 2.0\nwarmup_s = 0.5\n").unwrap();
        let out = dir.path().join("sw");
        invoke(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "p_keep", "--values", "0,0.8", "--out", out.to_str().unwrap()])
            .unwrap();
        assert!(out.join("p_keep=0/prr_by_distance.csv").exists());
        assert!(out.join("p_keep=0.8/prr_by_distance.csv").exists());
        let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
        assert_eq!(table.lines().count(), 3);

        let e = invoke(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "no_such_key", "--values", "1"]).unwrap_err();
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn hidden_node_command_writes_curve() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("hn.toml");
        fs::write(&cfg, "vehicles = 60\nlength_m = 1000.0\nhidden_node_snapshots = 2\n").unwrap();
        invoke(&["hidden-node", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).unwrap();
        let csv = fs::read_to_string(dir.path().join("hidden_node.csv")).unwrap();
        assert!(csv.starts_with("d_bin_m,probability,pairs\n"));
        assert!(csv.lines().count() > 10);
    }
}
