use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use otsm::channel::{sample_channel, CirTable};
use otsm::config::{parse_config, parse_config_str, RunConfig};
use otsm::dump::Dump;
use otsm::effective::{build_ds_matrices, linear_part};
use otsm::error::{OtsmError, Result};
use otsm::framing::FrameGeometry;
use otsm::harness::{run_bound_sweep, run_scenario_sweep, run_sweep, write_ber_csv, write_bound_csv, SweepRecord};
use otsm::impairments::{draw_realization, HwiScenario};
use otsm::verify::{run_verify, Fault};

#[derive(Parser)]
#[command(name = "otsm", version, about = "OTSM link simulator and bound calculator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sim.snr_db_grid=10,20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Master seed; overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte-Carlo BER over the SNR grid.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Run the one-impairment-at-a-time sweep from `[sweep]` instead.
        #[arg(long)]
        sweep: bool,
    },
    /// Analytical PEP and union-bound curves.
    Bound {
        #[command(flatten)]
        common: Common,
    },
    /// Structural self-checks on a small geometry.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Also write the effective operators of one draw to this directory.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FaultArg::None, hide = true)]
        fault: FaultArg,
    },
    /// Show impairment presets.
    Scenario {
        /// List every preset.
        #[arg(long)]
        list: bool,
        id: Option<u32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    None,
    CorruptWht,
}

fn load(c: &Common) -> Result<RunConfig> {
    let mut rc = match &c.config {
        Some(p) => parse_config(p, &c.overrides)?,
        None => parse_config_str("", &c.overrides)?,
    };
    if let Some(s) = c.seed {
        rc.sim.master_seed = s;
    }
    Ok(rc)
}

fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(p)?);
            f(&mut file)?;
            file.flush()?;
            Ok(())
        }
        None => f(&mut std::io::stdout().lock()),
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("OTSM_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| OtsmError::config("OTSM_THREADS", format!("`{v}` is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| OtsmError::config("OTSM_THREADS", e.to_string()))?;
    }
    Ok(())
}

fn describe(id: u32, s: &HwiScenario) -> String {
    format!(
        "{id}: iqi {:.1} dB / {:.1} deg, dco tx {:.1} dB rx {:.1} dB, pn var {:.1}, pa ({}, {}), cfo {:.0} kHz, sto window [{}, {}]",
        s.tx_iqi.gain_db,
        s.tx_iqi.phase_deg,
        s.tx_dco_db,
        s.rx_dco_db,
        s.tx_pn_var,
        s.pa.depth,
        s.pa.order,
        s.cfo_hz / 1e3,
        s.sto.i1,
        s.sto.i2
    )
}

fn dump_operators(rc: &RunConfig, dir: &Path) -> Result<()> {
    let cfg = &rc.sim;
    let g = cfg.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    let sc = linear_part(&cfg.scenario);
    let taps = sample_channel(&cfg.effective_profile(), &g, cfg.speed_kph, cfg.carrier_hz, &mut rng)?;
    let re = draw_realization(&sc, &g, &mut rng)?;
    let ops = build_ds_matrices(&CirTable::new(&taps, &g), &sc, &re, &g)?;
    Dump::from_matrix("h_ds", &ops.h_ds).write(dir)?;
    Dump::from_matrix("h_conj", &ops.h_conj).write(dir)?;
    Dump::from_matrix("g", &ops.g).write(dir)?;
    Dump::from_matrix("g_dt", &ops.g_dt).write(dir)?;
    Dump::from_vector("dc_tx", ops.dc_tx_vec.as_slice()).write(dir)?;
    Dump::from_vector("dc_rx", ops.dc_rx_vec.as_slice()).write(dir)?;
    eprintln!("operators written to {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Simulate { common, sweep } => {
            let rc = load(&common)?;
            init_threads()?;
            let cfg = &rc.sim;
            eprintln!("master seed {}", cfg.master_seed);
            let rows = if sweep {
                run_scenario_sweep(cfg, &rc.sweep)?
            } else {
                run_sweep(cfg)?
                    .into_iter()
                    .map(|record| SweepRecord {
                        scenario: cfg.scenario_label(),
                        impairment: "none".into(),
                        record,
                    })
                    .collect()
            };
            with_output(common.out.as_deref(), |w| write_ber_csv(w, &rows, cfg.master_seed))?;
            Ok(true)
        }
        Cmd::Bound { common } => {
            let rc = load(&common)?;
            init_threads()?;
            eprintln!("master seed {}", rc.sim.master_seed);
            let rows = run_bound_sweep(&rc.sim, &rc.bound)?;
            with_output(common.out.as_deref(), |w| write_bound_csv(w, &rows))?;
            Ok(true)
        }
        Cmd::Verify { common, dump, fault } => {
            let mut rc = load(&common)?;
            if !rc.geometry_given {
                let g = rc.sim.geometry;
                rc.sim.geometry = FrameGeometry::new(8, 8, 1, g.bandwidth() / 8.0, g.qam_order)?;
            }
            eprintln!("master seed {}", rc.sim.master_seed);
            let fault = match fault {
                FaultArg::None => Fault::None,
                FaultArg::CorruptWht => Fault::CorruptWht,
            };
            let report = run_verify(&rc.sim, &rc.verify, fault)?;
            with_output(common.out.as_deref(), |w| Ok(write!(w, "{report}")?))?;
            if let Some(dir) = dump {
                dump_operators(&rc, &dir)?;
            }
            Ok(report.all_passed())
        }
        Cmd::Scenario { list, id } => {
            match (list, id) {
                (_, Some(i)) => println!("{}", describe(i, &HwiScenario::preset(i)?)),
                (true, None) => {
                    for (i, s) in (0..).map_while(|i| HwiScenario::preset(i).ok().map(|s| (i, s))) {
                        println!("{}", describe(i, &s));
                    }
                }
                (false, None) => return Err(OtsmError::config("scenario", "give a preset id or --list")),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
