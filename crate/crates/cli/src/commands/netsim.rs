use anyhow::Result;
use meshfl::analysis::p_succ_reference;
use meshfl::channel::db_to_linear;
use meshfl::netsim::{self, NetSimConfig, NetSimResult, SimMode};
use serde::{Deserialize, Serialize};

use crate::chart::{Chart, Series};
use crate::output::{load_json, num, Output};
use crate::Globals;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Monte Carlo rounds per intensity.
    #[arg(long)]
    rounds: Option<u64>,
    /// Intensities to sweep (comma separated).
    #[arg(long = "lambda", value_delimiter = ',')]
    intensities: Vec<f64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<SimMode>,
    /// Designated link length in matched mode.
    #[arg(long)]
    link_distance: Option<f64>,
    /// Skip the SVG chart.
    #[arg(long)]
    no_svg: bool,
}

fn parse_mode(s: &str) -> Result<SimMode, String> {
    match s {
        "procedure" => Ok(SimMode::Procedure),
        "matched" => Ok(SimMode::Matched),
        _ => Err(format!("unknown mode {s:?} (expected procedure or matched)")),
    }
}

/// Config file: one base simulation plus an optional intensity list.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct NetsimFile {
    #[serde(flatten)]
    pub base: NetSimConfig,
    pub intensities: Option<Vec<f64>>,
}

pub fn run(g: &Globals, args: Args) -> Result<()> {
    let mut file: NetsimFile = match &g.config {
        Some(p) => load_json(p)?,
        None => NetsimFile::default(),
    };
    if let Some(r) = args.rounds {
        file.base.rounds = r;
    }
    if let Some(m) = args.mode {
        file.base.mode = m;
    }
    if let Some(d) = args.link_distance {
        file.base.link_distance = d;
    }
    if !args.intensities.is_empty() {
        file.intensities = Some(args.intensities);
    }
    let seed = g.seed.unwrap_or(file.base.seed);
    let lambdas = file.intensities.clone().unwrap_or_else(|| vec![file.base.intensity]);
    let cfgs: Vec<NetSimConfig> = lambdas
        .iter()
        .map(|&l| NetSimConfig {
            intensity: l,
            ..file.base.clone()
        })
        .collect();
    for c in &cfgs {
        c.validate()?;
    }

    let mut out = Output::create(&g.out)?;
    let results: Vec<NetSimResult> = netsim::sweep(seed, &cfgs).into_iter().collect::<meshfl::Result<_>>()?;
    write(&mut out, &cfgs, &results, !args.no_svg)?;
    out.finish(g.config.as_deref(), seed)
}

fn theory(cfg: &NetSimConfig, theta_db: f64) -> Option<f64> {
    p_succ_reference(
        cfg.intensity,
        cfg.mac.tx_prob,
        cfg.link_distance,
        db_to_linear(theta_db),
        cfg.channel.path_loss_exponent,
    )
    .ok()
}

pub fn write(out: &mut Output, cfgs: &[NetSimConfig], results: &[NetSimResult], svg: bool) -> Result<()> {
    let mut w = out.csv("netsim.csv")?;
    w.write_record([
        "intensity",
        "mode",
        "theta_db",
        "rounds",
        "attempts",
        "successes",
        "p_hat",
        "ci_low",
        "ci_high",
        "p_theory",
    ])?;
    for (cfg, r) in cfgs.iter().zip(results) {
        for p in &r.points {
            w.write_record([
                format!("{}", r.intensity),
                r.mode.to_string(),
                format!("{}", p.theta_db),
                r.rounds.to_string(),
                p.attempts.to_string(),
                p.successes.to_string(),
                num(p.p_hat),
                num(p.ci95.map(|c| c.0)),
                num(p.ci95.map(|c| c.1)),
                num(theory(cfg, p.theta_db)),
            ])?;
        }
    }
    w.flush()?;
    out.json("netsim_summary.json", results)?;

    if svg {
        let mut series = Vec::new();
        for (cfg, r) in cfgs.iter().zip(results) {
            series.push(Series {
                name: format!("lambda={} sim", r.intensity),
                points: r
                    .points
                    .iter()
                    .filter_map(|p| p.p_hat.map(|v| (p.theta_db, v)))
                    .collect(),
                dashed: false,
            });
            let th: Vec<(f64, f64)> = r
                .points
                .iter()
                .filter_map(|p| theory(cfg, p.theta_db).map(|v| (p.theta_db, v)))
                .collect();
            if !th.is_empty() {
                series.push(Series {
                    name: format!("lambda={} theory", r.intensity),
                    points: th,
                    dashed: true,
                });
            }
        }
        let chart = Chart {
            title: "Success probability vs SIR threshold".into(),
            x_label: "theta (dB)".into(),
            y_label: "success probability".into(),
            series,
        };
        out.text("netsim.svg", &chart.render())?;
    }
    Ok(())
}
