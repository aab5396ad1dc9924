use anyhow::Result;
use meshfl::analysis::{alpha_kernel, expected_success_count, p_succ_verbatim, p_succ_reference, ClosedFormInputs};
use meshfl::channel::db_to_linear;
use serde::{Deserialize, Serialize};

use crate::output::{load_json, Output};
use crate::Globals;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    intensity: Option<f64>,
    #[arg(long)]
    tx_prob: Option<f64>,
    #[arg(long)]
    disk_radius: Option<f64>,
    #[arg(long)]
    link_distance: Option<f64>,
    #[arg(long)]
    one_hop_radius: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Thresholds in dB (comma separated).
    #[arg(long = "theta-db", value_delimiter = ',', allow_hyphen_values = true)]
    theta_db: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct AnalyzeFile {
    pub intensity: f64,
    pub tx_prob: f64,
    pub disk_radius: f64,
    pub link_distance: f64,
    pub one_hop_radius: f64,
    pub path_loss_exponent: f64,
    pub theta_grid_db: Vec<f64>,
}

impl Default for AnalyzeFile {
    fn default() -> Self {
        AnalyzeFile {
            intensity: 1e-3,
            tx_prob: 0.3,
            disk_radius: 500.0,
            link_distance: 50.0,
            one_hop_radius: 200.0,
            path_loss_exponent: 4.0,
            theta_grid_db: (-20..=20).map(f64::from).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct Row {
    theta_db: f64,
    theta: f64,
    p_verbatim: f64,
    p_reference: f64,
    /// Mean successful transmitters inside the one-hop disk.
    expected_successes: f64,
}

pub fn run(g: &Globals, args: Args) -> Result<()> {
    let mut f: AnalyzeFile = match &g.config {
        Some(p) => load_json(p)?,
        None => AnalyzeFile::default(),
    };
    macro_rules! over {
        ($($flag:ident => $field:ident),*) => {$(if let Some(v) = args.$flag { f.$field = v; })*};
    }
    over!(intensity => intensity, tx_prob => tx_prob, disk_radius => disk_radius,
          link_distance => link_distance, one_hop_radius => one_hop_radius, alpha => path_loss_exponent);
    if !args.theta_db.is_empty() {
        f.theta_grid_db = args.theta_db;
    }
    alpha_kernel(f.path_loss_exponent)?;

    let mut rows = Vec::new();
    for &db in &f.theta_grid_db {
        let theta = db_to_linear(db);
        let inputs = ClosedFormInputs {
            intensity: f.intensity,
            tx_prob: f.tx_prob,
            disk_radius: f.disk_radius,
            link_distance: f.link_distance,
            theta,
            path_loss_exponent: f.path_loss_exponent,
        };
        let p_verbatim = p_succ_verbatim(&inputs)?;
        let p_reference = p_succ_reference(f.intensity, f.tx_prob, f.link_distance, theta, f.path_loss_exponent)?;
        rows.push(Row {
            theta_db: db,
            theta,
            p_verbatim,
            p_reference,
            expected_successes: expected_success_count(f.intensity * f.tx_prob, p_reference, f.one_hop_radius)?,
        });
    }

    let mut out = Output::create(&g.out)?;
    let mut w = out.csv("analyze.csv")?;
    w.write_record(["theta_db", "theta", "p_verbatim", "p_reference", "expected_successes"])?;
    for r in &rows {
        w.write_record([r.theta_db, r.theta, r.p_verbatim, r.p_reference, r.expected_successes].map(|v| format!("{v}")))?;
    }
    w.flush()?;
    out.json(
        "analyze.json",
        &serde_json::json!({ "inputs": f, "rows": rows }),
    )?;
    out.finish(g.config.as_deref(), g.seed.unwrap_or(0))
}
