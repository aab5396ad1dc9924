use std::collections::BTreeMap;

use anyhow::Result;
use meshfl::netsim::{estimate_p_succ, sweep_seed, NetSimConfig};
use meshfl::protocol::ExperimentConfig;
use serde::Deserialize;
use serde_json::Value;

use super::{netsim, train};
use crate::output::{load_json, num, Output};
use crate::{Globals, UsageError};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    no_svg: bool,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Target {
    #[default]
    Train,
    Netsim,
}

/// A config template expanded over the Cartesian product of `grid`, whose
/// keys are dotted paths into the template.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SweepFile {
    #[serde(default)]
    command: Target,
    template: Value,
    #[serde(default)]
    grid: BTreeMap<String, Vec<Value>>,
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| UsageError(format!("grid key {path:?}: {part:?} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Grid points in odometer order over the sorted keys; no keys means no
/// points.
fn expand(grid: &BTreeMap<String, Vec<Value>>) -> Vec<Vec<(&str, &Value)>> {
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Vec::new();
    }
    let keys: Vec<(&String, &Vec<Value>)> = grid.iter().collect();
    let mut points = vec![Vec::new()];
    for (k, vals) in keys {
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((k.as_str(), v));
                    q
                })
            })
            .collect();
    }
    points
}

pub fn run(g: &Globals, args: Args) -> Result<()> {
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| UsageError("sweep needs --config <sweep.json>".into()))?;
    let file: SweepFile = load_json(path)?;
    let master = g
        .seed
        .or_else(|| file.template.get("seed").and_then(Value::as_u64))
        .unwrap_or(0);
    let points = expand(&file.grid);
    let keys: Vec<&String> = file.grid.keys().collect();

    // Parse every point before running any of them.
    let mut prepared = Vec::with_capacity(points.len());
    for (i, point) in points.iter().enumerate() {
        let mut v = file.template.clone();
        for (k, val) in point {
            set_path(&mut v, k, (*val).clone())?;
        }
        set_path(&mut v, "seed", Value::from(sweep_seed(master, i)))?;
        prepared.push(v);
    }

    let mut out = Output::create(&g.out)?;
    if prepared.is_empty() {
        return out.finish(Some(path), master);
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    match file.command {
        Target::Train => {
            let cfgs: Vec<ExperimentConfig> = prepared
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let mut c: ExperimentConfig = serde_json::from_value(v)
                        .map_err(|e| UsageError(format!("sweep point {i}: {e}")))?;
                    train::resolve_paths(&mut c, Some(path));
                    c.validate()?;
                    Ok(c)
                })
                .collect::<Result<_>>()?;
            for (i, cfg) in cfgs.into_iter().enumerate() {
                let label = format!("point-{i:03}");
                out.set_prefix(&label)?;
                let seed = cfg.seed;
                let s = train::execute(cfg, &mut out, !args.no_svg, &label)?;
                let mut row = vec![i.to_string(), seed.to_string()];
                row.extend(points[i].iter().map(|(_, v)| v.to_string()));
                row.extend([
                    num(s.final_accuracy),
                    num(s.final_loss),
                    s.epochs_to_threshold.map_or_else(String::new, |e| e.to_string()),
                    s.rounds_run.to_string(),
                ]);
                rows.push(row);
            }
            out.set_prefix("")?;
            write_table(&mut out, &keys, &["final_accuracy", "final_loss", "epochs_to_threshold", "rounds_run"], &rows)?;
        }
        Target::Netsim => {
            let cfgs: Vec<NetSimConfig> = prepared
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let c: NetSimConfig = serde_json::from_value(v)
                        .map_err(|e| UsageError(format!("sweep point {i}: {e}")))?;
                    c.validate()?;
                    Ok(c)
                })
                .collect::<Result<_>>()?;
            for (i, cfg) in cfgs.iter().enumerate() {
                let label = format!("point-{i:03}");
                out.set_prefix(&label)?;
                let r = estimate_p_succ(cfg)?;
                netsim::write(&mut out, std::slice::from_ref(cfg), std::slice::from_ref(&r), !args.no_svg)?;
                let mut row = vec![i.to_string(), cfg.seed.to_string()];
                row.extend(points[i].iter().map(|(_, v)| v.to_string()));
                let mean = r.points.iter().filter_map(|p| p.p_hat).sum::<f64>() / r.points.len() as f64;
                row.push(format!("{mean}"));
                rows.push(row);
            }
            out.set_prefix("")?;
            write_table(&mut out, &keys, &["mean_p_hat"], &rows)?;
        }
    }
    out.finish(Some(path), master)
}

fn write_table(out: &mut Output, keys: &[&String], tail: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = out.csv("sweep.csv")?;
    let mut header = vec!["point".to_string(), "seed".to_string()];
    header.extend(keys.iter().map(|k| k.to_string()));
    header.extend(tail.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn grid_expansion_is_odometer_over_sorted_keys() {
        let mut grid = BTreeMap::new();
        grid.insert("b".to_string(), vec![json!(1), json!(2)]);
        grid.insert("a.x".to_string(), vec![json!("p"), json!("q"), json!("r")]);
        let pts = expand(&grid);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![("a.x", &json!("p")), ("b", &json!(1))]);
        assert_eq!(pts[1], vec![("a.x", &json!("p")), ("b", &json!(2))]);
        assert!(expand(&BTreeMap::new()).is_empty());
    }

    #[test]
    fn dotted_paths_create_objects() {
        let mut v = json!({"rule": {"kind": "fedavg"}});
        set_path(&mut v, "rule.kind", json!("krum")).unwrap();
        set_path(&mut v, "train.learningRate", json!(0.1)).unwrap();
        assert_eq!(v, json!({"rule": {"kind": "krum"}, "train": {"learningRate": 0.1}}));
        assert!(set_path(&mut json!({"a": 1}), "a.b", json!(2)).is_err());
    }
}
