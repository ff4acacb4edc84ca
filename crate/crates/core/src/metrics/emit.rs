//! Result rows, their CSV and JSON forms, and the cross-controller
//! comparison with gnuplot-ready tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compute_repeatability, MetricsError, RunResult};

const UTIL_PREFIX: &str = "util_";

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    pub lead_time_mean_ms: Option<f64>,
    pub throughput_per_hour: f64,
    /// Of the row's scenario and controller over all its seeds, in
    /// percentage points (population standard deviation).
    pub repeatability: Option<f64>,
    pub utilization: BTreeMap<String, f64>,
    pub makespan_ms: u64,
    /// Present when failures are on.
    pub repair_time_ms: Option<u64>,
    pub orders_completed: u32,
}

fn io(e: impl std::fmt::Display) -> MetricsError {
    MetricsError::Io(e.to_string())
}

/// Rows of `results`, sorted by scenario, controller and seed.
pub fn rows(results: &[RunResult]) -> Vec<Row> {
    let mut groups: BTreeMap<(String, String), Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.scenario.to_string(), r.controller.to_string()))
            .or_default()
            .push(r);
    }
    let mut out = Vec::new();
    for ((scenario, controller), runs) in groups {
        let utils: Vec<_> = runs.iter().map(|r| &r.kpis.utilization).collect();
        let repeatability = compute_repeatability(&utils).ok();
        for r in runs {
            out.push(Row {
                scenario: scenario.clone(),
                controller: controller.clone(),
                seed: r.seed,
                lead_time_mean_ms: r.kpis.lead_time_mean,
                throughput_per_hour: r.kpis.throughput,
                repeatability,
                utilization: r.kpis.utilization.clone(),
                makespan_ms: r.kpis.makespan,
                repair_time_ms: r.fms.failure.as_ref().map(|f| f.repair_time),
                orders_completed: r.kpis.orders_completed,
            });
        }
    }
    sort(&mut out);
    out
}

fn sort(rows: &mut [Row]) {
    rows.sort_by(|a, b| (&a.scenario, &a.controller, a.seed).cmp(&(&b.scenario, &b.controller, b.seed)));
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_csv(rows: &[Row], w: impl Write) -> Result<(), MetricsError> {
    let resources: BTreeSet<&String> = rows.iter().flat_map(|r| r.utilization.keys()).collect();
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["scenario", "controller", "seed", "lead_time_mean_ms", "throughput_per_hour", "repeatability"]
        .map(String::from)
        .to_vec();
    header.extend(resources.iter().map(|r| format!("{UTIL_PREFIX}{r}")));
    header.extend(["makespan_ms", "repair_time_ms", "orders_completed"].map(String::from));
    out.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![
            r.scenario.clone(),
            r.controller.clone(),
            r.seed.to_string(),
            opt(r.lead_time_mean_ms),
            r.throughput_per_hour.to_string(),
            opt(r.repeatability),
        ];
        rec.extend(resources.iter().map(|res| opt(r.utilization.get(*res))));
        rec.extend([r.makespan_ms.to_string(), opt(r.repair_time_ms), r.orders_completed.to_string()]);
        out.write_record(&rec).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads what [`write_csv`] wrote.
pub fn read_rows(r: impl Read) -> Result<Vec<Row>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers().map_err(io)?.iter().map(String::from).collect();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(io)?;
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for (h, v) in header.iter().zip(rec.iter()) {
            fields.insert(h, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| MetricsError::Io(format!("column `{k}` missing")));
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, MetricsError>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| MetricsError::Io(format!("column `{k}`: `{v}`: {e}")))
        }
        fn maybe<T: std::str::FromStr>(k: &str, v: &str) -> Result<Option<T>, MetricsError>
        where
            T::Err: std::fmt::Display,
        {
            if v.is_empty() {
                Ok(None)
            } else {
                num(k, v).map(Some)
            }
        }
        let mut utilization = BTreeMap::new();
        for (h, v) in &fields {
            if let Some(res) = h.strip_prefix(UTIL_PREFIX) {
                if let Some(u) = maybe::<f64>(h, v)? {
                    utilization.insert(res.to_string(), u);
                }
            }
        }
        out.push(Row {
            scenario: get("scenario")?.to_string(),
            controller: get("controller")?.to_string(),
            seed: num("seed", get("seed")?)?,
            lead_time_mean_ms: maybe("lead_time_mean_ms", get("lead_time_mean_ms")?)?,
            throughput_per_hour: num("throughput_per_hour", get("throughput_per_hour")?)?,
            repeatability: maybe("repeatability", get("repeatability")?)?,
            utilization,
            makespan_ms: num("makespan_ms", get("makespan_ms")?)?,
            repair_time_ms: maybe("repair_time_ms", get("repair_time_ms")?)?,
            orders_completed: num("orders_completed", get("orders_completed")?)?,
        });
    }
    Ok(out)
}

pub fn write_json(rows: &[Row], mut w: impl Write) -> Result<(), MetricsError> {
    serde_json::to_writer_pretty(&mut w, rows).map_err(io)?;
    writeln!(w).map_err(io)
}

/// One of the directional checks between controllers or scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub claim: String,
    /// `None` when the rows needed are missing.
    pub holds: Option<bool>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default)]
struct Means {
    lead: f64,
    throughput: f64,
}

fn means(rows: &[Row]) -> BTreeMap<(String, String), Means> {
    let mut acc: BTreeMap<(String, String), (f64, f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.scenario.clone(), r.controller.clone())).or_default();
        e.0 += r.lead_time_mean_ms.unwrap_or(f64::NAN);
        e.1 += r.throughput_per_hour;
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(k, (l, t, n))| {
            (
                k,
                Means {
                    lead: l / n as f64,
                    throughput: t / n as f64,
                },
            )
        })
        .collect()
}

/// Checks the directional claims over `rows`: agents beat the conventional
/// controller in each scenario, and failures make each controller worse.
pub fn verdicts(rows: &[Row]) -> Vec<Verdict> {
    let m = means(rows);
    let get = |s: &str, c: &str| m.get(&(s.to_string(), c.to_string())).copied();
    let mut out = Vec::new();
    for s in ["A", "B"] {
        let (a, c) = (get(s, "agents"), get(s, "conventional"));
        out.push(match (a, c) {
            (Some(a), Some(c)) => Verdict {
                claim: format!("scenario {s}: agents no worse than conventional"),
                holds: Some(a.lead <= c.lead && a.throughput >= c.throughput),
                detail: format!(
                    "lead time {:.0} vs {:.0} ms, throughput {:.2} vs {:.2} /h",
                    a.lead, c.lead, a.throughput, c.throughput
                ),
            },
            _ => Verdict {
                claim: format!("scenario {s}: agents no worse than conventional"),
                holds: None,
                detail: "needs both controllers".into(),
            },
        });
    }
    for c in ["agents", "conventional"] {
        let claim = format!("{c}: failures degrade lead time and throughput");
        out.push(match (get("A", c), get("B", c)) {
            (Some(a), Some(b)) => Verdict {
                claim,
                holds: Some(b.lead > a.lead && b.throughput < a.throughput),
                detail: format!(
                    "lead time {:.0} -> {:.0} ms, throughput {:.2} -> {:.2} /h",
                    a.lead, b.lead, a.throughput, b.throughput
                ),
            },
            _ => Verdict {
                claim,
                holds: None,
                detail: "needs both scenarios".into(),
            },
        });
    }
    out
}

fn dat(rows: &[Row], title: &str, pick: impl Fn(&Means) -> f64) -> String {
    let m = means(rows);
    let mut s = format!("# {title}, mean over seeds\n# scenario agents conventional\n");
    for sc in ["A", "B"] {
        let v = |c: &str| m.get(&(sc.to_string(), c.to_string())).map_or(f64::NAN, &pick);
        let _ = writeln!(s, "{sc} {} {}", v("agents"), v("conventional"));
    }
    s
}

/// Writes `results.csv`, `results.json`, `lead_time.dat` and
/// `throughput.dat` into `dir` and returns the directional verdicts.
pub fn compare_and_emit(rows: &[Row], dir: &Path) -> Result<Vec<Verdict>, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::Invalid("no results to compare".into()));
    }
    let mut rows = rows.to_vec();
    sort(&mut rows);
    std::fs::create_dir_all(dir).map_err(io)?;
    let create = |name: &str| std::fs::File::create(dir.join(name)).map_err(io);
    write_csv(&rows, create("results.csv")?)?;
    write_json(&rows, create("results.json")?)?;
    std::fs::write(dir.join("lead_time.dat"), dat(&rows, "lead time (ms)", |m| m.lead)).map_err(io)?;
    std::fs::write(dir.join("throughput.dat"), dat(&rows, "throughput (orders/h)", |m| m.throughput)).map_err(io)?;
    Ok(verdicts(&rows))
}
