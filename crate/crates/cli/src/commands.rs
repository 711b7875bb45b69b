use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cpdg::closedform::{phase_classify, transmission_prob, transmission_time_tail, EdgeLaw};
use cpdg::engine::SimCaps;
use cpdg::experiments::{path_transmission, star_graph, star_survival, survival_replicas, GraphSpec, SurvivalEstimate};
use cpdg::graph::{GraphView, OffspringDistribution, VertexId};
use cpdg::lyapunov::check_conditions;
use cpdg::oracle::{build_exact, extinction_stats, transient_prob};
use cpdg::seed::combine;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;
use crate::Failure;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where a command writes, and the provenance stamped on every artifact.
pub struct Output {
    dir: Option<PathBuf>,
    meta: Vec<(&'static str, Value)>,
    stdout: Vec<String>,
}

impl Output {
    pub fn new(dir: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<Self, Failure> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| Failure::io(d, e))?;
        }
        Ok(Self {
            dir,
            meta: vec![
                ("config_hash", json!(cfg.hash())),
                ("seed", json!(cfg.seed)),
                ("version", json!(VERSION)),
            ],
            stdout: Vec::new(),
        })
    }

    fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        self.stdout.push(format!("{key}={value}"));
    }

    fn stamp(&self, record: &impl Serialize) -> Map<String, Value> {
        let mut m: Map<String, Value> = self.meta.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        match serde_json::to_value(record).expect("records serialize") {
            Value::Object(fields) => m.extend(fields),
            other => {
                m.insert("value".into(), other);
            }
        }
        m
    }

    fn file(&self, name: &str) -> Result<Option<(PathBuf, BufWriter<File>)>, Failure> {
        let Some(dir) = &self.dir else { return Ok(None) };
        let path = dir.join(name);
        let f = File::create(&path).map_err(|e| Failure::io(&path, e))?;
        Ok(Some((path, BufWriter::new(f))))
    }

    /// One JSON object per line, keys sorted, provenance fields included.
    fn ndjson<T: Serialize>(&self, name: &str, records: &[T]) -> Result<(), Failure> {
        let Some((path, mut w)) = self.file(name)? else { return Ok(()) };
        for r in records {
            serde_json::to_writer(&mut w, &self.stamp(r)).map_err(|e| Failure::io(&path, e.into()))?;
            w.write_all(b"\n").map_err(|e| Failure::io(&path, e))?;
        }
        w.flush().map_err(|e| Failure::io(&path, e))
    }

    /// A CSV whose header is the flattened, sorted keys of the first row.
    fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), Failure> {
        let Some((path, w)) = self.file(name)? else { return Ok(()) };
        let mut out = csv::Writer::from_writer(w);
        let flat: Vec<Vec<(String, String)>> = rows.iter().map(|r| flatten(&Value::Object(self.stamp(r)))).collect();
        let err = |e: csv::Error| Failure::io(&path, e.into());
        if let Some(first) = flat.first() {
            out.write_record(first.iter().map(|(k, _)| k.as_str())).map_err(err)?;
        }
        for row in &flat {
            out.write_record(row.iter().map(|(_, v)| v.as_str())).map_err(err)?;
        }
        out.flush().map_err(|e| Failure::io(&path, e))
    }

    pub fn finish(self) -> Result<String, Failure> {
        let mut text = self.stdout.join("\n");
        text.push('\n');
        if let Some((path, mut w)) = self.file("summary.txt")? {
            w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| Failure::io(&path, e))?;
        }
        Ok(text)
    }
}

/// Leaf values of a JSON object keyed by dotted paths; arrays are indexed.
fn flatten(v: &Value) -> Vec<(String, String)> {
    fn go(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, x)| go(&join(k), x, out)),
            Value::Array(xs) => xs.iter().enumerate().for_each(|(i, x)| go(&join(&i.to_string()), x, out)),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            Value::Null => out.push((prefix.to_string(), String::new())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    go("", v, &mut out);
    out
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, Failure> {
    s.as_ref().ok_or_else(|| Failure::config(vec![format!("{name}: section missing from the configuration")]))
}

pub fn simulate(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), Failure> {
    let s = section(&cfg.simulate, "simulate")?;
    let spec = s.graph.to_spec()?;
    let kernel = s.kernel.build()?;
    let caps = SimCaps { horizon: s.horizon, max_infected: s.max_infected };
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for (unit, lambda) in s.lambda.values().into_iter().enumerate() {
        let recs = survival_replicas(&spec, &kernel, s.variant, lambda, caps, s.replicas, combine(cfg.seed, unit as u64))?;
        let est = SurvivalEstimate::from_records(lambda, s.horizon, &recs);
        out.line(&format!("survival[{lambda}]"), est.survival);
        out.line(&format!("wilson[{lambda}]"), format!("{},{}", est.wilson_interval.0, est.wilson_interval.1));
        records.extend(recs.into_iter().enumerate().map(|(i, r)| json!({"lambda": lambda, "replica": i, "record": r})));
        summaries.push(est);
    }
    out.ndjson("records.ndjson", &records)?;
    out.csv("summary.csv", &summaries)
}

pub fn star(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), Failure> {
    let s = section(&cfg.star, "star")?;
    let kernel = s.kernel.build()?;
    let dist = Arc::new(OffspringDistribution::new(s.law.clone())?);
    let caps = s.horizon.map(SimCaps::horizon);
    let report = star_survival(&s.ns, s.l, s.lambda, &kernel, dist, caps, s.replicas, cfg.seed)?;
    for sum in &report.summaries {
        let n = sum.constants.n;
        out.line(&format!("stable_fraction[{n}]"), sum.stable_fraction);
        out.line(&format!("stable_lower_bound[{n}]"), sum.stable_lower_bound);
        if caps.is_some() {
            out.line(&format!("median_extinction_time[{n}]"), sum.median_extinction_time);
        }
    }
    if let Some((slope, intercept, r2)) = report.scaling {
        out.line("scaling_fit", format!("{slope},{intercept},{r2}"));
    }
    out.ndjson("records.ndjson", &report.records)?;
    out.csv("summary.csv", &report.summaries)
}

pub fn path(cfg: &ExperimentConfig, out: &mut Output) -> Result<bool, Failure> {
    let s = section(&cfg.path, "path")?;
    let kernel = s.kernel.build()?;
    let longest = *s.rs.iter().max().expect("validated non-empty");
    let degrees = vec![s.degree; longest as usize + 1];
    let report = path_transmission(&s.rs, &degrees, s.lambda, &kernel, s.background, s.replicas, cfg.seed)?;
    for row in &report.rows {
        out.line(&format!("empirical[{}]", row.r), row.empirical);
        out.line(&format!("lower_bound[{}]", row.r), row.lower_bound);
    }
    let ok = report.rows.iter().all(|r| r.bound_ok);
    out.line("bound_ok", ok);
    out.csv("summary.csv", &report.rows)?;
    Ok(ok)
}

pub fn phase(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), Failure> {
    let s = section(&cfg.phase, "phase")?;
    let v = phase_classify(s.alpha, s.sigma, s.eta, s.tail, s.zero_offspring);
    out.line("regime", v.regime);
    out.line("lambda2_finite", v.lambda2_finite);
    out.line("rule", v.rule);
    out.csv("summary.csv", &[v])
}

pub fn edge_law(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), Failure> {
    let s = section(&cfg.edge_law, "edge-law")?;
    let q = transmission_prob(s.lambda, s.v, s.p);
    let law = EdgeLaw::new(s.lambda, s.v, s.p);
    out.line("transmission_prob", q);
    out.line("rate_fast", law.a);
    out.line("rate_slow", law.b);
    let mut rows = vec![json!({"t": Value::Null, "transmission_prob": q, "tail": Value::Null})];
    for &t in &s.tail_times {
        let tail = transmission_time_tail(&law, t);
        out.line(&format!("tail[{t}]"), tail);
        rows.push(json!({"t": t, "transmission_prob": q, "tail": tail}));
    }
    out.csv("summary.csv", &rows)
}

pub fn oracle(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), Failure> {
    let s = section(&cfg.oracle, "oracle")?;
    let graph = s.graph.finite()?;
    let kernel = s.kernel.build()?;
    let model = build_exact(&graph, &kernel, s.lambda)?;
    let init: Vec<VertexId> = s.init.iter().map(|&v| VertexId(v)).collect();
    let law = model.initial_law(&init)?;
    let alive = transient_prob(&model, &law, s.t, |m, st| !m.is_extinct(st))?;
    let stats = extinction_stats(&model, &law)?;
    out.line("states", model.num_states());
    out.line("survival_at_t", alive);
    out.line("extinction_prob", stats.extinction_prob);
    out.line("mean_extinction_time", stats.mean_time);
    out.csv(
        "summary.csv",
        &[json!({
            "t": s.t,
            "states": model.num_states(),
            "survival_at_t": alive,
            "extinction_prob": stats.extinction_prob,
            "mean_extinction_time": stats.mean_time,
        })],
    )
}

/// Ok(true) when lambda lies below the admissible threshold.
pub fn check(cfg: &ExperimentConfig, out: &mut Output) -> Result<bool, Failure> {
    let s = section(&cfg.check, "check")?;
    let kernel = s.kernel.build()?;
    let graph = match s.graph.to_spec()? {
        GraphSpec::Finite { .. } => s.graph.finite()?,
        GraphSpec::Bgw { law, caps } => {
            let mut g = GraphView::grow_bgw(Arc::new(OffspringDistribution::new(law)?), cfg.seed, caps);
            // A truncated ball still gives a report, flagged incomplete.
            let _ = g.expand_ball(s.ball_depth);
            g
        }
        GraphSpec::Star { law, n, l } => star_graph(Arc::new(OffspringDistribution::new(law)?), n, l, cfg.seed)?,
    };
    let rep = check_conditions(&graph, &kernel, &s.weight, s.lambda)?;
    out.line("k", rep.k);
    out.line("v_min", rep.v_min);
    out.line("lambda", rep.lambda);
    out.line("theta", rep.theta);
    out.line("lambda_star", rep.lambda_star);
    out.line("complete", rep.complete);
    out.line("checked_depth", rep.checked_depth);
    let ok = rep.theta < 0.0;
    out.line("conditions_hold", ok);
    out.csv("summary.csv", &[rep])?;
    Ok(ok)
}

pub fn artifact_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> Option<PathBuf> {
    flag.map(Path::to_path_buf).or_else(|| cfg.output.clone())
}
