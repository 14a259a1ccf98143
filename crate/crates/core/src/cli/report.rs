use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

/// A named time series, e.g. the compensation delay as it changes.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub unit: String,
    pub points: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: String,
    pub parameters: Vec<(String, String)>,
    pub metrics: Vec<Metric>,
    pub series: Vec<Series>,
    /// Free-form text shown after the metrics (traceroute output).
    pub body: Option<String>,
    pub trace_path: Option<PathBuf>,
    pub config_digest: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Tsv,
}

impl Report {
    pub fn new(experiment: impl Into<String>) -> Self {
        Report {
            experiment: experiment.into(),
            parameters: Vec::new(),
            metrics: Vec::new(),
            series: Vec::new(),
            body: None,
            trace_path: None,
            config_digest: None,
        }
    }

    pub fn param(&mut self, name: impl Into<String>, value: impl ToString) -> &mut Self {
        self.parameters.push((name.into(), value.to_string()));
        self
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64, unit: impl Into<String>) -> &mut Self {
        self.metrics.push(Metric {
            name: name.into(),
            value,
            unit: unit.into(),
        });
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.render_text(),
            Format::Tsv => self.render_tsv(),
        }
    }

    fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment: {}", self.experiment);
        if let Some(d) = &self.config_digest {
            let _ = writeln!(out, "config: sha256:{d}");
        }
        for (k, v) in &self.parameters {
            let _ = writeln!(out, "  {k} = {v}");
        }
        let width = self.metrics.iter().map(|m| m.name.len()).max().unwrap_or(0);
        for m in &self.metrics {
            let _ = writeln!(out, "{:<width$}  {:>14}  {}", m.name, format_value(m.value), m.unit);
        }
        for s in &self.series {
            let _ = writeln!(out, "{} ({}):", s.name, s.unit);
            for (t, v) in &s.points {
                let _ = writeln!(out, "  t={:.3}s  {}", *t as f64 / 1e9, format_value(*v));
            }
        }
        if let Some(b) = &self.body {
            out.push_str(b);
        }
        if let Some(p) = &self.trace_path {
            let _ = writeln!(out, "trace: {}", p.display());
        }
        out
    }

    fn render_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment\t{}", self.experiment);
        if let Some(d) = &self.config_digest {
            let _ = writeln!(out, "config_sha256\t{d}");
        }
        for (k, v) in &self.parameters {
            let _ = writeln!(out, "param\t{k}\t{v}");
        }
        for m in &self.metrics {
            let _ = writeln!(out, "metric\t{}\t{}\t{}", m.name, m.value, m.unit);
        }
        for s in &self.series {
            for (t, v) in &s.points {
                let _ = writeln!(out, "series\t{}\t{t}\t{v}\t{}", s.name, s.unit);
            }
        }
        if let Some(p) = &self.trace_path {
            let _ = writeln!(out, "trace\t{}", p.display());
        }
        out
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.4}")
    }
}
