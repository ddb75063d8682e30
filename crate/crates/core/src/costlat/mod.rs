//! Analytical cost and end-of-session latency.
//!
//! Cost sums every call: `input_rate * input_tokens + output_rate *
//! output_tokens`, in USD per million runs. Latency counts only calls made
//! after the last interaction: `ttft * calls + output_tokens / rate`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CostError;
use crate::model::PipelineTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceModel {
    /// USD per million runs per input token.
    pub input_rate: f64,
    /// USD per million runs per output token.
    pub output_rate: f64,
}

impl Default for PriceModel {
    fn default() -> Self {
        Self { input_rate: 0.1, output_rate: 0.4 }
    }
}

impl PriceModel {
    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.input_rate > 0.0 && self.output_rate > 0.0) {
            return Err(CostError::Model("price rates must be positive".into()));
        }
        Ok(())
    }
}

/// How time-to-first-token accrues over sequential end-of-session calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtftMode {
    /// Once per call.
    PerCall,
    /// Once per session regardless of the call count.
    Once,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    /// Seconds.
    pub ttft: f64,
    pub output_tokens_per_second: f64,
    pub ttft_mode: TtftMode,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            ttft: 0.2,
            output_tokens_per_second: 550.0,
            ttft_mode: TtftMode::PerCall,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.ttft >= 0.0) {
            return Err(CostError::Model("ttft must be non-negative".into()));
        }
        if !(self.output_tokens_per_second > 0.0) {
            return Err(CostError::Model("output token rate must be positive".into()));
        }
        Ok(())
    }
}

/// Model parameters as read from a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModels {
    pub price: PriceModel,
    pub latency: LatencyModel,
}

impl CostModels {
    pub fn load(path: &Path) -> Result<Self, CostError> {
        let text = std::fs::read_to_string(path).map_err(|e| CostError::Model(format!("{}: {e}", path.display())))?;
        let m: Self = parse_config(path, &text).map_err(CostError::Model)?;
        m.price.validate()?;
        m.latency.validate()?;
        Ok(m)
    }
}

fn parse_config<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, String> {
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

pub fn price(input_tokens: u64, output_tokens: u64, m: &PriceModel) -> f64 {
    m.input_rate * input_tokens as f64 + m.output_rate * output_tokens as f64
}

/// Latency of a single call producing `output_tokens`.
pub fn latency(output_tokens: u64, m: &LatencyModel) -> f64 {
    session_latency(1, output_tokens, m)
}

/// Latency of `calls` sequential end-of-session calls producing
/// `output_tokens` in total.
pub fn session_latency(calls: u32, output_tokens: u64, m: &LatencyModel) -> f64 {
    let multiplicity = match m.ttft_mode {
        TtftMode::PerCall => calls,
        TtftMode::Once => calls.min(1),
    };
    m.ttft * multiplicity as f64 + output_tokens as f64 / m.output_tokens_per_second
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostLatencyEstimate {
    pub total_input_tokens: u64,
    pub total_output_tokens: u64,
    pub price_per_million_runs_usd: f64,
    pub end_of_session_calls: u32,
    pub end_of_session_output_tokens: u64,
    pub end_of_session_latency_s: f64,
}

/// Prices every call of a trace and times only its end-of-session calls.
pub fn estimate_trace(trace: &PipelineTrace, pm: &PriceModel, lm: &LatencyModel) -> Result<CostLatencyEstimate, CostError> {
    if trace.calls.is_empty() {
        return Err(CostError::EmptyTrace);
    }
    let missing: Vec<String> = trace
        .calls
        .iter()
        .enumerate()
        .filter(|(_, c)| c.input_tokens.is_none() || c.output_tokens.is_none())
        .map(|(i, c)| match c.step_index {
            Some(s) => format!("{} call {i} ({:?}, step {s})", trace.trajectory_id, c.role),
            None => format!("{} call {i} ({:?})", trace.trajectory_id, c.role),
        })
        .collect();
    if !missing.is_empty() {
        return Err(CostError::MissingTokens(missing));
    }
    let total_input_tokens = trace.calls.iter().filter_map(|c| c.input_tokens).sum();
    let total_output_tokens = trace.calls.iter().filter_map(|c| c.output_tokens).sum();
    let eos: Vec<_> = trace.calls.iter().filter(|c| c.end_of_session).collect();
    let end_of_session_output_tokens = eos.iter().filter_map(|c| c.output_tokens).sum();
    let end_of_session_calls = eos.len() as u32;
    Ok(CostLatencyEstimate {
        total_input_tokens,
        total_output_tokens,
        price_per_million_runs_usd: price(total_input_tokens, total_output_tokens, pm),
        end_of_session_calls,
        end_of_session_output_tokens,
        end_of_session_latency_s: session_latency(end_of_session_calls, end_of_session_output_tokens, lm),
    })
}

/// One row of a hypothetical pipeline shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeRow {
    pub name: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(default = "one")]
    pub end_of_session_calls: u32,
    /// Defaults to `output_tokens`.
    #[serde(default)]
    pub end_of_session_output_tokens: Option<u64>,
    /// Published price to compare against, if any.
    #[serde(default)]
    pub reported_price: Option<f64>,
    #[serde(default)]
    pub reported_latency: Option<f64>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    #[serde(rename = "method", default)]
    pub methods: Vec<ShapeRow>,
}

impl ShapeSpec {
    pub fn parse(path: &Path, text: &str) -> Result<Self, CostError> {
        let spec: Self = parse_config(path, text).map_err(CostError::Shape)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, CostError> {
        let text = std::fs::read_to_string(path).map_err(|e| CostError::Shape(format!("{}: {e}", path.display())))?;
        Self::parse(path, &text)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.methods.is_empty() {
            return Err(CostError::Shape("no [[method]] rows".into()));
        }
        for r in &self.methods {
            if r.name.trim().is_empty() {
                return Err(CostError::Shape("row with an empty name".into()));
            }
            if r.end_of_session_output_tokens.is_some_and(|t| t > r.output_tokens) {
                return Err(CostError::Shape(format!("{}: end-of-session tokens exceed output tokens", r.name)));
            }
        }
        Ok(())
    }

    /// Token columns of the published comparison. The end-of-session
    /// splits of the two decomposed rows are not published; the values
    /// here are the ones that reproduce the published latencies under the
    /// per-call ttft reading.
    pub fn reference() -> Self {
        let row = |name: &str, i, o, calls, eos, p, l| ShapeRow {
            name: name.into(),
            input_tokens: i,
            output_tokens: o,
            end_of_session_calls: calls,
            end_of_session_output_tokens: eos,
            reported_price: Some(p),
            reported_latency: Some(l),
        };
        Self {
            methods: vec![
                row("E2E", 1839, 20, 1, None, 191.9, 0.24),
                row("CoT", 1961, 127, 1, None, 246.9, 0.43),
                row("Decomposed FT", 2103, 622, 2, Some(110), 600.0, 0.6),
                row("Decomposed FT (latency-optimized)", 2009, 514, 1, Some(20), 406.5, 0.24),
            ],
        }
    }
}

/// Published prices are given to one decimal place.
pub const PRICE_TOLERANCE: f64 = 0.05;
/// Published latencies are given to two decimal places.
pub const LATENCY_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub name: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub price_per_million_runs_usd: f64,
    pub end_of_session_calls: u32,
    pub end_of_session_output_tokens: u64,
    pub end_of_session_latency_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_latency: Option<f64>,
}

impl CostRow {
    pub fn price_mismatch(&self) -> bool {
        self.reported_price.is_some_and(|p| (p - self.price_per_million_runs_usd).abs() > PRICE_TOLERANCE)
    }

    pub fn latency_mismatch(&self) -> bool {
        self.reported_latency.is_some_and(|l| (l - self.end_of_session_latency_s).abs() > LATENCY_TOLERANCE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub price_model: PriceModel,
    pub latency_model: LatencyModel,
    pub rows: Vec<CostRow>,
    pub notes: Vec<String>,
}

impl CostTable {
    fn finish(price_model: PriceModel, latency_model: LatencyModel, rows: Vec<CostRow>) -> Self {
        let mut notes = Vec::new();
        for r in &rows {
            if r.price_mismatch() {
                notes.push(format!(
                    "{}: reported price {} differs from {}*{} + {}*{} = {:.1}; the formula value is shown",
                    r.name,
                    r.reported_price.unwrap_or_default(),
                    price_model.input_rate,
                    r.input_tokens,
                    price_model.output_rate,
                    r.output_tokens,
                    r.price_per_million_runs_usd
                ));
            }
            if r.latency_mismatch() {
                notes.push(format!(
                    "{}: reported latency {} differs from the modelled {:.3} s",
                    r.name,
                    r.reported_latency.unwrap_or_default(),
                    r.end_of_session_latency_s
                ));
            }
        }
        Self { price_model, latency_model, rows, notes }
    }

    pub fn from_shape(spec: &ShapeSpec, pm: &PriceModel, lm: &LatencyModel) -> Result<Self, CostError> {
        spec.validate()?;
        pm.validate()?;
        lm.validate()?;
        let rows = spec
            .methods
            .iter()
            .map(|r| {
                let eos = r.end_of_session_output_tokens.unwrap_or(r.output_tokens);
                CostRow {
                    name: r.name.clone(),
                    input_tokens: r.input_tokens,
                    output_tokens: r.output_tokens,
                    price_per_million_runs_usd: price(r.input_tokens, r.output_tokens, pm),
                    end_of_session_calls: r.end_of_session_calls,
                    end_of_session_output_tokens: eos,
                    end_of_session_latency_s: session_latency(r.end_of_session_calls, eos, lm),
                    reported_price: r.reported_price,
                    reported_latency: r.reported_latency,
                }
            })
            .collect();
        Ok(Self::finish(*pm, *lm, rows))
    }

    /// One row per method, averaging token counts over that method's
    /// traces. Traces that fail to estimate are returned separately.
    pub fn from_traces(traces: &[PipelineTrace], pm: &PriceModel, lm: &LatencyModel) -> Result<(Self, Vec<(String, CostError)>), CostError> {
        pm.validate()?;
        lm.validate()?;
        let mut groups: Vec<(crate::model::Method, Vec<CostLatencyEstimate>)> = Vec::new();
        let mut failures = Vec::new();
        for t in traces {
            match estimate_trace(t, pm, lm) {
                Ok(e) => match groups.iter_mut().find(|(m, _)| *m == t.method) {
                    Some((_, v)) => v.push(e),
                    None => groups.push((t.method, vec![e])),
                },
                Err(err) => failures.push((t.trajectory_id.clone(), err)),
            }
        }
        groups.sort_by_key(|(m, _)| crate::model::Method::ALL.iter().position(|x| x == m));
        let rows = groups
            .into_iter()
            .map(|(method, ests)| {
                let n = ests.len() as f64;
                let mean = |f: &dyn Fn(&CostLatencyEstimate) -> f64| ests.iter().map(f).sum::<f64>() / n;
                let mean_tokens = |f: &dyn Fn(&CostLatencyEstimate) -> u64| (ests.iter().map(f).sum::<u64>() as f64 / n).round() as u64;
                CostRow {
                    name: format!("{method} (n={})", ests.len()),
                    input_tokens: mean_tokens(&|e| e.total_input_tokens),
                    output_tokens: mean_tokens(&|e| e.total_output_tokens),
                    price_per_million_runs_usd: mean(&|e| e.price_per_million_runs_usd),
                    end_of_session_calls: ests.iter().map(|e| e.end_of_session_calls).max().unwrap_or(0),
                    end_of_session_output_tokens: mean_tokens(&|e| e.end_of_session_output_tokens),
                    end_of_session_latency_s: mean(&|e| e.end_of_session_latency_s),
                    reported_price: None,
                    reported_latency: None,
                }
            })
            .collect();
        Ok((Self::finish(*pm, *lm, rows), failures))
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<36} {:>8} {:>8} {:>12} {:>10} {:>10}",
            "method", "input", "output", "price/1M $", "eos calls", "latency s"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<36} {:>8} {:>8} {:>12.1} {:>10} {:>10.3}",
                r.name, r.input_tokens, r.output_tokens, r.price_per_million_runs_usd, r.end_of_session_calls, r.end_of_session_latency_s
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}
