use super::{ComparisonReport, FitReport, Family, FitParams, Verdict};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// JSON keys of a row, in order.
pub const ROW_KEYS: [&str; 9] = ["dist", "gamma", "p", "xmin", "mu", "sigma", "loglik_p", "LR", "n"];

/// Header of the rendered table.
pub const TABLE_COLUMNS: [&str; 9] = ["dist", "gamma(pl)", "p(pl)", "xmin", "mu", "sigma", "p(ln)", "LR", "n"];

/// One row of the fit table, serialized with exactly the keys of [`ROW_KEYS`].
///
/// `p` is the bootstrap p-value of the fitted family (the power-law when both
/// were fitted), `loglik_p` the significance of the likelihood-ratio sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub dist: String,
    pub gamma: Option<f64>,
    pub p: Option<f64>,
    pub xmin: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub loglik_p: Option<f64>,
    #[serde(rename = "LR")]
    pub lr: Option<f64>,
    pub n: Option<u64>,
}

impl Table3Row {
    pub fn from_fit(fit: &FitReport) -> Self {
        let (gamma, mu, sigma) = match fit.params {
            FitParams::PowerLaw { gamma, .. } => (Some(gamma), None, None),
            FitParams::Lognormal { mu, sigma } => (None, Some(mu), Some(sigma)),
        };
        Self {
            dist: fit.family.to_string(),
            gamma,
            p: fit.p_value,
            xmin: fit.xmin,
            mu,
            sigma,
            loglik_p: None,
            lr: None,
            n: Some(fit.n_total as u64),
        }
    }

    /// Row for a two-family comparison; `p` is the power-law bootstrap p-value if computed.
    pub fn from_comparison(c: &ComparisonReport) -> Self {
        let pl = c.powerlaw.as_ref();
        let ln = c.lognormal.as_ref();
        Self {
            dist: "both".into(),
            gamma: pl.and_then(|f| f.gamma()),
            p: pl.and_then(|f| f.p_value),
            xmin: c.xmin,
            mu: ln.and_then(|f| f.lognormal_params()).map(|p| p.0),
            sigma: ln.and_then(|f| f.lognormal_params()).map(|p| p.1),
            loglik_p: Some(c.p_value),
            lr: Some(c.lr),
            n: pl.or(ln).map(|f| f.n_total as u64),
        }
    }

    /// Parses a row, rejecting objects whose key set differs from [`ROW_KEYS`].
    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Format("row is not a JSON object".into()))?;
        let mut missing: Vec<&str> = ROW_KEYS.iter().copied().filter(|k| !obj.contains_key(*k)).collect();
        let extra: Vec<&String> = obj.keys().filter(|k| !ROW_KEYS.contains(&k.as_str())).collect();
        if !missing.is_empty() || !extra.is_empty() {
            missing.sort_unstable();
            return Err(Error::Format(format!("schema mismatch: missing {missing:?}, unexpected {extra:?}")));
        }
        let row: Self = serde_json::from_value(v).map_err(|e| Error::Format(e.to_string()))?;
        if !matches!(row.dist.as_str(), "powerlaw" | "lognormal" | "both") {
            return Err(Error::Format(format!("unknown dist {:?}", row.dist)));
        }
        Ok(row)
    }

    /// Likelihood-ratio verdict at the given threshold, if the row carries one.
    pub fn verdict(&self, threshold: f64) -> Option<Verdict> {
        let (lr, p) = (self.lr?, self.loglik_p?);
        Some(if p < threshold && lr > 0.0 {
            Verdict::PowerLaw
        } else if p < threshold && lr < 0.0 {
            Verdict::Lognormal
        } else {
            Verdict::Undecided
        })
    }

    /// Table cells in [`TABLE_COLUMNS`] order.
    pub fn cells(&self, threshold: f64) -> [String; 9] {
        let fixed = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        let is_ln = self.dist == Family::Lognormal.to_string();
        let (p_pl, p_ln) = if is_ln {
            (None, self.loglik_p.or(self.p))
        } else {
            (self.p, self.loglik_p)
        };
        let lr = match (self.lr, self.verdict(threshold)) {
            (Some(lr), Some(v)) => format!("{lr:.2} ({v})"),
            (Some(lr), None) => format!("{lr:.2}"),
            _ => "-".into(),
        };
        [
            self.dist.clone(),
            fixed(self.gamma),
            fixed(p_pl),
            self.xmin.map_or("-".into(), |x| if x.fract() == 0.0 { format!("{x}") } else { format!("{x:.2}") }),
            fixed(self.mu),
            fixed(self.sigma),
            fixed(p_ln),
            lr,
            self.n.map_or("-".into(), |n| n.to_string()),
        ]
    }
}

/// Markdown table, one line per row in input order.
pub fn render_markdown(rows: &[Table3Row], threshold: f64) -> String {
    let mut out = format!("| {} |\n", TABLE_COLUMNS.join(" | "));
    out.push_str(&format!("|{}\n", "---|".repeat(TABLE_COLUMNS.len())));
    for r in rows {
        out.push_str(&format!("| {} |\n", r.cells(threshold).join(" | ")));
    }
    out
}

/// CSV table with the same columns.
pub fn render_csv(rows: &[Table3Row], threshold: f64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE_COLUMNS).map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        w.write_record(r.cells(threshold)).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

impl Default for Table3Row {
    fn default() -> Self {
        Self {
            dist: Family::PowerLaw.to_string(),
            gamma: None,
            p: None,
            xmin: None,
            mu: None,
            sigma: None,
            loglik_p: None,
            lr: None,
            n: None,
        }
    }
}
