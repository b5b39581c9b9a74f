//! z-scaling and ordinary least squares for the dependency-length and
//! reading-time models.
//!
//! Random intercepts by dependency type or participant are approximated with
//! fixed indicator columns (one per level, minus a reference level), and
//! p-values use a Student t with `n - k` degrees of freedom. Both choices are
//! recorded in every [`FitResult`].

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::format::sig17;
use crate::pipeline::{DependencyRecord, Region, RelationClass, RtRow};
use crate::{Error, Result};

pub mod synthetic;

pub const INTERCEPT: &str = "(Intercept)";
/// Condition number of the design above which a warning is attached.
pub const CONDITION_WARNING: f64 = 1e8;
/// `|R_jj|` below this fraction of the column norm counts as collinear.
const RANK_TOL: f64 = 1e-10;

/// Centre on the mean and divide by the sample (n - 1) standard deviation.
pub fn z_scale(column: &str, values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Scaling {
            column: column.into(),
            reason: format!("needs at least two values, got {n}"),
        });
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Scaling {
            column: column.into(),
            reason: format!("non-finite value {bad}"),
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    if !(sd > 0.0) || sd <= 1e-14 * mean.abs() {
        return Err(Error::Scaling {
            column: column.into(),
            reason: "zero standard deviation".into(),
        });
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    column_names: Vec<String>,
    values: DMatrix<f64>,
    response: DVector<f64>,
}

impl DesignMatrix {
    /// `columns` are given column-major. One of them must be an intercept
    /// column of ones.
    pub fn new(column_names: Vec<String>, columns: Vec<Vec<f64>>, response: Vec<f64>) -> Result<Self> {
        if columns.is_empty() || columns.len() != column_names.len() {
            return Err(Error::invalid(
                "columns",
                format!("{} names for {} columns", column_names.len(), columns.len()),
            ));
        }
        let n = response.len();
        for (name, c) in column_names.iter().zip(&columns) {
            if c.len() != n {
                return Err(Error::invalid(
                    "columns",
                    format!("column `{name}` has {} rows, response has {n}", c.len()),
                ));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("columns", format!("column `{name}` has missing values")));
            }
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("response", "missing values"));
        }
        if !columns.iter().any(|c| c.iter().all(|&v| v == 1.0)) {
            return Err(Error::invalid("columns", "no intercept column of ones"));
        }
        let values = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Ok(Self {
            column_names,
            values,
            response: DVector::from_vec(response),
        })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_names.iter().position(|c| c == name)?;
        Some(self.values.column(j).iter().copied().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub formula_id: String,
    pub n_obs: usize,
    pub df_residual: usize,
    pub r_squared: f64,
    pub condition_number: f64,
    pub coefficients: Vec<Coefficient>,
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Coefficient table with columns `name, estimate, se, t, p`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "estimate", "se", "t", "p"])?;
        for c in &self.coefficients {
            w.write_record([
                c.name.clone(),
                sig17(c.estimate),
                sig17(c.std_error),
                sig17(c.t_value),
                sig17(c.p_value),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least squares through a Householder QR of the design.
pub fn ols_fit(design: &DesignMatrix, formula_id: &str) -> Result<FitResult> {
    let x = &design.values;
    let y = &design.response;
    let (n, k) = x.shape();
    if n <= k {
        return Err(Error::invalid(
            "design",
            format!("need more rows than columns, got {n} rows and {k} columns"),
        ));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let q = qr.q();

    let collinear: Vec<String> = (0..k)
        .filter(|&j| r[(j, j)].abs() <= RANK_TOL * x.column(j).norm().max(f64::MIN_POSITIVE))
        .map(|j| design.column_names[j].clone())
        .collect();
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }

    let qty = q.transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient { columns: design.column_names.clone() })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::RankDeficient { columns: design.column_names.clone() })?;

    let fitted = x * &beta;
    let resid = y - fitted;
    let rss = resid.norm_squared();
    let y_mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let df = n - k;
    let sigma2 = rss / df as f64;

    let sv = r.singular_values();
    let condition_number = sv.max() / sv.min();
    let mut warnings = Vec::new();
    if condition_number > CONDITION_WARNING {
        warnings.push(format!(
            "design condition number {} exceeds {}",
            sig17(condition_number),
            sig17(CONDITION_WARNING)
        ));
    }

    let t_dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let coefficients = (0..k)
        .map(|j| {
            let se = (sigma2 * r_inv.row(j).norm_squared()).sqrt();
            let est = beta[j];
            let t = if se > 0.0 {
                est / se
            } else if est == 0.0 {
                0.0
            } else {
                est.signum() * f64::INFINITY
            };
            let p = if t.is_infinite() {
                0.0
            } else {
                (2.0 * t_dist.sf(t.abs())).clamp(0.0, 1.0)
            };
            Coefficient {
                name: design.column_names[j].clone(),
                estimate: est,
                std_error: se,
                t_value: t,
                p_value: p,
            }
        })
        .collect();

    Ok(FitResult {
        formula_id: formula_id.to_string(),
        n_obs: n,
        df_residual: df,
        r_squared,
        condition_number,
        coefficients,
        notes: vec![format!("two-sided p-values from Student t with n - k = {df} degrees of freedom")],
        warnings,
        residuals: resid.iter().copied().collect(),
    })
}

// ---------------------------------------------------------------------------
// Model builders

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LengthMeasure {
    /// Word count, `L_O`.
    Orthographic,
    /// Summed intervening surprisal, `L_I`.
    InfoTheoretic,
}

impl LengthMeasure {
    fn label(self) -> &'static str {
        match self {
            LengthMeasure::Orthographic => "L_O",
            LengthMeasure::InfoTheoretic => "L_I",
        }
    }
}

/// Collects raw predictors, z-scales them and assembles the design.
struct Builder {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    notes: Vec<String>,
    n: usize,
}

impl Builder {
    fn new(n: usize) -> Self {
        Self {
            names: vec![INTERCEPT.into()],
            columns: vec![vec![1.0; n]],
            notes: Vec::new(),
            n,
        }
    }

    fn scaled(&mut self, name: &str, raw: &[f64]) -> Result<()> {
        let z = z_scale(name, raw)?;
        self.names.push(name.into());
        self.columns.push(z);
        Ok(())
    }

    /// Optional covariates: all present, or all absent (column omitted with a
    /// note). A partly missing column is an error.
    fn optional(&mut self, name: &str, raw: &[Option<f64>]) -> Result<()> {
        let present = raw.iter().filter(|v| v.is_some()).count();
        if present == 0 {
            self.notes.push(format!("`{name}` unavailable for every row; column omitted"));
            return Ok(());
        }
        if present < raw.len() {
            return Err(Error::Scaling {
                column: name.into(),
                reason: format!("missing in {} of {} rows", raw.len() - present, raw.len()),
            });
        }
        let v: Vec<f64> = raw.iter().map(|x| x.unwrap()).collect();
        self.scaled(name, &v)
    }

    fn product(&mut self, a: &str, b: &str) {
        let ia = self.names.iter().position(|c| c == a).expect("parent column");
        let ib = self.names.iter().position(|c| c == b).expect("parent column");
        let col = self.columns[ia].iter().zip(&self.columns[ib]).map(|(x, y)| x * y).collect();
        self.names.push(format!("{a}:{b}"));
        self.columns.push(col);
    }

    /// Indicator columns for every level but the first (sorted) one.
    fn dummies(&mut self, prefix: &str, levels: &[&str]) {
        let distinct: BTreeSet<&str> = levels.iter().copied().collect();
        let mut it = distinct.iter();
        let Some(reference) = it.next() else { return };
        for level in it {
            self.names.push(format!("{prefix}[{level}]"));
            self.columns.push(levels.iter().map(|l| f64::from(l == level)).collect());
        }
        self.notes.push(format!(
            "{prefix}: {} fixed indicator columns approximate random intercepts (reference level `{reference}`)",
            distinct.len() - 1
        ));
    }

    fn fit(mut self, response_name: &str, response: &[f64], formula_id: String) -> Result<FitResult> {
        debug_assert!(self.columns.iter().all(|c| c.len() == self.n));
        let y = z_scale(response_name, response)?;
        self.notes.push("all variables z-scaled within the analysed subset; indicator columns left as 0/1".into());
        let design = DesignMatrix::new(self.names, self.columns, y)?;
        let mut fit = ols_fit(&design, &formula_id)?;
        fit.notes.extend(self.notes);
        Ok(fit)
    }
}

fn formula(response: &str, names: &[&str], extras: &[&str]) -> String {
    let mut terms = vec!["1".to_string()];
    terms.extend(names.iter().map(|s| s.to_string()));
    let mut s = format!("{response} ~ {}", terms.join(" + "));
    for e in extras {
        s.push_str(&format!(" + {e}"));
    }
    if !extras.is_empty() {
        s.push_str(" (fixed-dummy approximation)");
    }
    s
}

fn subset_label(subset: Option<RelationClass>) -> &'static str {
    match subset {
        None => "all",
        Some(RelationClass::Subject) => "subject",
        Some(RelationClass::Object) => "object",
        Some(RelationClass::Other) => "other",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Study1Options {
    pub length_measure: LengthMeasure,
    pub subset: Option<RelationClass>,
    pub dep_type_dummies: bool,
    /// Drop records whose antecedent frequency is the lexicon fallback.
    pub strict_frequency: bool,
}

impl Default for Study1Options {
    fn default() -> Self {
        Self {
            length_measure: LengthMeasure::InfoTheoretic,
            subset: None,
            dep_type_dummies: false,
            strict_frequency: false,
        }
    }
}

/// Dependency length regressed on the antecedent's surprisal and the control
/// set. Baseline surprisal enters only for `L_I`.
pub fn run_study1_regression(records: &[DependencyRecord], opts: &Study1Options) -> Result<FitResult> {
    let selected: Vec<&DependencyRecord> = records
        .iter()
        .filter(|r| opts.subset.is_none_or(|c| r.relation_class == c))
        .collect();
    let fallback = selected.iter().filter(|r| r.frequency_fallback).count();
    let rows: Vec<&DependencyRecord> = if opts.strict_frequency {
        selected.into_iter().filter(|r| !r.frequency_fallback).collect()
    } else {
        selected
    };
    if rows.is_empty() {
        return Err(Error::EmptySubset(format!(
            "no dependency records in subset `{}`",
            subset_label(opts.subset)
        )));
    }

    let mut b = Builder::new(rows.len());
    let col = |f: fn(&DependencyRecord) -> f64| -> Vec<f64> { rows.iter().map(|r| f(r)).collect() };
    b.optional(
        "sentence_position",
        &rows.iter().map(|r| r.sentence_position.map(|p| p as f64)).collect::<Vec<_>>(),
    )?;
    b.scaled("antecedent_position", &col(|r| r.antecedent_position as f64))?;
    b.scaled("sentence_length", &col(|r| r.sentence_length as f64))?;
    if opts.length_measure == LengthMeasure::InfoTheoretic {
        b.scaled("baseline_surprisal", &col(|r| r.baseline_surprisal_bits))?;
    }
    b.optional(
        "antecedent_frequency",
        &rows.iter().map(|r| r.antecedent_log_frequency).collect::<Vec<_>>(),
    )?;
    b.scaled("antecedent_surprisal", &col(|r| r.antecedent_surprisal_bits))?;
    let fixed: Vec<String> = b.names[1..].to_vec();
    let mut extras = Vec::new();
    if opts.dep_type_dummies {
        let levels: Vec<&str> = rows.iter().map(|r| r.relation.as_str()).collect();
        b.dummies("dep_type", &levels);
        extras.push("dep_type");
    }
    if opts.strict_frequency {
        b.notes.push(format!("strict frequency: dropped {fallback} records with fallback frequency"));
    } else if fallback > 0 {
        b.notes.push(format!("{fallback} records use the fallback antecedent frequency"));
    }
    b.notes.push(format!("subset: {}", subset_label(opts.subset)));

    let response = match opts.length_measure {
        LengthMeasure::Orthographic => col(|r| r.l_o as f64),
        LengthMeasure::InfoTheoretic => col(|r| r.l_i),
    };
    let label = opts.length_measure.label();
    let fixed_refs: Vec<&str> = fixed.iter().map(String::as_str).collect();
    let id = format!("study1: {}", formula(label, &fixed_refs, &extras));
    b.fit(label, &response, id)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Study2Options {
    pub region: Region,
    pub length_measure: LengthMeasure,
    pub subset: Option<RelationClass>,
    pub participant_dummies: bool,
    pub dep_type_dummies: bool,
}

impl Default for Study2Options {
    fn default() -> Self {
        Self {
            region: Region::Critical,
            length_measure: LengthMeasure::InfoTheoretic,
            subset: None,
            participant_dummies: false,
            dep_type_dummies: false,
        }
    }
}

/// Log reading time at the critical or spillover word, with the
/// length-by-antecedent-surprisal interaction.
pub fn run_study2_regression(rows: &[RtRow], opts: &Study2Options) -> Result<FitResult> {
    let rows: Vec<&RtRow> = rows
        .iter()
        .filter(|r| r.region == opts.region && opts.subset.is_none_or(|c| r.relation_class == c))
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptySubset(format!(
            "no {:?} reading-time rows in subset `{}`",
            opts.region,
            subset_label(opts.subset)
        )));
    }
    let mut b = Builder::new(rows.len());
    let col = |f: fn(&RtRow) -> f64| -> Vec<f64> { rows.iter().map(|r| f(r)).collect() };
    let opt = |f: fn(&RtRow) -> Option<f64>| -> Vec<Option<f64>> { rows.iter().map(|r| f(r)).collect() };
    b.optional("sentence_position", &opt(|r| r.sentence_position.map(|p| p as f64)))?;
    b.scaled("antecedent_position", &col(|r| r.antecedent_position as f64))?;
    b.scaled("sentence_length", &col(|r| r.sentence_length as f64))?;
    b.scaled("word_length", &col(|r| r.word_length as f64))?;
    b.optional("antecedent_frequency", &opt(|r| r.antecedent_log_frequency))?;
    b.scaled("surprisal", &col(|r| r.word_surprisal_bits))?;
    b.scaled("surprisal_prev1", &col(|r| r.prev1_surprisal_bits))?;
    b.scaled("surprisal_prev2", &col(|r| r.prev2_surprisal_bits))?;
    b.optional("frequency", &opt(|r| r.word_log_frequency))?;
    b.optional("frequency_prev1", &opt(|r| r.prev1_log_frequency))?;
    b.optional("frequency_prev2", &opt(|r| r.prev2_log_frequency))?;
    let length = match opts.length_measure {
        LengthMeasure::Orthographic => col(|r| r.l_o as f64),
        LengthMeasure::InfoTheoretic => col(|r| r.l_i),
    };
    b.scaled("L", &length)?;
    b.scaled("antecedent_surprisal", &col(|r| r.antecedent_surprisal_bits))?;
    b.product("L", "antecedent_surprisal");
    let fixed: Vec<String> = b.names[1..].to_vec();
    let mut extras = Vec::new();
    if opts.dep_type_dummies {
        let levels: Vec<&str> = rows.iter().map(|r| r.relation.as_str()).collect();
        b.dummies("dep_type", &levels);
        extras.push("dep_type");
    }
    if opts.participant_dummies {
        let levels: Vec<&str> = rows.iter().map(|r| r.participant.as_str()).collect();
        b.dummies("participant", &levels);
        extras.push("participant");
    }
    b.notes.push(format!(
        "region: {:?}; L = {}; subset: {}",
        opts.region,
        opts.length_measure.label(),
        subset_label(opts.subset)
    ));
    let fixed_refs: Vec<&str> = fixed.iter().map(String::as_str).collect();
    let id = format!("study2: {}", formula("log_rt", &fixed_refs, &extras));
    b.fit("log_rt", &col(|r| r.log_rt), id)
}
