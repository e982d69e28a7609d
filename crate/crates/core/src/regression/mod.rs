//! Count-data regression: design construction, Poisson and
//! negative-binomial fitting, likelihood-ratio model selection, and
//! incidence-rate-ratio reporting.

mod glm;
mod select;
pub mod special;

use chrono::{DateTime, NaiveDate, Utc};
use nalgebra::DMatrix;

use crate::{Error, Result};

pub use glm::{fit_negbin, fit_poisson};
pub use select::{backward_eliminate, lr_test, EliminationStep};
pub use special::chi_square_upper_tail;

/// Distribution family of a fitted count model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Poisson,
    NegativeBinomial,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::NegativeBinomial => "negative_binomial",
        }
    }
}

/// One observation of the regression data set.
///
/// `party` and `is_reshare` are 0/1 indicators (1 = REP, 1 = reshare),
/// `time_of_day` is fractional hours since UTC midnight, `message_length`
/// is the character count of the post text, and `offset_log` is the log of
/// the exposure (follower count times message age).
#[derive(Debug, Clone)]
pub struct CovariateRow {
    pub post_id: String,
    pub party: f64,
    pub episodicity: f64,
    pub thematicity: f64,
    pub is_reshare: f64,
    pub time_of_day: f64,
    pub message_length: f64,
    pub sqrt_proximity: f64,
    pub offset_log: f64,
    pub y: u64,
}

/// The covariates a model term can reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariate {
    Party,
    Episodicity,
    Thematicity,
    IsReshare,
    TimeOfDay,
    MessageLength,
    SqrtProximity,
}

impl Covariate {
    pub fn name(self) -> &'static str {
        match self {
            Covariate::Party => "party",
            Covariate::Episodicity => "episodicity",
            Covariate::Thematicity => "thematicity",
            Covariate::IsReshare => "is_reshare",
            Covariate::TimeOfDay => "time_of_day",
            Covariate::MessageLength => "message_length",
            Covariate::SqrtProximity => "sqrt_proximity",
        }
    }

    fn value(self, row: &CovariateRow) -> f64 {
        match self {
            Covariate::Party => row.party,
            Covariate::Episodicity => row.episodicity,
            Covariate::Thematicity => row.thematicity,
            Covariate::IsReshare => row.is_reshare,
            Covariate::TimeOfDay => row.time_of_day,
            Covariate::MessageLength => row.message_length,
            Covariate::SqrtProximity => row.sqrt_proximity,
        }
    }
}

/// A model term: either a main effect or a pairwise interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Main(Covariate),
    Interaction(Covariate, Covariate),
}

impl Term {
    pub fn name(&self) -> String {
        match self {
            Term::Main(c) => c.name().to_string(),
            Term::Interaction(a, b) => format!("{}:{}", a.name(), b.name()),
        }
    }

    fn value(&self, row: &CovariateRow) -> f64 {
        match self {
            Term::Main(c) => c.value(row),
            Term::Interaction(a, b) => a.value(row) * b.value(row),
        }
    }

    pub fn is_interaction(&self) -> bool {
        matches!(self, Term::Interaction(..))
    }
}

/// Ordered term list defining a model formula.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub intercept: bool,
    pub terms: Vec<Term>,
    pub offset: bool,
}

impl ModelSpec {
    pub fn new(terms: Vec<Term>) -> Self {
        ModelSpec {
            intercept: true,
            terms,
            offset: true,
        }
    }

    /// The starting model of the analysis: all main effects, every
    /// party interaction except party with sqrt-proximity, and the two
    /// aspect-by-proximity interactions.
    pub fn full_interaction_model() -> Self {
        use Covariate::*;
        let mut terms: Vec<Term> = [
            Party,
            Episodicity,
            Thematicity,
            IsReshare,
            TimeOfDay,
            MessageLength,
            SqrtProximity,
        ]
        .into_iter()
        .map(Term::Main)
        .collect();
        for c in [Episodicity, Thematicity, IsReshare, TimeOfDay, MessageLength] {
            terms.push(Term::Interaction(Party, c));
        }
        terms.push(Term::Interaction(Episodicity, SqrtProximity));
        terms.push(Term::Interaction(Thematicity, SqrtProximity));
        ModelSpec::new(terms)
    }

    /// Checks the structural invariants: no duplicate terms, and every
    /// interaction refers to two declared main effects.
    pub fn validate(&self) -> Result<()> {
        let mut seen: Vec<String> = Vec::new();
        for term in &self.terms {
            let name = term.name();
            if seen.contains(&name) {
                return Err(Error::Regression(format!("duplicate term {name}")));
            }
            seen.push(name);
        }
        let mains: Vec<Covariate> = self
            .terms
            .iter()
            .filter_map(|t| match t {
                Term::Main(c) => Some(*c),
                _ => None,
            })
            .collect();
        for term in &self.terms {
            if let Term::Interaction(a, b) = term {
                if !mains.contains(a) || !mains.contains(b) {
                    return Err(Error::Regression(format!(
                        "interaction {} references an undeclared main effect",
                        term.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// A copy of this spec without the given term.
    pub fn without(&self, term: &Term) -> Self {
        ModelSpec {
            intercept: self.intercept,
            terms: self.terms.iter().filter(|t| *t != term).cloned().collect(),
            offset: self.offset,
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.intercept {
            names.push("intercept".to_string());
        }
        names.extend(self.terms.iter().map(|t| t.name()));
        names
    }
}

/// A realized design: response, covariate matrix, offset and column names,
/// all aligned by row.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: Vec<u64>,
    pub offset: Vec<f64>,
    pub names: Vec<String>,
}

/// Builds the design matrix for `spec` over `rows`.
///
/// Columns follow spec order with the intercept first; interaction columns
/// are elementwise products of their parents. Fails on constant
/// non-intercept columns and on rank deficiency.
pub fn build_design(rows: &[CovariateRow], spec: &ModelSpec) -> Result<Design> {
    spec.validate()?;
    if rows.is_empty() {
        return Err(Error::Regression("empty data".into()));
    }
    let names = spec.column_names();
    let n = rows.len();
    let p = names.len();
    let mut x = DMatrix::zeros(n, p);
    let mut col = 0;
    if spec.intercept {
        for i in 0..n {
            x[(i, col)] = 1.0;
        }
        col += 1;
    }
    for term in &spec.terms {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, row) in rows.iter().enumerate() {
            let v = term.value(row);
            lo = lo.min(v);
            hi = hi.max(v);
            x[(i, col)] = v;
        }
        if lo == hi {
            return Err(Error::Regression(format!(
                "degenerate column {}",
                term.name()
            )));
        }
        col += 1;
    }
    let rank_eps = x.amax() * (n.max(p) as f64) * f64::EPSILON;
    if x.clone().rank(rank_eps) < p {
        return Err(Error::Regression("singular design".into()));
    }
    let y = rows.iter().map(|r| r.y).collect();
    let offset = if spec.offset {
        rows.iter().map(|r| r.offset_log).collect()
    } else {
        vec![0.0; n]
    };
    Ok(Design { x, y, offset, names })
}

/// Likelihood-ratio test summary for a nested model pair.
#[derive(Debug, Clone)]
pub struct LrTestResult {
    pub df: u32,
    pub statistic: f64,
    pub p_value: f64,
}

/// A fitted count model.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub family: Family,
    /// Column names, intercept first, aligned with the estimate vectors.
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub log_likelihood: f64,
    /// Negative-binomial dispersion; `None` for Poisson fits.
    pub dispersion: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when negative-binomial fitting drove the dispersion to the
    /// Poisson limit, i.e. no overdispersion was detected.
    pub poisson_limit: bool,
}

/// Square root of the distance in days from `t` to the closest date in
/// `calendar` (dates taken at UTC midnight).
pub fn election_proximity(t: DateTime<Utc>, calendar: &[NaiveDate]) -> Result<f64> {
    if calendar.is_empty() {
        return Err(Error::Regression("empty election calendar".into()));
    }
    let days = calendar
        .iter()
        .map(|d| {
            let midnight = d
                .and_hms_opt(0, 0, 0)
                .expect("midnight is always valid")
                .and_utc();
            let seconds = (t - midnight).num_seconds() as f64;
            (seconds / 86_400.0).abs()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(days.sqrt())
}

/// Log of the exposure, log(followers * age_days), used as the model
/// offset.
pub fn compute_offset(followers: u64, age_days: f64) -> Result<f64> {
    if followers < 1 {
        return Err(Error::Regression("follower count must be >= 1".into()));
    }
    if age_days <= 0.0 {
        return Err(Error::Regression(format!(
            "message age must be positive, got {age_days}"
        )));
    }
    Ok((followers as f64 * age_days).ln())
}

/// Per-term incidence rate ratios, exp(beta), in coefficient order.
pub fn incidence_rate_ratios(fit: &RegressionFit) -> Vec<(String, f64)> {
    fit.terms
        .iter()
        .cloned()
        .zip(fit.coefficients.iter().map(|b| b.exp()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn row(id: &str, party: f64, e: f64, t: f64) -> CovariateRow {
        CovariateRow {
            post_id: id.to_string(),
            party,
            episodicity: e,
            thematicity: t,
            is_reshare: if id.len() % 2 == 0 { 1.0 } else { 0.0 },
            time_of_day: 3.0 + e * 10.0,
            message_length: 30.0 + t * 100.0,
            sqrt_proximity: (1.0 + e + party).sqrt(),
            offset_log: 10.0,
            y: (10.0 * (1.0 + e)) as u64,
        }
    }

    fn sample_rows(n: usize) -> Vec<CovariateRow> {
        (0..n)
            .map(|i| {
                let e = (i % 7) as f64 / 7.0;
                let t = ((i * 3) % 5) as f64 / 5.0;
                row(&format!("p{i}"), (i % 2) as f64, e, t)
            })
            .collect()
    }

    #[test]
    fn full_model_has_thirteen_columns_after_two_drops() {
        let full = ModelSpec::full_interaction_model();
        full.validate().unwrap();
        assert_eq!(full.column_names().len(), 15);
        let reduced = full
            .without(&Term::Interaction(Covariate::Party, Covariate::MessageLength))
            .without(&Term::Interaction(Covariate::Party, Covariate::Thematicity));
        assert_eq!(reduced.column_names().len(), 13);
    }

    #[test]
    fn intercept_only_design_is_a_column_of_ones() {
        let rows = sample_rows(5);
        let spec = ModelSpec::new(vec![]);
        let d = build_design(&rows, &spec).unwrap();
        assert_eq!(d.x.ncols(), 1);
        assert!(d.x.column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn interaction_column_is_product_of_parents() {
        let mut rows = sample_rows(6);
        rows[0].episodicity = 0.5;
        rows[0].sqrt_proximity = 2.0;
        let spec = ModelSpec::new(vec![
            Term::Main(Covariate::Episodicity),
            Term::Main(Covariate::SqrtProximity),
            Term::Interaction(Covariate::Episodicity, Covariate::SqrtProximity),
        ]);
        let d = build_design(&rows, &spec).unwrap();
        assert_eq!(d.x[(0, 3)], 1.0);
        assert_eq!(d.names[3], "episodicity:sqrt_proximity");
    }

    #[test]
    fn constant_column_is_rejected() {
        let mut rows = sample_rows(4);
        for r in &mut rows {
            r.party = 1.0;
        }
        let spec = ModelSpec::new(vec![Term::Main(Covariate::Party)]);
        let err = build_design(&rows, &spec).unwrap_err();
        assert!(err.to_string().contains("degenerate column party"));
    }

    #[test]
    fn collinear_design_is_rejected() {
        let mut rows = sample_rows(8);
        for r in &mut rows {
            r.thematicity = 2.0 * r.episodicity + 1.0;
        }
        let spec = ModelSpec::new(vec![
            Term::Main(Covariate::Episodicity),
            Term::Main(Covariate::Thematicity),
        ]);
        let err = build_design(&rows, &spec).unwrap_err();
        assert!(err.to_string().contains("singular design"));
    }

    #[test]
    fn duplicate_and_undeclared_terms_fail_validation() {
        let dup = ModelSpec::new(vec![
            Term::Main(Covariate::Party),
            Term::Main(Covariate::Party),
        ]);
        assert!(dup.validate().is_err());
        let orphan = ModelSpec::new(vec![
            Term::Main(Covariate::Party),
            Term::Interaction(Covariate::Party, Covariate::Episodicity),
        ]);
        assert!(orphan.validate().is_err());
    }

    #[test]
    fn proximity_examples() {
        let cal = vec![NaiveDate::from_ymd_opt(2014, 11, 4).unwrap()];
        let on_day = Utc.with_ymd_and_hms(2014, 11, 4, 0, 0, 0).unwrap();
        assert_eq!(election_proximity(on_day, &cal).unwrap(), 0.0);

        let four_before = Utc.with_ymd_and_hms(2014, 10, 31, 0, 0, 0).unwrap();
        assert_eq!(election_proximity(four_before, &cal).unwrap(), 2.0);

        // 2014-05-25 is 163 days before 2014-11-04.
        let t = Utc.with_ymd_and_hms(2014, 5, 25, 0, 0, 0).unwrap();
        let got = election_proximity(t, &cal).unwrap();
        assert!((got - 163.0_f64.sqrt()).abs() < 1e-12);
        assert!((got - 12.767).abs() < 1e-3);

        // Closest of several elections wins.
        let cal2 = vec![
            NaiveDate::from_ymd_opt(2013, 11, 5).unwrap(),
            NaiveDate::from_ymd_opt(2014, 11, 4).unwrap(),
        ];
        let near_first = Utc.with_ymd_and_hms(2013, 11, 6, 0, 0, 0).unwrap();
        assert_eq!(election_proximity(near_first, &cal2).unwrap(), 1.0);

        assert!(election_proximity(t, &[]).is_err());
    }

    #[test]
    fn offset_examples() {
        assert!((compute_offset(100_000, 10.0).unwrap() - 1_000_000.0_f64.ln()).abs() < 1e-12);
        assert_eq!(compute_offset(1, 1.0).unwrap(), 0.0);
        assert_eq!(compute_offset(2, 0.5).unwrap(), 0.0);
        assert!(compute_offset(5, 0.0).is_err());
        assert!(compute_offset(5, -1.0).is_err());
        assert!(compute_offset(0, 1.0).is_err());
    }

    #[test]
    fn irr_is_exponentiated_coefficients() {
        let fit = RegressionFit {
            family: Family::NegativeBinomial,
            terms: vec!["intercept".into(), "party".into(), "is_reshare".into()],
            coefficients: vec![0.0, -0.142, 1.526],
            standard_errors: vec![0.1; 3],
            z_values: vec![0.0; 3],
            p_values: vec![1.0; 3],
            log_likelihood: -10.0,
            dispersion: Some(1.5),
            iterations: 5,
            converged: true,
            poisson_limit: false,
        };
        let irr = incidence_rate_ratios(&fit);
        assert_eq!(irr[0].1, 1.0);
        assert!((irr[1].1 - 0.867).abs() < 1e-3);
        assert!((irr[2].1 - 4.599).abs() < 1e-3);
    }
}
