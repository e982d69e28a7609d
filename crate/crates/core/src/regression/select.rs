//! Likelihood-ratio testing and backward elimination of interaction terms.

use super::special::chi_square_upper_tail;
use super::{build_design, fit_negbin, fit_poisson, CovariateRow, Family, LrTestResult, ModelSpec, RegressionFit, Term};
use crate::{Error, Result};

/// Likelihood-ratio test of a nested model pair.
///
/// `small` must be nested in `large` (or be the Poisson fit against the
/// negative binomial on identical terms).
pub fn lr_test(small: &RegressionFit, large: &RegressionFit, df: u32) -> Result<LrTestResult> {
    let diff = large.log_likelihood - small.log_likelihood;
    if diff < -1e-6 {
        return Err(Error::Regression(
            "not nested or not converged: larger model has lower likelihood".into(),
        ));
    }
    let statistic = (2.0 * diff).max(0.0);
    Ok(LrTestResult {
        df,
        statistic,
        p_value: chi_square_upper_tail(statistic, df),
    })
}

/// One executed removal during backward elimination.
#[derive(Debug, Clone)]
pub struct EliminationStep {
    pub dropped_term: String,
    pub test: LrTestResult,
}

fn fit_family(rows: &[CovariateRow], spec: &ModelSpec, family: Family) -> Result<RegressionFit> {
    let design = build_design(rows, spec)?;
    match family {
        Family::Poisson => fit_poisson(&design),
        Family::NegativeBinomial => fit_negbin(&design),
    }
}

/// Backward elimination of interaction terms by likelihood-ratio tests.
///
/// Starting from `full_spec`, every remaining interaction is LR-tested
/// (df 1) against the current model; the one with the largest p-value is
/// removed while that p-value exceeds `alpha`. Main effects are never
/// removed. An `alpha` of 1 or more strips every interaction. Returns the
/// final fit together with the ordered removal trail.
pub fn backward_eliminate(
    rows: &[CovariateRow],
    full_spec: &ModelSpec,
    alpha: f64,
    family: Family,
) -> Result<(RegressionFit, Vec<EliminationStep>)> {
    full_spec.validate()?;
    let mut spec = full_spec.clone();
    let mut current = fit_family(rows, &spec, family)?;
    let mut trail = Vec::new();

    loop {
        let removable: Vec<Term> = spec
            .terms
            .iter()
            .filter(|t| t.is_interaction())
            .cloned()
            .collect();
        if removable.is_empty() {
            break;
        }
        let mut weakest: Option<(Term, RegressionFit, LrTestResult)> = None;
        for term in removable {
            let reduced_spec = spec.without(&term);
            let reduced = fit_family(rows, &reduced_spec, family)?;
            let test = lr_test(&reduced, &current, 1)?;
            let better = match &weakest {
                None => true,
                Some((_, _, best)) => test.p_value > best.p_value,
            };
            if better {
                weakest = Some((term, reduced, test));
            }
        }
        let (term, reduced, test) = weakest.expect("removable was non-empty");
        if test.p_value > alpha || alpha >= 1.0 {
            spec = spec.without(&term);
            current = reduced;
            trail.push(EliminationStep {
                dropped_term: term.name(),
                test,
            });
        } else {
            break;
        }
    }
    Ok((current, trail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::Covariate;

    fn fit_with_ll(ll: f64, terms: usize) -> RegressionFit {
        RegressionFit {
            family: Family::Poisson,
            terms: (0..terms).map(|i| format!("t{i}")).collect(),
            coefficients: vec![0.0; terms],
            standard_errors: vec![1.0; terms],
            z_values: vec![0.0; terms],
            p_values: vec![1.0; terms],
            log_likelihood: ll,
            dispersion: None,
            iterations: 1,
            converged: true,
            poisson_limit: false,
        }
    }

    #[test]
    fn lr_test_published_rows() {
        // statistic 1.95 on 1 df and 0.8676 on 1 df.
        let a = lr_test(&fit_with_ll(-100.975, 2), &fit_with_ll(-100.0, 3), 1).unwrap();
        assert!((a.statistic - 1.95).abs() < 1e-9);
        assert!((a.p_value - 0.1626).abs() < 1e-4);

        let b = lr_test(&fit_with_ll(-100.4338, 2), &fit_with_ll(-100.0, 3), 1).unwrap();
        assert!((b.statistic - 0.8676).abs() < 1e-9);
        assert!((b.p_value - 0.3516).abs() < 1e-4);
    }

    #[test]
    fn lr_test_identical_fits() {
        let t = lr_test(&fit_with_ll(-50.0, 2), &fit_with_ll(-50.0, 3), 1).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn lr_test_rejects_inverted_nesting() {
        assert!(lr_test(&fit_with_ll(-10.0, 2), &fit_with_ll(-20.0, 3), 1).is_err());
    }

    fn synthetic_rows(n: usize) -> Vec<CovariateRow> {
        (0..n)
            .map(|i| {
                let party = (i % 2) as f64;
                let e = ((i * 7) % 10) as f64 / 10.0 * 0.8;
                let t = (1.0 - e) * (((i * 3) % 4) as f64 / 4.0);
                let reshare = ((i / 3) % 2) as f64;
                let tod = ((i * 5) % 24) as f64 + 0.5;
                let len = 40.0 + ((i * 11) % 100) as f64;
                let sq = (((i * 13) % 160) as f64).sqrt();
                // True model: strong party and episodicity effects, a real
                // party:episodicity interaction, and nothing else.
                let eta = 1.0 - 0.4 * party + 0.9 * e + 0.5 * party * e + 0.01 * len;
                CovariateRow {
                    post_id: format!("p{i}"),
                    party,
                    episodicity: e,
                    thematicity: t,
                    is_reshare: reshare,
                    time_of_day: tod,
                    message_length: len,
                    sqrt_proximity: sq,
                    offset_log: 0.0,
                    y: eta.exp().round() as u64,
                }
            })
            .collect()
    }

    #[test]
    fn alpha_one_strips_every_interaction() {
        let rows = synthetic_rows(400);
        let spec = ModelSpec::new(vec![
            Term::Main(Covariate::Party),
            Term::Main(Covariate::Episodicity),
            Term::Main(Covariate::MessageLength),
            Term::Interaction(Covariate::Party, Covariate::Episodicity),
            Term::Interaction(Covariate::Party, Covariate::MessageLength),
        ]);
        let (fit, trail) = backward_eliminate(&rows, &spec, 1.0, Family::Poisson).unwrap();
        assert_eq!(trail.len(), 2);
        assert_eq!(fit.terms.len(), 4); // intercept + three mains
        assert!(fit.terms.iter().all(|t| !t.contains(':')));
    }

    #[test]
    fn strong_interactions_survive() {
        let rows = synthetic_rows(400);
        let spec = ModelSpec::new(vec![
            Term::Main(Covariate::Party),
            Term::Main(Covariate::Episodicity),
            Term::Main(Covariate::MessageLength),
            Term::Interaction(Covariate::Party, Covariate::Episodicity),
        ]);
        let (fit, trail) = backward_eliminate(&rows, &spec, 0.05, Family::Poisson).unwrap();
        assert!(trail.is_empty());
        assert!(fit.terms.iter().any(|t| t == "party:episodicity"));
    }

    #[test]
    fn null_interaction_is_dropped() {
        let rows = synthetic_rows(400);
        let spec = ModelSpec::new(vec![
            Term::Main(Covariate::Party),
            Term::Main(Covariate::Episodicity),
            Term::Main(Covariate::MessageLength),
            Term::Interaction(Covariate::Party, Covariate::Episodicity),
            Term::Interaction(Covariate::Party, Covariate::MessageLength),
        ]);
        let (fit, trail) = backward_eliminate(&rows, &spec, 0.05, Family::Poisson).unwrap();
        assert!(trail
            .iter()
            .any(|s| s.dropped_term == "party:message_length"));
        assert!(fit.terms.iter().any(|t| t == "party:episodicity"));
        assert!(fit.terms.iter().all(|t| t != "party:message_length"));
    }
}
