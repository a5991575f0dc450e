use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{ImpactError, PanelObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Intercept,
    Intervention,
    Treatment,
    InterventionTreatment,
    NumberCases,
    NumberVictims,
    AvgPopulation,
}

impl Term {
    pub const ALL: [Term; 7] = [
        Term::Intercept,
        Term::Intervention,
        Term::Treatment,
        Term::InterventionTreatment,
        Term::NumberCases,
        Term::NumberVictims,
        Term::AvgPopulation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::Intercept => "intercept",
            Term::Intervention => "intervention",
            Term::Treatment => "treatment",
            Term::InterventionTreatment => "intervention_treatment",
            Term::NumberCases => "number_cases",
            Term::NumberVictims => "number_victims",
            Term::AvgPopulation => "avg_population",
        }
    }

    pub fn value(self, obs: &PanelObservation) -> f64 {
        match self {
            Term::Intercept => 1.0,
            Term::Intervention => obs.intervention as f64,
            Term::Treatment => obs.treatment as f64,
            Term::InterventionTreatment => (obs.intervention * obs.treatment) as f64,
            Term::NumberCases => obs.number_cases as f64,
            Term::NumberVictims => obs.number_victims as f64,
            Term::AvgPopulation => obs.avg_population,
        }
    }

    fn parse(token: &str) -> Option<Term> {
        let t = token.trim().to_ascii_lowercase();
        match t.as_str() {
            "1" | "intercept" => Some(Term::Intercept),
            "intervention:treatment" | "treatment:intervention" => Some(Term::InterventionTreatment),
            _ => Term::ALL.into_iter().find(|term| term.name() == t),
        }
    }
}

/// Right-hand side of a regression of daily replies on panel columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formula {
    terms: Vec<Term>,
}

impl Formula {
    pub fn new(terms: impl IntoIterator<Item = Term>) -> Result<Self, ImpactError> {
        let mut out: Vec<Term> = Vec::new();
        for t in terms {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        if out.is_empty() {
            return Err(ImpactError::Formula("no terms".into()));
        }
        // keep the intercept in front so reports read naturally
        out.sort_by_key(|t| *t != Term::Intercept);
        Ok(Self { terms: out })
    }

    /// Intercept, the three difference-in-differences terms and all covariates.
    pub fn full() -> Self {
        Self { terms: Term::ALL.to_vec() }
    }

    /// Intercept, intervention, treatment and their interaction only.
    pub fn saturated() -> Self {
        Self {
            terms: Term::ALL[..4].to_vec(),
        }
    }

    pub fn intercept_only() -> Self {
        Self {
            terms: vec![Term::Intercept],
        }
    }

    /// Parses `replies ~ a + b + a:b`. `a*b` expands to `a + b + a:b`; an
    /// intercept is included unless the formula contains `- 1` or `+ 0`.
    pub fn parse(text: &str) -> Result<Self, ImpactError> {
        let rhs = match text.split_once('~') {
            Some((lhs, rhs)) => {
                if lhs.trim() != "replies" {
                    return Err(ImpactError::Formula(format!("only `replies` can be modelled, got {:?}", lhs.trim())));
                }
                rhs
            }
            None => text,
        };
        let mut intercept = true;
        let mut terms = Vec::new();
        for raw in rhs.replace('-', "+-").split('+') {
            let tok: String = raw.split_whitespace().collect();
            match tok.as_str() {
                "" => continue,
                "-1" | "0" => {
                    intercept = false;
                    continue;
                }
                _ => {}
            }
            if let Some((a, b)) = tok.split_once('*') {
                let (ta, tb) = (Term::parse(a), Term::parse(b));
                match (ta, tb) {
                    (Some(ta), Some(tb)) if [ta, tb].contains(&Term::Intervention) && [ta, tb].contains(&Term::Treatment) => {
                        terms.extend([Term::Intervention, Term::Treatment, Term::InterventionTreatment]);
                    }
                    _ => return Err(ImpactError::Formula(format!("unsupported product {tok:?}"))),
                }
                continue;
            }
            match Term::parse(&tok) {
                Some(t) => terms.push(t),
                None => return Err(ImpactError::Formula(format!("unknown term {tok:?}"))),
            }
        }
        if intercept {
            terms.insert(0, Term::Intercept);
        } else {
            terms.retain(|t| *t != Term::Intercept);
        }
        Self::new(terms)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn has_intercept(&self) -> bool {
        self.terms.contains(&Term::Intercept)
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name().to_string()).collect()
    }

    pub fn design(&self, panel: &[PanelObservation]) -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(panel.len(), self.terms.len(), |i, j| self.terms[j].value(&panel[i]));
        let y = DVector::from_iterator(panel.len(), panel.iter().map(|r| r.replies as f64));
        (x, y)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "replies ~ ")?;
        let rest: Vec<&str> = self.terms.iter().filter(|t| **t != Term::Intercept).map(|t| t.name()).collect();
        match (self.has_intercept(), rest.is_empty()) {
            (true, true) => write!(f, "1"),
            (true, false) => write!(f, "{}", rest.join(" + ")),
            (false, _) => write!(f, "{} - 1", rest.join(" + ")),
        }
    }
}
