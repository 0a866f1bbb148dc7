//! JSON system documents.
//!
//! ```json
//! {
//!   "n": 3, "d": 2, "R": 1,
//!   "forms": [[{"exponents": [2, 0, 0], "coeff": 1}, {"exponents": [0, 2, 0], "coeff": 1}]],
//!   "box": [[-1, 1], [-1, 1], [-1, 1]]
//! }
//! ```
//!
//! A form may also be written as a string such as `"x1^2 + x2^2 - x3^2"`.
//! `n`, `d` and `R` are inferred when absent and checked when present.

use serde::{Deserialize, Serialize};

use super::{parse_expression, BoxRegion, Form, FormSystem, IntegerForm};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub exponents: Vec<u32>,
    pub coeff: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FormSpec {
    Expression(String),
    Terms(Vec<TermSpec>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    #[serde(default, rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    pub forms: Vec<FormSpec>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub region: Option<BoxRegion>,
}

impl SystemDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))
    }

    /// Canonical document: explicit term lists sorted by exponent vector.
    pub fn from_system(system: &FormSystem, region: Option<&BoxRegion>) -> Self {
        let forms = system
            .forms()
            .iter()
            .map(|f| {
                FormSpec::Terms(
                    f.terms()
                        .iter()
                        .map(|(e, &c)| TermSpec {
                            exponents: e.clone(),
                            coeff: c,
                        })
                        .collect(),
                )
            })
            .collect();
        SystemDocument {
            n: Some(system.vars()),
            d: Some(system.degree()),
            r: Some(system.len()),
            forms,
            region: region.cloned(),
        }
    }

    /// Byte-stable serialization of [`SystemDocument::from_system`].
    pub fn canonical_json(system: &FormSystem, region: Option<&BoxRegion>) -> String {
        serde_json::to_string(&Self::from_system(system, region))
            .expect("system documents always serialize")
    }

    pub fn to_system(&self) -> Result<FormSystem> {
        if self.forms.is_empty() {
            return Err(Error::Malformed("document lists no forms".into()));
        }
        if let Some(r) = self.r {
            if r != self.forms.len() {
                return Err(Error::Malformed(format!(
                    "R = {r} but {} forms are listed",
                    self.forms.len()
                )));
            }
        }
        let n = match self.n {
            Some(n) => n,
            None => self.infer_vars()?,
        };
        let mut forms: Vec<IntegerForm> = Vec::with_capacity(self.forms.len());
        let mut degrees = Vec::with_capacity(self.forms.len());
        for (i, spec) in self.forms.iter().enumerate() {
            let (form, natural) = match spec {
                FormSpec::Expression(text) => {
                    let f = parse_expression(text, Some(n), None).map_err(|e| match e {
                        Error::InconsistentVariables { expected, found, .. } => {
                            Error::InconsistentVariables {
                                index: i,
                                expected,
                                found,
                            }
                        }
                        other => other,
                    })?;
                    let deg = f.degree();
                    (f, deg)
                }
                FormSpec::Terms(terms) => {
                    for t in terms {
                        if t.exponents.len() != n {
                            return Err(Error::InconsistentVariables {
                                index: i,
                                expected: n,
                                found: t.exponents.len(),
                            });
                        }
                    }
                    let deg = terms
                        .iter()
                        .filter(|t| t.coeff != 0)
                        .map(|t| t.exponents.iter().sum::<u32>())
                        .max()
                        .unwrap_or(0);
                    let f = Form::new(n, deg, terms.iter().map(|t| (t.exponents.clone(), t.coeff)))?;
                    (f, deg)
                }
            };
            if form.is_zero() {
                return Err(Error::ZeroForm(i));
            }
            degrees.push(natural);
            forms.push(form);
        }
        let degree = match self.d {
            Some(d) => {
                for (i, &deg) in degrees.iter().enumerate() {
                    if deg > d {
                        return Err(Error::InconsistentDegree {
                            index: i,
                            expected: d,
                            found: deg,
                        });
                    }
                }
                d
            }
            None => {
                let d = degrees[0];
                for (i, &deg) in degrees.iter().enumerate() {
                    if deg != d {
                        return Err(Error::InconsistentDegree {
                            index: i,
                            expected: d,
                            found: deg,
                        });
                    }
                }
                d
            }
        };
        let forms = forms
            .into_iter()
            .map(|f| Form::new(n, degree, f.terms().iter().map(|(e, &c)| (e.clone(), c))))
            .collect::<Result<Vec<_>>>()?;
        let system = FormSystem::new(forms)?;
        if let Some(region) = &self.region {
            region.check_dim(n)?;
        }
        Ok(system)
    }

    fn infer_vars(&self) -> Result<usize> {
        let mut n = 0;
        for spec in &self.forms {
            match spec {
                FormSpec::Expression(text) => {
                    n = n.max(parse_expression(text, None, None)?.vars());
                }
                FormSpec::Terms(terms) => {
                    for t in terms {
                        n = n.max(t.exponents.len());
                    }
                }
            }
        }
        if n == 0 {
            return Err(Error::Malformed("cannot infer the variable count".into()));
        }
        Ok(n)
    }
}

/// Parses a JSON system document and validates it.
pub fn parse_system(text: &str) -> Result<FormSystem> {
    SystemDocument::from_json(text)?.to_system()
}
