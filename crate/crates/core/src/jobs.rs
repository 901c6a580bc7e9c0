//! Job files: a JSON array of job documents or one document per line.
//!
//! ```json
//! {"job_id": "q1", "predicate": {"attr": "searchWord", "low": "w0000", "high": "w0003"},
//!  "projection": ["sourceIP", "adRevenue"], "offer_rate": 0.25}
//! ```
//!
//! At most one of `offer_rate`, `eager` and `selectivity_threshold` may be
//! given; without any the engine's configured policy applies.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::exec::{JobSpec, OfferSetting, Predicate};
use crate::value::Schema;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobDoc {
    job_id: Option<String>,
    predicate: Predicate,
    /// Defaults to every attribute.
    projection: Option<Vec<String>>,
    offer_rate: Option<f64>,
    eager: Option<bool>,
    selectivity_threshold: Option<f64>,
    #[serde(default)]
    no_offer: bool,
}

impl JobDoc {
    fn into_spec(self, position: usize, schema: &Schema) -> Result<JobSpec> {
        let job_id = self.job_id.unwrap_or_else(|| format!("job{}", position + 1));
        let mut settings = Vec::new();
        if let Some(r) = self.offer_rate {
            settings.push(OfferSetting::Rate(r));
        }
        match self.eager {
            Some(true) => settings.push(OfferSetting::Eager),
            Some(false) | None => {}
        }
        if let Some(t) = self.selectivity_threshold {
            settings.push(OfferSetting::Selectivity(t));
        }
        if self.no_offer {
            settings.push(OfferSetting::Disabled);
        }
        if settings.len() > 1 {
            return Err(Error::Config(format!("job {job_id}: more than one offer setting")));
        }
        let projection =
            self.projection.unwrap_or_else(|| schema.names().map(str::to_owned).collect());
        let mut spec = JobSpec::new(job_id, self.predicate, projection);
        spec.offer = settings.pop();
        spec.validated(schema)
    }
}

pub fn parse_jobs(text: &str, schema: &Schema) -> Result<Vec<JobSpec>> {
    let trimmed = text.trim_start();
    let docs: Vec<JobDoc> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed)?
    } else {
        serde_json::Deserializer::from_str(trimmed).into_iter().collect::<Result<_, _>>()?
    };
    docs.into_iter().enumerate().map(|(i, d)| d.into_spec(i, schema)).collect()
}

pub fn load_jobs(path: &Path, schema: &Schema) -> Result<Vec<JobSpec>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_jobs(&text, schema)
}
