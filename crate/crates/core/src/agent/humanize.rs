//! Plain-language rendering of machine errors.
//!
//! Templates live in a JSON object `code → text` so operators can reword them
//! without rebuilding; `{service}` expands to a readable service name.

use std::collections::BTreeMap;

use crate::code::ErrorCode;
use crate::message::ErrorBody;

pub const DEFAULT_TEMPLATES: &str = include_str!("../../data/error-templates.json");

const GENERIC: &str = "Generic";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Humanizer {
    templates: BTreeMap<String, String>,
}

impl Default for Humanizer {
    fn default() -> Self {
        Humanizer::from_json(DEFAULT_TEMPLATES).expect("bundled template table is valid")
    }
}

impl Humanizer {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut templates: BTreeMap<String, String> = serde_json::from_str(text)?;
        templates
            .entry(GENERIC.to_owned())
            .or_insert_with(|| "Sorry, something went wrong. Please try again.".to_owned());
        Ok(Humanizer { templates })
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Renders a code given as a wire string; unknown codes get the generic text.
    pub fn humanize_code(&self, code: &str, domain: Option<&str>) -> String {
        let template = self
            .templates
            .get(code)
            .or_else(|| self.templates.get(GENERIC))
            .expect("generic template always present");
        template.replace("{service}", &service_name(domain))
    }

    pub fn humanize(&self, err: &ErrorBody) -> String {
        let (code, domain) = describe(err);
        self.humanize_code(code.as_str(), domain)
    }

    /// Expands every [`placeholder`] in `text`.
    pub fn humanize_placeholders(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(start) = rest.find(PLACEHOLDER_OPEN) {
            let body = &rest[start + PLACEHOLDER_OPEN.len()..];
            let Some(end) = body.find('}') else { break };
            let (code, domain) = match body[..end].split_once('@') {
                Some((c, d)) => (c, Some(d)),
                None => (&body[..end], None),
            };
            out.push_str(&rest[..start]);
            out.push_str(&self.humanize_code(code, domain));
            rest = &body[end + 1..];
        }
        out.push_str(rest);
        out
    }
}

const PLACEHOLDER_OPEN: &str = "{error:";

/// Marker standing in for a failed part of a fused answer until the twin
/// renders it for the user: `{error:DomainUnavailable@cv-domain}`.
pub fn placeholder(code: &str, domain: Option<&str>) -> String {
    match domain {
        Some(d) => format!("{PLACEHOLDER_OPEN}{code}@{d}}}"),
        None => format!("{PLACEHOLDER_OPEN}{code}}}"),
    }
}

/// The placeholder for one failed part, resolved the same way
/// [`Humanizer::humanize`] would.
pub fn error_placeholder(err: &ErrorBody) -> String {
    let (code, domain) = describe(err);
    placeholder(code.as_str(), domain)
}

/// Picks the code that best explains `err` to a user: a fan-out failure is
/// reported through its causes.
pub fn describe(err: &ErrorBody) -> (ErrorCode, Option<&str>) {
    if err.code == ErrorCode::AllChildrenFailed && !err.causes.is_empty() {
        if err.causes.iter().all(|c| c.code == ErrorCode::AclDeniedAll) {
            return (ErrorCode::AclDeniedAll, None);
        }
        if let Some(cause) = err.causes.iter().find(|c| c.is_transient()) {
            return describe(cause);
        }
    }
    (err.code, err.first_domain())
}

/// `hr-domain` → `HR`, `payroll-domain` → `Payroll`.
pub fn service_name(domain: Option<&str>) -> String {
    let Some(domain) = domain else {
        return "requested".to_owned();
    };
    let base = domain.strip_suffix("-domain").unwrap_or(domain);
    let words: Vec<String> = base
        .split(['-', '_'])
        .filter(|w| !w.is_empty())
        .map(|w| {
            if w.len() <= 3 {
                w.to_ascii_uppercase()
            } else {
                let mut c = w.chars();
                c.next()
                    .map(|f| f.to_ascii_uppercase().to_string() + c.as_str())
                    .unwrap_or_default()
            }
        })
        .collect();
    if words.is_empty() {
        "requested".to_owned()
    } else {
        words.join(" ")
    }
}
