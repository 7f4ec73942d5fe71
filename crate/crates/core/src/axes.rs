//! The seven quality axes along which comments are improved.
//!
//! The axis set is closed. Every module that accepts an axis key parses it
//! through [`AxisKey::from_str`], so unknown keys fail at the boundary.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKey {
    Logical,
    Precise,
    Contextualizing,
    Condensing,
    Unambiguous,
    Exhaustive,
    Troubleshooting,
}

impl AxisKey {
    pub const ALL: [AxisKey; 7] = [
        AxisKey::Logical,
        AxisKey::Precise,
        AxisKey::Contextualizing,
        AxisKey::Condensing,
        AxisKey::Unambiguous,
        AxisKey::Exhaustive,
        AxisKey::Troubleshooting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AxisKey::Logical => "logical",
            AxisKey::Precise => "precise",
            AxisKey::Contextualizing => "contextualizing",
            AxisKey::Condensing => "condensing",
            AxisKey::Unambiguous => "unambiguous",
            AxisKey::Exhaustive => "exhaustive",
            AxisKey::Troubleshooting => "troubleshooting",
        }
    }

    /// Parses a comma-separated list, where `all` expands to every axis.
    pub fn parse_list(spec: &str) -> Result<Vec<AxisKey>, UnknownAxisKey> {
        let mut out = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part.eq_ignore_ascii_case("all") {
                return Ok(AxisKey::ALL.to_vec());
            }
            let key: AxisKey = part.parse()?;
            if !out.contains(&key) {
                out.push(key);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for AxisKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown quality axis `{0}`")]
pub struct UnknownAxisKey(pub String);

impl FromStr for AxisKey {
    type Err = UnknownAxisKey;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AxisKey::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| UnknownAxisKey(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxialGroup {
    /// Details within the method: identifiers, algorithm, behaviour.
    Internalizing,
    /// Information beyond the method: callers, purpose, failure context.
    Externalizing,
}

/// The umbrella code every axis sits under.
pub const SUBJECTIVE_CODE: &str = "refocusing";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QualityAxis {
    pub key: AxisKey,
    pub display_name: String,
    pub description: String,
    pub axial_group: AxialGroup,
    pub subjective_code: &'static str,
}

fn default_axis(key: AxisKey) -> QualityAxis {
    use AxialGroup::*;
    let (display, description, group) = match key {
        AxisKey::Logical => ("Logical", "States what the code functionally does.", Internalizing),
        AxisKey::Precise => {
            ("Precise", "Names the specific identifiers, values, and conditions the code uses.", Internalizing)
        }
        AxisKey::Contextualizing => {
            ("Contextualizing", "Explains the method's role and callers beyond its body.", Externalizing)
        }
        AxisKey::Condensing => {
            ("Condensing", "Removes internal detail in favor of higher-level information.", Externalizing)
        }
        AxisKey::Unambiguous => ("Unambiguous", "Admits only one reading.", Internalizing),
        AxisKey::Exhaustive => ("Exhaustive", "Covers all behaviors including exceptional paths.", Internalizing),
        AxisKey::Troubleshooting => {
            ("Troubleshooting", "Describes failure modes, exceptions, and boundary checks.", Externalizing)
        }
    };
    QualityAxis {
        key,
        display_name: display.to_string(),
        description: description.to_string(),
        axial_group: group,
        subjective_code: SUBJECTIVE_CODE,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error(transparent)]
    UnknownAxisKey(#[from] UnknownAxisKey),
    #[error("axis `{0}` has an empty description")]
    MissingDescription(AxisKey),
    #[error("axis `{0}` has an empty display name")]
    MissingDisplayName(AxisKey),
    #[error("condensing must stay in the externalizing group")]
    CondensingGroup,
    #[error("reading taxonomy config")]
    Io(#[from] std::io::Error),
    #[error("parsing taxonomy config: {0}")]
    Parse(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisOverride {
    display_name: Option<String>,
    description: Option<String>,
    axial_group: Option<AxialGroup>,
}

/// All seven axes, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    axes: Vec<QualityAxis>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy { axes: AxisKey::ALL.into_iter().map(default_axis).collect() }
    }
}

impl Taxonomy {
    pub fn get(&self, key: AxisKey) -> &QualityAxis {
        &self.axes[AxisKey::ALL.iter().position(|k| *k == key).expect("closed axis set")]
    }

    pub fn axes(&self) -> &[QualityAxis] {
        &self.axes
    }

    pub fn group(&self, group: AxialGroup) -> Vec<AxisKey> {
        self.axes.iter().filter(|a| a.axial_group == group).map(|a| a.key).collect()
    }

    /// Merges a TOML or JSON override table (one table per axis key) over the
    /// defaults. JSON is chosen for `.json` paths, TOML otherwise.
    pub fn from_config_str(text: &str, json: bool) -> Result<Self, TaxonomyError> {
        let raw: BTreeMap<String, AxisOverride> = if json {
            serde_json::from_str(text).map_err(|e| TaxonomyError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| TaxonomyError::Parse(e.to_string()))?
        };
        let mut taxonomy = Taxonomy::default();
        for (key, ov) in raw {
            let key: AxisKey = key.parse()?;
            let idx = AxisKey::ALL.iter().position(|k| *k == key).unwrap();
            let axis = &mut taxonomy.axes[idx];
            if let Some(d) = ov.display_name {
                axis.display_name = d;
            }
            if let Some(d) = ov.description {
                axis.description = d;
            }
            if let Some(g) = ov.axial_group {
                axis.axial_group = g;
            }
        }
        for axis in &taxonomy.axes {
            if axis.description.trim().is_empty() {
                return Err(TaxonomyError::MissingDescription(axis.key));
            }
            if axis.display_name.trim().is_empty() {
                return Err(TaxonomyError::MissingDisplayName(axis.key));
            }
        }
        if taxonomy.get(AxisKey::Condensing).axial_group != AxialGroup::Externalizing {
            return Err(TaxonomyError::CondensingGroup);
        }
        Ok(taxonomy)
    }
}

/// Built-in axes, optionally overridden by a config file.
pub fn load_taxonomy(config: Option<&Path>) -> Result<Taxonomy, TaxonomyError> {
    match config {
        None => Ok(Taxonomy::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
            Taxonomy::from_config_str(&text, json)
        }
    }
}

/// Tally of rationale labels per axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AxisDistribution {
    pub counts: BTreeMap<AxisKey, u64>,
    pub total: u64,
}

impl AxisDistribution {
    pub fn percent(&self, key: AxisKey) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[&key] as f64 * 100.0 / self.total as f64
        }
    }

    /// Rows sorted by descending count, ties in canonical axis order.
    pub fn sorted(&self) -> Vec<(AxisKey, u64, f64)> {
        let mut rows: Vec<_> = AxisKey::ALL.iter().map(|&k| (k, self.counts[&k], self.percent(k))).collect();
        rows.sort_by_key(|r| std::cmp::Reverse(r.1));
        rows
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, count, pct) in self.sorted() {
            out.push_str(&format!("{:<16} {:>6} {:>6.1}%\n", key.as_str(), count, pct));
        }
        out.push_str(&format!("{:<16} {:>6}\n", "total", self.total));
        out
    }
}

pub fn distribution_report<S: AsRef<str>>(labels: &[S]) -> Result<AxisDistribution, UnknownAxisKey> {
    let mut counts: BTreeMap<AxisKey, u64> = AxisKey::ALL.iter().map(|&k| (k, 0)).collect();
    for label in labels {
        *counts.get_mut(&label.as_ref().parse::<AxisKey>()?).unwrap() += 1;
    }
    Ok(AxisDistribution { total: counts.values().sum(), counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_seven_axes() {
        let t = load_taxonomy(None).unwrap();
        assert_eq!(t.axes().len(), 7);
        assert_eq!(t.get(AxisKey::Condensing).axial_group, AxialGroup::Externalizing);
        assert!(t.axes().iter().all(|a| !a.description.is_empty() && a.subjective_code == "refocusing"));
        let mut both = t.group(AxialGroup::Internalizing);
        both.extend(t.group(AxialGroup::Externalizing));
        both.sort();
        assert_eq!(both, AxisKey::ALL.to_vec());
    }

    #[test]
    fn override_one_description() {
        let t = Taxonomy::from_config_str("[precise]\ndescription = \"Exact names.\"\n", false).unwrap();
        let d = Taxonomy::default();
        assert_eq!(t.get(AxisKey::Precise).description, "Exact names.");
        let changed = t.axes().iter().zip(d.axes()).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 1);
    }

    #[test]
    fn json_config_and_regrouping() {
        let t = Taxonomy::from_config_str(r#"{"logical": {"axial_group": "externalizing"}}"#, true).unwrap();
        assert_eq!(t.get(AxisKey::Logical).axial_group, AxialGroup::Externalizing);
    }

    #[test]
    fn rejects_unknown_and_empty() {
        assert!(matches!(
            Taxonomy::from_config_str("[brevity]\ndescription = \"x\"\n", false),
            Err(TaxonomyError::UnknownAxisKey(UnknownAxisKey(k))) if k == "brevity"
        ));
        assert!(matches!(
            Taxonomy::from_config_str("[exhaustive]\ndescription = \"  \"\n", false),
            Err(TaxonomyError::MissingDescription(AxisKey::Exhaustive))
        ));
        assert!(matches!(
            Taxonomy::from_config_str("[condensing]\naxial_group = \"internalizing\"\n", false),
            Err(TaxonomyError::CondensingGroup)
        ));
        assert!(matches!(
            Taxonomy::from_config_str("[precise]\ncolour = \"red\"\n", false),
            Err(TaxonomyError::Parse(_))
        ));
    }

    #[test]
    fn distribution_fixture() {
        let mut labels = vec!["logical"; 38];
        labels.extend(vec!["precise"; 18]);
        labels.extend(vec!["contextualizing"; 4]);
        labels.extend(vec!["condensing"; 15]);
        labels.extend(vec!["unambiguous"; 10]);
        labels.extend(vec!["exhaustive"; 9]);
        labels.extend(vec!["troubleshooting"; 6]);
        let d = distribution_report(&labels).unwrap();
        assert_eq!(d.total, 100);
        assert_eq!(d.percent(AxisKey::Logical), 38.0);
        assert_eq!(d.percent(AxisKey::Precise), 18.0);
        assert_eq!(d.percent(AxisKey::Contextualizing), 4.0);
        let rendered = d.render();
        let first = rendered.lines().next().unwrap();
        assert!(first.starts_with("logical") && first.ends_with("38.0%"), "{first}");
        assert!(rendered.lines().last().unwrap().ends_with("100"));
    }

    #[test]
    fn distribution_edges() {
        let empty = distribution_report::<&str>(&[]).unwrap();
        assert_eq!(empty.total, 0);
        assert!(empty.counts.values().all(|&c| c == 0) && empty.counts.len() == 7);
        let two = distribution_report(&["logical", "logical"]).unwrap();
        assert_eq!((two.counts[&AxisKey::Logical], two.total), (2, 2));
        assert_eq!(distribution_report(&["brevity"]), Err(UnknownAxisKey("brevity".into())));
    }

    #[test]
    fn parse_axis_lists() {
        assert_eq!(AxisKey::parse_list("all").unwrap().len(), 7);
        assert_eq!(AxisKey::parse_list("precise, logical,precise").unwrap(), vec![AxisKey::Precise, AxisKey::Logical]);
        assert!(AxisKey::parse_list("precise,brevity").is_err());
    }
}
