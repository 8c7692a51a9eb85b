use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a raw column value is mapped to a group.
///
/// Numeric intervals are half-open `[min, max)`; a missing bound leaves that
/// side open, so `{"min": 60}` reads as "60+".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupRule {
    Values {
        values: Vec<String>,
    },
    Interval {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
}

impl GroupRule {
    fn lo(&self) -> f64 {
        match self {
            GroupRule::Interval { min, .. } => min.unwrap_or(f64::NEG_INFINITY),
            GroupRule::Values { .. } => f64::NAN,
        }
    }

    fn hi(&self) -> f64 {
        match self {
            GroupRule::Interval { max, .. } => max.unwrap_or(f64::INFINITY),
            GroupRule::Values { .. } => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDef {
    pub name: String,
    #[serde(flatten)]
    pub rule: GroupRule,
}

impl GroupDef {
    pub fn values<S: Into<String>>(name: &str, values: impl IntoIterator<Item = S>) -> Self {
        GroupDef {
            name: name.to_string(),
            rule: GroupRule::Values { values: values.into_iter().map(Into::into).collect() },
        }
    }

    pub fn interval(name: &str, min: Option<f64>, max: Option<f64>) -> Self {
        GroupDef { name: name.to_string(), rule: GroupRule::Interval { min, max } }
    }
}

/// A stratification characteristic: a source column and the groups that
/// partition its value domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicSchema {
    pub name: String,
    #[serde(alias = "source_column")]
    pub column: String,
    pub groups: Vec<GroupDef>,
}

impl CharacteristicSchema {
    pub fn new(name: &str, column: &str, groups: Vec<GroupDef>) -> Self {
        CharacteristicSchema { name: name.to_string(), column: column.to_string(), groups }
    }

    /// Categorical characteristic where each group matches exactly its own name.
    pub fn categorical(name: &str, column: &str, groups: &[&str]) -> Self {
        Self::new(name, column, groups.iter().map(|g| GroupDef::values(g, [*g])).collect())
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_index(&self, group: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == group)
    }

    pub fn group_names(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidSchema { characteristic: self.name.clone(), reason };
        if self.groups.is_empty() {
            return Err(invalid("at least one group is required".into()));
        }
        for (i, g) in self.groups.iter().enumerate() {
            if self.groups[..i].iter().any(|o| o.name == g.name) {
                return Err(invalid(format!("duplicate group name `{}`", g.name)));
            }
        }
        let numeric = matches!(self.groups[0].rule, GroupRule::Interval { .. });
        if self.groups.iter().any(|g| matches!(g.rule, GroupRule::Interval { .. }) != numeric) {
            return Err(invalid("groups mix value sets and intervals".into()));
        }
        if numeric {
            let mut spans: Vec<(f64, f64, &str)> = Vec::new();
            for g in &self.groups {
                let (lo, hi) = (g.rule.lo(), g.rule.hi());
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return Err(invalid(format!("group `{}` needs min < max", g.name)));
                }
                spans.push((lo, hi, &g.name));
            }
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in spans.windows(2) {
                if w[1].0 < w[0].1 {
                    return Err(invalid(format!("intervals of `{}` and `{}` overlap", w[0].2, w[1].2)));
                }
            }
        } else {
            let mut seen: Vec<(&str, &str)> = Vec::new();
            for g in &self.groups {
                if let GroupRule::Values { values } = &g.rule {
                    if values.is_empty() {
                        return Err(invalid(format!("group `{}` has no values", g.name)));
                    }
                    for v in values {
                        if let Some((_, other)) = seen.iter().find(|(sv, _)| *sv == v.trim()) {
                            return Err(invalid(format!("value `{v}` listed in both `{other}` and `{}`", g.name)));
                        }
                        seen.push((v.trim(), &g.name));
                    }
                }
            }
        }
        Ok(())
    }

    /// Index of the group containing `raw`, if any. Non-numeric input never
    /// matches an interval group.
    pub fn assign(&self, raw: &str) -> Option<usize> {
        let raw = raw.trim();
        let number = raw.parse::<f64>().ok().filter(|x| x.is_finite());
        self.groups.iter().position(|g| match &g.rule {
            GroupRule::Values { values } => values.iter().any(|v| v.trim() == raw),
            GroupRule::Interval { .. } => number.is_some_and(|x| x >= g.rule.lo() && x < g.rule.hi()),
        })
    }
}
