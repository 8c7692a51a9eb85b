use serde::{Deserialize, Serialize};

use super::{CharacteristicSchema, Population};
use crate::error::{Error, Result};

/// Mixed-radix shape of the strata space. Flat stratum indices follow nested
/// loops with the first characteristic outermost, so the last characteristic
/// varies fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrataLayout {
    group_counts: Vec<usize>,
}

impl StrataLayout {
    pub fn new(group_counts: Vec<usize>) -> Result<Self> {
        if group_counts.is_empty() || group_counts.contains(&0) {
            return Err(Error::InvalidInput("every characteristic needs at least one group".into()));
        }
        Ok(StrataLayout { group_counts })
    }

    pub fn group_counts(&self) -> &[usize] {
        &self.group_counts
    }

    pub fn characteristics(&self) -> usize {
        self.group_counts.len()
    }

    /// D, the product of group counts.
    pub fn dimension(&self) -> usize {
        self.group_counts.iter().product()
    }

    pub fn flat(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.group_counts.len());
        tuple.iter().zip(&self.group_counts).fold(0, |acc, (&g, &count)| acc * count + g)
    }

    pub fn tuple(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.group_counts.len()];
        for (slot, &count) in out.iter_mut().zip(&self.group_counts).rev() {
            *slot = flat % count;
            flat /= count;
        }
        out
    }

    /// All index tuples in flat order.
    pub fn tuples(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.dimension()).map(|h| self.tuple(h))
    }

    /// Sums a per-stratum vector over every characteristic except `c`.
    pub fn marginalize(&self, values: &[f64], c: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.group_counts[c]];
        for (h, v) in values.iter().enumerate() {
            out[self.tuple(h)[c]] += v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub index: Vec<usize>,
    pub member_ids: Vec<String>,
    #[serde(skip)]
    pub members: Vec<usize>,
    pub init_count: usize,
    pub joint_initial_fraction: f64,
}

/// The partition of a population into all D strata, empty ones included.
#[derive(Debug, Clone, PartialEq)]
pub struct StratificationIndex {
    schemas: Vec<CharacteristicSchema>,
    layout: StrataLayout,
    strata: Vec<Stratum>,
    subject_strata: Vec<usize>,
    total: usize,
}

impl StratificationIndex {
    pub fn schemas(&self) -> &[CharacteristicSchema] {
        &self.schemas
    }

    pub fn layout(&self) -> &StrataLayout {
        &self.layout
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn dimension(&self) -> usize {
        self.strata.len()
    }

    /// N, the population size.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn init_counts(&self) -> Vec<usize> {
        self.strata.iter().map(|s| s.init_count).collect()
    }

    pub fn joint_initial(&self) -> Vec<f64> {
        self.strata.iter().map(|s| s.joint_initial_fraction).collect()
    }

    /// Flat stratum index of the subject at population position `pos`.
    pub fn stratum_of(&self, pos: usize) -> usize {
        self.subject_strata[pos]
    }

    pub fn characteristic_index(&self, name: &str) -> Result<usize> {
        self.schemas.iter().position(|s| s.name == name).ok_or_else(|| Error::UnknownCharacteristic(name.to_string()))
    }

    /// Human-readable label such as `male|30-39`.
    pub fn label(&self, h: usize) -> String {
        self.strata[h]
            .index
            .iter()
            .zip(&self.schemas)
            .map(|(&g, s)| s.groups[g].name.as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Share of the population in each group of `characteristic`.
    pub fn group_initial_distribution(&self, characteristic: &str) -> Result<Vec<f64>> {
        let c = self.characteristic_index(characteristic)?;
        Ok(self.group_initial_by_index(c))
    }

    pub(crate) fn group_initial_by_index(&self, c: usize) -> Vec<f64> {
        let counts = self.group_counts_by_index(c);
        counts.into_iter().map(|k| k as f64 / self.total as f64).collect()
    }

    pub(crate) fn group_counts_by_index(&self, c: usize) -> Vec<usize> {
        let mut counts = vec![0usize; self.layout.group_counts()[c]];
        for s in &self.strata {
            counts[s.index[c]] += s.init_count;
        }
        counts
    }

    /// Per-stratum capacity expressed as a fraction of the sample: `init_h / n`.
    pub fn caps(&self, n: usize) -> Vec<f64> {
        self.strata.iter().map(|s| s.init_count as f64 / n as f64).collect()
    }
}

/// Partitions `pop` into the cross product of the schemas' groups.
pub fn stratify(pop: &Population, schemas: &[CharacteristicSchema]) -> Result<StratificationIndex> {
    if schemas.is_empty() {
        return Err(Error::InvalidInput("at least one characteristic is required".into()));
    }
    for (i, s) in schemas.iter().enumerate() {
        s.validate()?;
        if schemas[..i].iter().any(|o| o.name == s.name) {
            return Err(Error::InvalidInput(format!("characteristic `{}` declared twice", s.name)));
        }
        if !pop.has_column(&s.column) {
            return Err(Error::MissingColumn { column: s.column.clone() });
        }
    }
    let layout = StrataLayout::new(schemas.iter().map(|s| s.group_count()).collect())?;
    let mut strata: Vec<Stratum> = layout
        .tuples()
        .map(|index| Stratum {
            index,
            member_ids: Vec::new(),
            members: Vec::new(),
            init_count: 0,
            joint_initial_fraction: 0.0,
        })
        .collect();

    let mut subject_strata = Vec::with_capacity(pop.len());
    let mut tuple = vec![0; schemas.len()];
    for (pos, subject) in pop.subjects().iter().enumerate() {
        for (slot, s) in tuple.iter_mut().zip(schemas) {
            let raw = pop.value(pos, &s.column).ok_or_else(|| Error::MissingValue {
                subject: subject.id.clone(),
                characteristic: s.name.clone(),
                column: s.column.clone(),
            })?;
            *slot = s.assign(raw).ok_or_else(|| Error::Unmappable {
                subject: subject.id.clone(),
                characteristic: s.name.clone(),
                value: raw.to_string(),
            })?;
        }
        let h = layout.flat(&tuple);
        strata[h].members.push(pos);
        strata[h].member_ids.push(subject.id.clone());
        subject_strata.push(h);
    }

    let total = pop.len();
    for s in &mut strata {
        s.init_count = s.members.len();
        s.joint_initial_fraction = s.init_count as f64 / total as f64;
    }
    Ok(StratificationIndex { schemas: schemas.to_vec(), layout, strata, subject_strata, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::GroupDef;

    fn pop(rows: &[(&str, &str, &str)]) -> Population {
        Population::from_rows(
            vec!["id".into(), "gender".into(), "age".into()],
            rows.iter().map(|(a, b, c)| vec![a.to_string(), b.to_string(), c.to_string()]).collect(),
            "id",
        )
        .unwrap()
    }

    fn gender() -> CharacteristicSchema {
        CharacteristicSchema::categorical("gender", "gender", &["male", "female"])
    }

    fn age7() -> CharacteristicSchema {
        let mut groups = vec![GroupDef::interval("-10", None, Some(10.0))];
        for lo in (10..60).step_by(10) {
            groups.push(GroupDef::interval(&format!("{}-{}", lo, lo + 10), Some(lo as f64), Some(lo as f64 + 10.0)));
        }
        groups.push(GroupDef::interval("60+", Some(60.0), None));
        CharacteristicSchema::new("age", "age", groups)
    }

    #[test]
    fn layout_roundtrip_and_order() {
        let l = StrataLayout::new(vec![2, 3, 2]).unwrap();
        assert_eq!(l.dimension(), 12);
        assert_eq!(l.tuple(0), vec![0, 0, 0]);
        assert_eq!(l.tuple(1), vec![0, 0, 1]);
        assert_eq!(l.tuple(2), vec![0, 1, 0]);
        assert_eq!(l.tuple(11), vec![1, 2, 1]);
        for h in 0..12 {
            assert_eq!(l.flat(&l.tuple(h)), h);
        }
    }

    #[test]
    fn gender_by_age_has_fourteen_strata() {
        let p = pop(&[("s1", "male", "34"), ("s2", "female", "61"), ("s3", "female", "5")]);
        let idx = stratify(&p, &[gender(), age7()]).unwrap();
        assert_eq!(idx.dimension(), 14);
        assert_eq!(idx.strata()[3].init_count, 1); // male, 30-40
        assert_eq!(idx.label(3), "male|30-40");
        assert_eq!(idx.strata()[13].member_ids, vec!["s2"]);
        assert_eq!(idx.strata()[7].member_ids, vec!["s3"]);
        let total: usize = idx.init_counts().iter().sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn concentrated_population_keeps_empty_strata() {
        let schemas: Vec<_> =
            ["a", "b", "c", "d"].iter().map(|c| CharacteristicSchema::categorical(c, c, &["x", "y"])).collect();
        let rows = (0..9).map(|i| vec![format!("s{i}"), "x".into(), "x".into(), "x".into(), "x".into()]).collect();
        let p = Population::from_rows(["id", "a", "b", "c", "d"].iter().map(|s| s.to_string()).collect(), rows, "id")
            .unwrap();
        let idx = stratify(&p, &schemas).unwrap();
        assert_eq!(idx.dimension(), 16);
        assert_eq!(idx.strata()[0].init_count, 9);
        assert_eq!(idx.strata().iter().filter(|s| s.init_count == 0).count(), 15);
    }

    #[test]
    fn three_by_three_by_three() {
        let schemas: Vec<_> =
            ["a", "b", "c"].iter().map(|c| CharacteristicSchema::categorical(c, c, &["x", "y", "z"])).collect();
        let p = Population::from_rows(
            ["id", "a", "b", "c"].iter().map(|s| s.to_string()).collect(),
            vec![vec!["s".into(), "z".into(), "y".into(), "x".into()]],
            "id",
        )
        .unwrap();
        let idx = stratify(&p, &schemas).unwrap();
        assert_eq!(idx.dimension(), 27);
        assert_eq!(idx.strata()[2 * 9 + 3].init_count, 1);
    }

    #[test]
    fn unmappable_value_names_subject() {
        let p = pop(&[("s1", "male", "34"), ("s9", "other", "20")]);
        let err = stratify(&p, &[gender()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("s9") && msg.contains("gender") && msg.contains("other"), "{msg}");
    }

    #[test]
    fn missing_value_is_error() {
        let p = pop(&[("s1", "", "34")]);
        assert!(matches!(stratify(&p, &[gender()]), Err(Error::MissingValue { .. })));
    }

    #[test]
    fn unknown_column_is_error() {
        let p = pop(&[("s1", "male", "34")]);
        let s = CharacteristicSchema::categorical("race", "race", &["a"]);
        let err = stratify(&p, &[s]).unwrap_err();
        assert!(err.to_string().contains("race"));
    }

    #[test]
    fn group_initial_distribution_ratios() {
        let mut rows = Vec::new();
        for i in 0..100 {
            let g = if i < 60 { "male" } else { "female" };
            rows.push((format!("s{i}"), g.to_string(), "30".to_string()));
        }
        let p = Population::from_rows(
            vec!["id".into(), "gender".into(), "age".into()],
            rows.into_iter().map(|(a, b, c)| vec![a, b, c]).collect(),
            "id",
        )
        .unwrap();
        let idx = stratify(&p, &[gender(), age7()]).unwrap();
        assert_eq!(idx.group_initial_distribution("gender").unwrap(), vec![0.6, 0.4]);
        let age = idx.group_initial_distribution("age").unwrap();
        assert_eq!(age[3], 1.0);
        assert_eq!(age[0], 0.0);
        assert!(idx.group_initial_distribution("race").is_err());
    }

    #[test]
    fn uniform_four_groups() {
        let s = CharacteristicSchema::categorical("g", "g", &["a", "b", "c", "d"]);
        let rows = ["a", "b", "c", "d", "a", "b", "c", "d"]
            .iter()
            .enumerate()
            .map(|(i, g)| vec![format!("s{i}"), g.to_string()])
            .collect();
        let p = Population::from_rows(vec!["id".into(), "g".into()], rows, "id").unwrap();
        let idx = stratify(&p, &[s]).unwrap();
        assert_eq!(idx.group_initial_distribution("g").unwrap(), vec![0.25; 4]);
    }
}
