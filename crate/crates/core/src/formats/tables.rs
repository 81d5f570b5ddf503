//! Schemas and row builders for every exported table.

use std::collections::BTreeMap;
use std::path::Path;

use super::{export_table, ColumnType, FormatError, Schema, Value};
use crate::dsp::{NormalizationScope, RecruitmentCurve, RecruitmentPoint};
use crate::electrode::{ContactId, StimConfig, StimKind};
use crate::histology::{FiberStats, SectionCorrespondence};
use crate::muscle::MuscleId;
use crate::selectivity::{PolarMap, SelectivityRecord};
use crate::sim::TruthRow;

use ColumnType::{Float, Integer, Text};

pub fn curve_schema() -> Schema {
    Schema::new(&[
        ("muscle", Text),
        ("config", Text),
        ("scope", Text),
        ("amplitude_uA", Float),
        ("p2p_uV", Float),
        ("normalized", Float),
    ])
}

pub fn curve_rows(curves: &[RecruitmentCurve]) -> Vec<Vec<Value>> {
    curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(move |p| {
                vec![
                    Value::from(c.muscle.label()),
                    Value::from(c.config.to_string()),
                    Value::from(c.scope.to_string()),
                    Value::from(p.amplitude_ua),
                    Value::from(p.mean_p2p_uv),
                    Value::from(p.normalized),
                ]
            })
        })
        .collect()
}

/// Rebuild curves from rows read back with [`curve_schema`].
pub fn curves_from_rows(rows: &[Vec<Value>]) -> Result<Vec<RecruitmentCurve>, FormatError> {
    let mut grouped: BTreeMap<(MuscleId, StimKind), RecruitmentCurve> = BTreeMap::new();
    for (r, row) in rows.iter().enumerate() {
        let text = |i: usize| row.get(i).and_then(Value::as_str).unwrap_or("");
        let num = |i: usize| row.get(i).and_then(Value::as_f64).unwrap_or(f64::NAN);
        let bad = |column: &str, message: String| FormatError::Schema { column: column.into(), message: format!("row {r}: {message}") };
        let muscle: MuscleId = text(0).into();
        let config: StimKind = text(1).parse().map_err(|e: crate::Error| bad("config", e.to_string()))?;
        let scope: NormalizationScope = text(2).parse().map_err(|e: crate::Error| bad("scope", e.to_string()))?;
        let curve = grouped.entry((muscle.clone(), config)).or_insert_with(|| RecruitmentCurve {
            muscle,
            config,
            scope,
            normalizable: false,
            points: Vec::new(),
        });
        let point = RecruitmentPoint { amplitude_ua: num(3), mean_p2p_uv: num(4), normalized: num(5) };
        curve.normalizable |= point.normalized > 0.0;
        curve.points.push(point);
    }
    Ok(grouped.into_values().collect())
}

pub fn polar_schema() -> Schema {
    Schema::new(&[
        ("intensity_uA", Float),
        ("config_angle_deg", Float),
        ("muscle", Text),
        ("recruitment", Float),
        ("radius", Float),
    ])
}

pub fn polar_rows(map: &PolarMap) -> Vec<Vec<Value>> {
    map.points
        .iter()
        .map(|p| {
            vec![
                Value::from(p.intensity_ua),
                Value::from(p.angle_deg),
                Value::from(p.muscle.label()),
                Value::from(p.recruitment),
                Value::from(p.radius()),
            ]
        })
        .collect()
}

pub fn selectivity_schema() -> Schema {
    Schema::new(&[
        ("rank", Integer),
        ("target", Text),
        ("config", Text),
        ("amplitude_uA", Float),
        ("selectivity_index", Float),
        ("target_recruitment", Float),
    ])
}

pub fn selectivity_rows(ranking: &[SelectivityRecord]) -> Vec<Vec<Value>> {
    ranking
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                Value::from(i + 1),
                Value::from(r.target.label()),
                Value::from(r.config.to_string()),
                Value::from(r.amplitude_ua),
                Value::from(r.selectivity_index),
                Value::from(r.target_recruitment),
            ]
        })
        .collect()
}

pub fn correspondence_schema() -> Schema {
    Schema::new(&[("kind", Text), ("fascicle_a", Text), ("fascicle_b", Text)])
}

/// Splits produce one row per child; unmatched fascicles leave the other side empty.
pub fn correspondence_rows(c: &SectionCorrespondence) -> Vec<Vec<Value>> {
    let row = |kind: &str, a: &str, b: &str| vec![Value::from(kind), Value::from(a), Value::from(b)];
    let mut rows = Vec::new();
    rows.extend(c.matches.iter().map(|(a, b)| row("match", a, b)));
    for (a, children) in &c.splits {
        rows.extend(children.iter().map(|b| row("split", a, b)));
    }
    rows.extend(c.unmatched_a.iter().map(|a| row("unmatched_a", a, "")));
    rows.extend(c.unmatched_b.iter().map(|b| row("unmatched_b", "", b)));
    rows
}

pub fn fiber_stats_schema() -> Schema {
    Schema::new(&[
        ("rank", Integer),
        ("fascicle", Text),
        ("motor_fiber_count", Float),
        ("area_um2", Float),
        ("density_per_mm2", Float),
    ])
}

/// Empty when the section lacks fiber counts.
pub fn fiber_stats_rows(stats: &FiberStats) -> Vec<Vec<Value>> {
    match stats {
        FiberStats::Available { ranking, .. } => ranking
            .iter()
            .enumerate()
            .map(|(i, e)| {
                vec![
                    Value::from(i + 1),
                    Value::from(e.id.as_str()),
                    Value::from(e.motor_fiber_count),
                    Value::from(e.area_um2),
                    Value::from(e.density_per_mm2),
                ]
            })
            .collect(),
        FiberStats::Unavailable { .. } => Vec::new(),
    }
}

pub fn truth_schema() -> Schema {
    Schema::new(&[("config", Text), ("amplitude_uA", Float), ("muscle", Text), ("recruitment", Float)])
}

pub fn truth_rows(config: StimKind, rows: &[TruthRow]) -> Vec<Vec<Value>> {
    rows.iter()
        .flat_map(|t| {
            t.recruitment.iter().map(move |(m, &v)| {
                vec![Value::from(config.to_string()), Value::from(t.amplitude_ua), Value::from(m.label()), Value::from(v)]
            })
        })
        .collect()
}

pub fn pattern_schema() -> Schema {
    Schema::new(&[
        ("config", Text),
        ("contact", Text),
        ("weight_numerator", Integer),
        ("weight_denominator", Integer),
        ("weight", Float),
    ])
}

pub fn pattern_rows(configs: &[StimConfig]) -> Vec<Vec<Value>> {
    configs
        .iter()
        .flat_map(|c| {
            ContactId::all().into_iter().map(move |id| {
                let w = c.pattern.weight(id);
                vec![
                    Value::from(c.kind.to_string()),
                    Value::from(id.to_string()),
                    Value::from(*w.numer()),
                    Value::from(*w.denom()),
                    Value::from(c.pattern.weight_f64(id)),
                ]
            })
        })
        .collect()
}

/// Write a table through a temporary file so readers never see a partial export.
pub fn write_table_file(path: &Path, rows: &[Vec<Value>], schema: &Schema) -> Result<(), FormatError> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        export_table(rows, schema, &mut file)?;
        std::io::Write::flush(&mut file)?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::read_table;

    #[test]
    fn curves_round_trip_through_text() {
        let curves = vec![RecruitmentCurve {
            muscle: MuscleId::Pt,
            config: StimKind::Str(2),
            scope: NormalizationScope::Global,
            normalizable: true,
            points: vec![
                RecruitmentPoint { amplitude_ua: 150.0, mean_p2p_uv: 0.1 + 0.2, normalized: 1.0 / 3.0 },
                RecruitmentPoint { amplitude_ua: 159.0, mean_p2p_uv: 1e-300, normalized: 1.0 },
            ],
        }];
        let mut buf = Vec::new();
        export_table(&curve_rows(&curves), &curve_schema(), &mut buf).unwrap();
        let rows = read_table(buf.as_slice(), &curve_schema()).unwrap();
        assert_eq!(curves_from_rows(&rows).unwrap(), curves);
    }

    #[test]
    fn pattern_rows_are_exact() {
        let rows = pattern_rows(&[StimConfig::str(2).unwrap()]);
        assert_eq!(rows.len(), 8);
        let c5 = rows.iter().find(|r| r[1] == Value::from("C5")).unwrap();
        assert_eq!((&c5[2], &c5[3]), (&Value::Int(1), &Value::Int(3)));
        let c2 = rows.iter().find(|r| r[1] == Value::from("C2")).unwrap();
        assert_eq!(c2[2], Value::Int(-1));
    }

    #[test]
    fn correspondence_rows_cover_all_kinds() {
        let c = SectionCorrespondence {
            matches: vec![("a".into(), "a".into())],
            splits: vec![("b".into(), ["b1".into(), "b2".into()])],
            unmatched_a: vec!["c".into()],
            unmatched_b: vec!["d".into()],
        };
        let rows = correspondence_rows(&c);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows.iter().filter(|r| r[0] == Value::from("split")).count(), 2);
    }
}
