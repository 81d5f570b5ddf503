//! Fascicle sections from annotated histology: loading, inter-section matching with
//! split detection, motor-fiber statistics and conversion into a simulator model.
//!
//! Fascicles are circles of equal area around their centroid; the optional contour
//! is carried through but not used for geometry.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::electrode::CuffLayout;
use crate::error::{Error, Result};
use crate::formats::{parse_json, FormatError};
use crate::sim::{Fiber, FascicleFibers, MuscleAssignment, NerveModel, ThresholdDistribution, DEFAULT_CONDUCTIVITY_S_PER_M, NERVE_MODEL_VERSION};

pub const DEFAULT_MATCH_RADIUS_UM: f64 = 150.0;
pub const DEFAULT_SPLIT_AREA_TOLERANCE: f64 = 0.30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fascicle {
    pub id: String,
    pub centroid_um: [f64; 2],
    pub area_um2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motor_fiber_count: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour_um: Option<Vec<[f64; 2]>>,
}

impl Fascicle {
    pub fn equivalent_radius_um(&self) -> f64 {
        (self.area_um2 / PI).sqrt()
    }

    fn distance_to(&self, other: &Fascicle) -> f64 {
        (self.centroid_um[0] - other.centroid_um[0]).hypot(self.centroid_um[1] - other.centroid_um[1])
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.centroid_um[0]).hypot(p[1] - self.centroid_um[1]) < self.equivalent_radius_um()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FascicleSection {
    /// Longitudinal position of the cut.
    pub z_um: f64,
    pub fascicles: Vec<Fascicle>,
}

impl FascicleSection {
    pub fn fascicle(&self, id: &str) -> Option<&Fascicle> {
        self.fascicles.iter().find(|f| f.id == id)
    }

    pub fn len(&self) -> usize {
        self.fascicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fascicles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        check_section(self, "section").map_err(|e| Error::domain(e.to_string()))
    }
}

fn check_section(section: &FascicleSection, source: &str) -> std::result::Result<(), FormatError> {
    let mut ids = HashSet::new();
    let mut centroids = HashSet::new();
    for (i, f) in section.fascicles.iter().enumerate() {
        let at = |field: &str| format!("{source}: fascicles[{i}].{field}");
        if !ids.insert(f.id.as_str()) {
            return Err(FormatError::Parse { location: at("id"), message: format!("duplicate fascicle id `{}`", f.id) });
        }
        if !(f.area_um2.is_finite() && f.area_um2 > 0.0) {
            return Err(FormatError::Parse { location: at("area_um2"), message: format!("area must be positive, got {}", f.area_um2) });
        }
        if !f.centroid_um.iter().all(|c| c.is_finite()) {
            return Err(FormatError::Parse { location: at("centroid_um"), message: "centroid must be finite".into() });
        }
        if !centroids.insert((f.centroid_um[0].to_bits(), f.centroid_um[1].to_bits())) {
            return Err(FormatError::Parse { location: at("centroid_um"), message: "centroid coincides with another fascicle".into() });
        }
        if let Some(c) = f.motor_fiber_count {
            if !(c.is_finite() && c >= 0.0) {
                return Err(FormatError::Parse { location: at("motor_fiber_count"), message: "count must be non-negative".into() });
            }
        }
    }
    Ok(())
}

pub fn parse_section(text: &str, source: &str) -> std::result::Result<FascicleSection, FormatError> {
    let section: FascicleSection = parse_json(text, source)?;
    check_section(&section, source)?;
    Ok(section)
}

/// Read and validate a section file.
pub fn load_section(path: &Path) -> std::result::Result<FascicleSection, FormatError> {
    let text = std::fs::read_to_string(path)?;
    parse_section(&text, &path.display().to_string())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SectionCorrespondence {
    pub matches: Vec<(String, String)>,
    pub splits: Vec<(String, [String; 2])>,
    pub unmatched_a: Vec<String>,
    pub unmatched_b: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchParams {
    pub radius_um: f64,
    /// Allowed relative deviation of the children's combined area from the parent's.
    pub split_area_tolerance: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams { radius_um: DEFAULT_MATCH_RADIUS_UM, split_area_tolerance: DEFAULT_SPLIT_AREA_TOLERANCE }
    }
}

/// Greedy nearest-centroid correspondence between two sections.
///
/// Pairs within `radius_um` are matched closest first. A matched A-fascicle is
/// re-labelled as a split when adding its nearest still-unmatched B neighbour brings
/// the combined area within tolerance and closer to its own area than the single match.
pub fn match_fascicles(a: &FascicleSection, b: &FascicleSection, params: MatchParams) -> Result<SectionCorrespondence> {
    if !(params.radius_um > 0.0) {
        return Err(Error::domain("matching radius must be positive"));
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, fa) in a.fascicles.iter().enumerate() {
        for (j, fb) in b.fascicles.iter().enumerate() {
            let d = fa.distance_to(fb);
            if d <= params.radius_um {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut a_match: Vec<Option<usize>> = vec![None; a.len()];
    let mut b_used = vec![false; b.len()];
    for &(_, i, j) in &pairs {
        if a_match[i].is_none() && !b_used[j] {
            a_match[i] = Some(j);
            b_used[j] = true;
        }
    }

    let mut split_child: Vec<Option<usize>> = vec![None; a.len()];
    for (i, fa) in a.fascicles.iter().enumerate() {
        let Some(j) = a_match[i] else { continue };
        let deviation = |area: f64| (area / fa.area_um2 - 1.0).abs();
        let single = deviation(b.fascicles[j].area_um2);
        let candidate = pairs
            .iter()
            .filter(|&&(_, ai, bj)| ai == i && bj != j && !b_used[bj])
            .map(|&(_, _, bj)| bj)
            .next();
        if let Some(k) = candidate {
            let combined = deviation(b.fascicles[j].area_um2 + b.fascicles[k].area_um2);
            if combined <= params.split_area_tolerance && combined < single {
                split_child[i] = Some(k);
                b_used[k] = true;
            }
        }
    }

    let mut out = SectionCorrespondence::default();
    for (i, fa) in a.fascicles.iter().enumerate() {
        match (a_match[i], split_child[i]) {
            (Some(j), Some(k)) => {
                let (first, second) = if j < k { (j, k) } else { (k, j) };
                out.splits.push((fa.id.clone(), [b.fascicles[first].id.clone(), b.fascicles[second].id.clone()]));
            }
            (Some(j), None) => out.matches.push((fa.id.clone(), b.fascicles[j].id.clone())),
            (None, _) => out.unmatched_a.push(fa.id.clone()),
        }
    }
    out.unmatched_b = b.fascicles.iter().zip(&b_used).filter(|(_, used)| !**used).map(|(f, _)| f.id.clone()).collect();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEntry {
    pub id: String,
    pub motor_fiber_count: f64,
    pub area_um2: f64,
    /// Fibers per mm².
    pub density_per_mm2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FiberStats {
    Available {
        /// Descending density order.
        ranking: Vec<DensityEntry>,
        total_fibers: f64,
        max_density_per_mm2: f64,
        /// Normalized Gini coefficient of densities: 0 for uniform, 1 when one fascicle holds everything.
        concentration_index: f64,
    },
    Unavailable { missing: Vec<String> },
}

pub fn motor_fiber_stats(section: &FascicleSection) -> FiberStats {
    let missing: Vec<String> =
        section.fascicles.iter().filter(|f| f.motor_fiber_count.is_none()).map(|f| f.id.clone()).collect();
    if !missing.is_empty() {
        return FiberStats::Unavailable { missing };
    }
    let mut ranking: Vec<DensityEntry> = section
        .fascicles
        .iter()
        .map(|f| {
            let count = f.motor_fiber_count.unwrap_or(0.0);
            DensityEntry { id: f.id.clone(), motor_fiber_count: count, area_um2: f.area_um2, density_per_mm2: count / f.area_um2 * 1e6 }
        })
        .collect();
    ranking.sort_by(|x, y| y.density_per_mm2.total_cmp(&x.density_per_mm2).then_with(|| x.id.cmp(&y.id)));
    let densities: Vec<f64> = ranking.iter().map(|e| e.density_per_mm2).collect();
    FiberStats::Available {
        total_fibers: ranking.iter().map(|e| e.motor_fiber_count).sum(),
        max_density_per_mm2: densities.first().copied().unwrap_or(0.0),
        concentration_index: normalized_gini(&densities),
        ranking,
    }
}

fn normalized_gini(values: &[f64]) -> f64 {
    let n = values.len();
    let sum: f64 = values.iter().sum();
    if n < 2 || sum <= 0.0 {
        return 0.0;
    }
    let mut abs_diff = 0.0;
    for x in values {
        for y in values {
            abs_diff += (x - y).abs();
        }
    }
    let gini = abs_diff / (2.0 * n as f64 * sum);
    (gini * n as f64 / (n - 1) as f64).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    /// Simulated fibers per counted motor fiber.
    pub fibers_per_count: f64,
    pub thresholds: ThresholdDistribution,
    #[serde(default)]
    pub per_fascicle_thresholds: BTreeMap<String, ThresholdDistribution>,
    pub conductivity_s_per_m: f64,
    pub layout: CuffLayout,
}

impl Default for FiberParams {
    fn default() -> Self {
        FiberParams {
            fibers_per_count: 1.0,
            thresholds: ThresholdDistribution::default(),
            per_fascicle_thresholds: BTreeMap::new(),
            conductivity_s_per_m: DEFAULT_CONDUCTIVITY_S_PER_M,
            layout: CuffLayout::default(),
        }
    }
}

/// Sample simulator fibers inside every fascicle, in proportion to its motor-fiber count.
pub fn section_to_nerve_model(
    section: &FascicleSection,
    muscle_assignment: &BTreeMap<String, MuscleAssignment>,
    params: &FiberParams,
    seed: u64,
) -> Result<NerveModel> {
    section.validate()?;
    for id in muscle_assignment.keys() {
        if section.fascicle(id).is_none() {
            return Err(Error::domain(format!("assignment references missing fascicle `{id}`")));
        }
    }
    if !(params.fibers_per_count.is_finite() && params.fibers_per_count >= 0.0) {
        return Err(Error::domain("fibers_per_count must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fibers = Vec::with_capacity(section.len());
    for f in &section.fascicles {
        let thresholds = params.per_fascicle_thresholds.get(&f.id).unwrap_or(&params.thresholds).clone();
        if !(thresholds.median_v > 0.0 && thresholds.sigma_ln >= 0.0) {
            return Err(Error::domain(format!("bad threshold distribution for `{}`", f.id)));
        }
        let n = (f.motor_fiber_count.unwrap_or(0.0) * params.fibers_per_count).round() as usize;
        let radius = f.equivalent_radius_um();
        let group: Vec<Fiber> = (0..n)
            .map(|_| {
                // uniform over the disc; u < 1 keeps the point strictly inside
                let u: f64 = rng.random();
                let theta: f64 = rng.random::<f64>() * 2.0 * PI;
                let r = radius * u.sqrt();
                let z: f64 = StandardNormal.sample(&mut rng);
                Fiber {
                    position_um: [f.centroid_um[0] + r * theta.cos(), f.centroid_um[1] + r * theta.sin()],
                    threshold_v: thresholds.median_v * (thresholds.sigma_ln * z).exp(),
                }
            })
            .filter(|fiber| f.contains(fiber.position_um))
            .collect();
        fibers.push(FascicleFibers { fascicle_id: f.id.clone(), thresholds, fibers: group });
    }
    let model = NerveModel {
        format_version: NERVE_MODEL_VERSION,
        layout: params.layout.clone(),
        cross_section: section.clone(),
        conductivity_s_per_m: params.conductivity_s_per_m,
        fascicle_muscle_map: muscle_assignment.clone(),
        fibers,
        rng_seed: seed,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::muscle::MuscleId;

    fn fascicle(id: &str, x: f64, y: f64, area: f64, count: Option<f64>) -> Fascicle {
        Fascicle { id: id.into(), centroid_um: [x, y], area_um2: area, motor_fiber_count: count, contour_um: None }
    }

    fn ring_section(n: usize) -> FascicleSection {
        FascicleSection {
            z_um: 0.0,
            fascicles: (0..n)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / n as f64;
                    fascicle(&format!("F{i}"), 1000.0 * t.cos(), 1000.0 * t.sin(), 20_000.0, Some(50.0))
                })
                .collect(),
        }
    }

    #[test]
    fn identity_matching() {
        let s = ring_section(18);
        let c = match_fascicles(&s, &s, MatchParams::default()).unwrap();
        assert_eq!(c.matches.len(), 18);
        assert!(c.splits.is_empty() && c.unmatched_a.is_empty() && c.unmatched_b.is_empty());
        assert!(c.matches.iter().all(|(x, y)| x == y));
    }

    #[test]
    fn split_detected() {
        let a = ring_section(18);
        let mut b = a.clone();
        let parent = b.fascicles.remove(4);
        b.fascicles.push(fascicle("F4a", parent.centroid_um[0] + 10.0, parent.centroid_um[1], parent.area_um2 / 2.0, None));
        b.fascicles.push(fascicle("F4b", parent.centroid_um[0] - 10.0, parent.centroid_um[1], parent.area_um2 / 2.0, None));
        assert_eq!((a.len(), b.len()), (18, 19));
        let c = match_fascicles(&a, &b, MatchParams::default()).unwrap();
        assert_eq!(c.splits.len(), 1);
        assert_eq!(c.splits[0].0, "F4");
        assert_eq!(c.matches.len(), 17);
        assert!(c.unmatched_a.is_empty() && c.unmatched_b.is_empty());
    }

    #[test]
    fn distant_shift_leaves_everything_unmatched() {
        let a = ring_section(6);
        let mut b = a.clone();
        for f in &mut b.fascicles {
            f.centroid_um[0] += 1500.0;
            f.centroid_um[1] += 10.0 * DEFAULT_MATCH_RADIUS_UM;
        }
        let c = match_fascicles(&a, &b, MatchParams::default()).unwrap();
        assert!(c.matches.is_empty() && c.splits.is_empty());
        assert_eq!(c.unmatched_a.len(), 6);
        assert_eq!(c.unmatched_b.len(), 6);
    }

    #[test]
    fn bad_radius() {
        let s = ring_section(2);
        assert!(match_fascicles(&s, &s, MatchParams { radius_um: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn stats_concentration_extremes() {
        let one = FascicleSection {
            z_um: 0.0,
            fascicles: vec![fascicle("a", 0.0, 0.0, 1e4, Some(100.0)), fascicle("b", 300.0, 0.0, 1e4, Some(0.0)), fascicle("c", 600.0, 0.0, 1e4, Some(0.0))],
        };
        match motor_fiber_stats(&one) {
            FiberStats::Available { concentration_index, .. } => assert!((concentration_index - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let uniform = FascicleSection {
            z_um: 0.0,
            fascicles: vec![fascicle("a", 0.0, 0.0, 1e4, Some(10.0)), fascicle("b", 300.0, 0.0, 2e4, Some(20.0))],
        };
        match motor_fiber_stats(&uniform) {
            FiberStats::Available { concentration_index, .. } => assert_eq!(concentration_index, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stats_ranking_and_missing() {
        let s = FascicleSection {
            z_um: 0.0,
            fascicles: vec![fascicle("x", 0.0, 0.0, 1e4, Some(5.0)), fascicle("big", 300.0, 0.0, 1e4, Some(90.0)), fascicle("y", 600.0, 0.0, 1e4, Some(5.0))],
        };
        match motor_fiber_stats(&s) {
            FiberStats::Available { ranking, total_fibers, .. } => {
                assert_eq!(ranking[0].id, "big");
                assert_eq!(total_fibers, 100.0);
                let mut ids: Vec<_> = ranking.iter().map(|e| e.id.clone()).collect();
                ids.sort();
                assert_eq!(ids, vec!["big", "x", "y"]);
            }
            other => panic!("{other:?}"),
        }
        let mut missing = s.clone();
        missing.fascicles[1].motor_fiber_count = None;
        assert_eq!(motor_fiber_stats(&missing), FiberStats::Unavailable { missing: vec!["big".into()] });
    }

    #[test]
    fn loading_validates() {
        let ok = r#"{"z_um": 0, "fascicles": []}"#;
        assert!(parse_section(ok, "t").unwrap().is_empty());
        let dup = r#"{"z_um": 0, "fascicles": [
            {"id": "a", "centroid_um": [0, 0], "area_um2": 10},
            {"id": "a", "centroid_um": [5, 0], "area_um2": 10}]}"#;
        match parse_section(dup, "t") {
            Err(FormatError::Parse { location, .. }) => assert_eq!(location, "t: fascicles[1].id"),
            other => panic!("{other:?}"),
        }
        let neg = r#"{"z_um": 0, "fascicles": [{"id": "a", "centroid_um": [0, 0], "area_um2": -1}]}"#;
        assert!(matches!(parse_section(neg, "t"), Err(FormatError::Parse { .. })));
        assert!(matches!(parse_section("{", "t"), Err(FormatError::Parse { .. })));
    }

    #[test]
    fn fibers_scale_with_counts_and_stay_inside() {
        let s = FascicleSection {
            z_um: 0.0,
            fascicles: vec![fascicle("a", 0.0, 0.0, 5e4, Some(100.0)), fascicle("b", 500.0, 0.0, 5e4, Some(10.0))],
        };
        let map = BTreeMap::from([("a".to_string(), MuscleAssignment { muscle: MuscleId::Fcr, weight: 1.0 })]);
        let m = section_to_nerve_model(&s, &map, &FiberParams::default(), 5).unwrap();
        assert_eq!(m.fibers[0].fibers.len(), 100);
        assert_eq!(m.fibers[1].fibers.len(), 10);
        for (g, f) in m.fibers.iter().zip(&s.fascicles) {
            assert!(g.fibers.iter().all(|fb| f.contains(fb.position_um)));
        }
        assert_eq!(m, section_to_nerve_model(&s, &map, &FiberParams::default(), 5).unwrap());
        let bad = BTreeMap::from([("zz".to_string(), MuscleAssignment { muscle: MuscleId::Fcr, weight: 1.0 })]);
        assert!(section_to_nerve_model(&s, &bad, &FiberParams::default(), 5).is_err());
        let mut empty = s.clone();
        empty.fascicles.iter_mut().for_each(|f| f.motor_fiber_count = Some(0.0));
        assert_eq!(section_to_nerve_model(&empty, &map, &FiberParams::default(), 5).unwrap().fiber_count(), 0);
    }
}
