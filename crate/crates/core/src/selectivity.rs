//! Selectivity indices, the polar recruitment map and exhaustive searches for the
//! most selective (configuration, intensity) cells.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dsp::{NormalizationScope, RecruitmentCurve};
use crate::electrode::{StimConfig, StimKind};
use crate::error::{Error, Result};
use crate::muscle::MuscleId;
use crate::sim::{recruitment_from_drive, NerveModel};

/// Total recruitment at or below this is treated as "nothing activated".
pub const ACTIVATION_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Selectivity {
    Defined(f64),
    NoActivation,
}

impl Selectivity {
    pub fn value(self) -> Option<f64> {
        match self {
            Selectivity::Defined(v) => Some(v),
            Selectivity::NoActivation => None,
        }
    }
}

/// Share of the summed recruitment that belongs to `target`.
pub fn selectivity_index(recruitments: &BTreeMap<MuscleId, f64>, target: &MuscleId) -> Result<Selectivity> {
    let Some(&own) = recruitments.get(target) else {
        return Err(Error::domain(format!("no recruitment value for target muscle {target}")));
    };
    if let Some((m, v)) = recruitments.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::domain(format!("recruitment of {m} is {v}; expected a non-negative number")));
    }
    let total: f64 = recruitments.values().sum();
    if total <= ACTIVATION_EPSILON {
        return Ok(Selectivity::NoActivation);
    }
    Ok(Selectivity::Defined((own / total).clamp(0.0, 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    #[serde(rename = "intensity_uA")]
    pub intensity_ua: f64,
    pub config: StimKind,
    pub angle_deg: f64,
    pub muscle: MuscleId,
    /// Normalized recruitment as stored; the plotted radius is derived on demand.
    pub recruitment: f64,
}

impl PolarPoint {
    /// Full recruitment sits at the centre, none on the unit circle.
    pub fn radius(&self) -> f64 {
        radius_from_recruitment(self.recruitment)
    }
}

pub fn radius_from_recruitment(recruitment: f64) -> f64 {
    1.0 - recruitment
}

pub fn recruitment_from_radius(radius: f64) -> f64 {
    1.0 - radius
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarMap {
    pub scope: NormalizationScope,
    /// Intensities present for every steering configuration, ascending.
    #[serde(rename = "intensities_uA")]
    pub intensities_ua: Vec<f64>,
    pub muscles: Vec<MuscleId>,
    /// Ordered by intensity, then muscle, then configuration.
    pub points: Vec<PolarPoint>,
}

impl PolarMap {
    /// `(angle_deg, radius)` around the circle for one muscle at one intensity.
    pub fn polyline(&self, intensity_ua: f64, muscle: &MuscleId) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.intensity_ua == intensity_ua && &p.muscle == muscle)
            .map(|p| (p.angle_deg, p.radius()))
            .collect()
    }
}

/// Project steering-configuration curves onto the polar map. Ring curves are ignored.
pub fn build_polar_map(curves: &[RecruitmentCurve]) -> Result<PolarMap> {
    let steering: Vec<&RecruitmentCurve> = curves.iter().filter(|c| matches!(c.config, StimKind::Str(_))).collect();
    let Some(first) = steering.first() else {
        return Err(Error::domain("polar map needs at least one steering (STR) curve"));
    };
    let scope = first.scope;
    if steering.iter().any(|c| c.scope != scope) {
        return Err(Error::domain("curves mix normalization scopes"));
    }

    let mut per_config: BTreeMap<StimKind, BTreeSet<u64>> = BTreeMap::new();
    for c in &steering {
        per_config.entry(c.config).or_default().extend(c.points.iter().map(|p| p.amplitude_ua.to_bits()));
    }
    let mut common: Option<BTreeSet<u64>> = None;
    for set in per_config.values() {
        common = Some(match common {
            None => set.clone(),
            Some(acc) => acc.intersection(set).copied().collect(),
        });
    }
    let mut intensities: Vec<f64> = common.unwrap_or_default().into_iter().map(f64::from_bits).collect();
    intensities.sort_by(f64::total_cmp);
    if intensities.is_empty() {
        return Err(Error::domain("steering curves share no common intensity"));
    }

    let muscles: Vec<MuscleId> = steering.iter().map(|c| c.muscle.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut points = Vec::new();
    for &intensity in &intensities {
        for muscle in &muscles {
            let mut row: Vec<&RecruitmentCurve> = steering.iter().copied().filter(|c| &c.muscle == muscle).collect();
            row.sort_by_key(|c| c.config.index());
            for c in row {
                if let Some(p) = c.points.iter().find(|p| p.amplitude_ua == intensity) {
                    points.push(PolarPoint {
                        intensity_ua: intensity,
                        config: c.config,
                        angle_deg: c.config.polar_angle_deg().expect("steering config has an angle"),
                        muscle: muscle.clone(),
                        recruitment: p.normalized,
                    });
                }
            }
        }
    }
    Ok(PolarMap { scope, intensities_ua: intensities, muscles, points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectivityRecord {
    pub config: StimKind,
    #[serde(rename = "amplitude_uA")]
    pub amplitude_ua: f64,
    pub target: MuscleId,
    pub selectivity_index: f64,
    pub target_recruitment: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectivityConstraints {
    pub min_target_recruitment: f64,
    pub max_offtarget_recruitment: f64,
}

impl Default for SelectivityConstraints {
    fn default() -> Self {
        SelectivityConstraints { min_target_recruitment: 0.0, max_offtarget_recruitment: 1.0 }
    }
}

/// Anything that can report per-muscle recruitment over a discrete
/// (configuration, amplitude) grid.
pub trait RecruitmentGrid {
    fn configs(&self) -> Vec<StimKind>;
    fn amplitudes(&self, config: StimKind) -> Vec<f64>;
    fn recruitment(&self, config: StimKind, amplitude_ua: f64) -> Result<BTreeMap<MuscleId, f64>>;
}

/// Normalized recruitment curves viewed as a grid.
pub struct CurveGrid<'a> {
    curves: &'a [RecruitmentCurve],
}

impl<'a> CurveGrid<'a> {
    pub fn new(curves: &'a [RecruitmentCurve]) -> Self {
        CurveGrid { curves }
    }
}

impl RecruitmentGrid for CurveGrid<'_> {
    fn configs(&self) -> Vec<StimKind> {
        let set: BTreeSet<StimKind> = self.curves.iter().map(|c| c.config).collect();
        let mut v: Vec<StimKind> = set.into_iter().collect();
        v.sort_by_key(|k| k.index());
        v
    }

    fn amplitudes(&self, config: StimKind) -> Vec<f64> {
        let bits: BTreeSet<u64> = self
            .curves
            .iter()
            .filter(|c| c.config == config)
            .flat_map(|c| c.points.iter().map(|p| p.amplitude_ua.to_bits()))
            .collect();
        let mut v: Vec<f64> = bits.into_iter().map(f64::from_bits).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    fn recruitment(&self, config: StimKind, amplitude_ua: f64) -> Result<BTreeMap<MuscleId, f64>> {
        let mut out = BTreeMap::new();
        for c in self.curves.iter().filter(|c| c.config == config) {
            if let Some(p) = c.points.iter().find(|p| p.amplitude_ua == amplitude_ua) {
                out.insert(c.muscle.clone(), p.normalized);
            }
        }
        Ok(out)
    }
}

/// The nerve simulator evaluated on a fixed grid. Field solutions are computed once per configuration.
pub struct SimulatorGrid<'a> {
    nerve: &'a NerveModel,
    amplitudes: Vec<f64>,
    drives: Vec<(StimKind, Vec<Vec<f64>>)>,
}

impl<'a> SimulatorGrid<'a> {
    pub fn new(nerve: &'a NerveModel, configs: &[StimConfig], amplitudes: &[f64]) -> Result<Self> {
        if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::domain("grid amplitudes must be non-negative"));
        }
        let drives = configs.iter().map(|c| Ok((c.kind, nerve.unit_drive(&c.pattern)?))).collect::<Result<_>>()?;
        Ok(SimulatorGrid { nerve, amplitudes: amplitudes.to_vec(), drives })
    }
}

impl RecruitmentGrid for SimulatorGrid<'_> {
    fn configs(&self) -> Vec<StimKind> {
        self.drives.iter().map(|(k, _)| *k).collect()
    }

    fn amplitudes(&self, _config: StimKind) -> Vec<f64> {
        self.amplitudes.clone()
    }

    fn recruitment(&self, config: StimKind, amplitude_ua: f64) -> Result<BTreeMap<MuscleId, f64>> {
        let (_, drive) = self
            .drives
            .iter()
            .find(|(k, _)| *k == config)
            .ok_or_else(|| Error::domain(format!("configuration {config} is not part of this grid")))?;
        Ok(recruitment_from_drive(self.nerve, drive, amplitude_ua))
    }
}

/// Every feasible cell of the grid, most selective first. Ties go to the lower
/// amplitude, then the lower configuration index.
pub fn find_selective_points(
    grid: &dyn RecruitmentGrid,
    target: &MuscleId,
    constraints: SelectivityConstraints,
) -> Result<Vec<SelectivityRecord>> {
    let configs = grid.configs();
    if configs.is_empty() {
        return Err(Error::domain("no configuration has been evaluated"));
    }
    let mut out = Vec::new();
    for config in configs {
        for amplitude in grid.amplitudes(config) {
            let r = grid.recruitment(config, amplitude)?;
            if !r.contains_key(target) {
                continue;
            }
            let Selectivity::Defined(si) = selectivity_index(&r, target)? else {
                continue;
            };
            let own = r[target];
            let off_ok = r.iter().filter(|(m, _)| *m != target).all(|(_, &v)| v <= constraints.max_offtarget_recruitment);
            if own >= constraints.min_target_recruitment && off_ok {
                out.push(SelectivityRecord {
                    config,
                    amplitude_ua: amplitude,
                    target: target.clone(),
                    selectivity_index: si,
                    target_recruitment: own,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.selectivity_index
            .total_cmp(&a.selectivity_index)
            .then(a.amplitude_ua.total_cmp(&b.amplitude_ua))
            .then(a.config.index().cmp(&b.config.index()))
    });
    Ok(out)
}
