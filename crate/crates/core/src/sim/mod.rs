//! Synthetic nerve used in place of the animal.
//!
//! Contacts are current sources in a homogeneous isotropic medium: central contacts
//! as points, end rings as uniformly charged circles. A fiber fires when the
//! depolarizing (negative-going) extracellular potential at its position in the
//! central plane reaches its threshold. This is a threshold model, not a cable
//! model; it keeps recruitment exactly monotone in current.

pub(crate) mod synth;

pub use synth::{simulated_truth, synthesize_recording, MWaveTemplate, SynthOptions, TruthRow};

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::electrode::{ContactId, CuffLayout, CurrentPattern, Point3, StimConfig};
use crate::error::{Error, Result};
use crate::histology::FascicleSection;
use crate::muscle::MuscleId;

pub const MIN_CLEARANCE_UM: f64 = 1.0;
pub const DEFAULT_CONDUCTIVITY_S_PER_M: f64 = 0.3;
pub const NERVE_MODEL_VERSION: u32 = 1;

/// Complete elliptic integral of the first kind, parameter `m = k²`.
fn elliptic_k(m: f64) -> f64 {
    let (mut a, mut b) = (1.0f64, (1.0 - m).sqrt());
    while (a - b).abs() > 1e-15 * a {
        let next = (a + b) / 2.0;
        b = (a * b).sqrt();
        a = next;
    }
    PI / (2.0 * a)
}

/// Potential (V per µA·S/m scale) of a unit source at `contact`, seen at `point`.
/// Returns `1 / (4π r_eff)` in 1/µm; multiply by `I[µA] / σ` for volts.
fn unit_geometry(layout: &CuffLayout, contact: ContactId, point: &Point3) -> Result<f64> {
    match contact {
        ContactId::Central(_) => {
            let c = layout.contact_position(contact)?;
            let r = c.distance(point);
            if r < MIN_CLEARANCE_UM {
                return Err(Error::domain(format!("field point within {r:.3} µm of contact {contact}")));
            }
            Ok(1.0 / (4.0 * PI * r))
        }
        ring => {
            let radius = layout.radius_um();
            let dz = point.z - layout.ring_offset_um(ring).unwrap_or(0.0);
            let rho = point.x.hypot(point.y);
            let clearance = (radius - rho).hypot(dz);
            if clearance < MIN_CLEARANCE_UM {
                return Err(Error::domain(format!("field point within {clearance:.3} µm of {ring}")));
            }
            let denom_sq = (radius + rho).powi(2) + dz * dz;
            let m = 4.0 * radius * rho / denom_sq;
            Ok(2.0 / PI * elliptic_k(m) / (4.0 * PI * denom_sq.sqrt()))
        }
    }
}

/// Extracellular potential in volts: `Σ_c w_c I / (4πσ r_c)` over contacts with
/// nonzero weight, with rings integrated around their circumference.
///
/// Units cancel conveniently: µA over µm gives A over m.
pub fn potential_at(
    point: Point3,
    pattern: &CurrentPattern,
    total_current_ua: f64,
    layout: &CuffLayout,
    conductivity_s_per_m: f64,
) -> Result<f64> {
    if !(conductivity_s_per_m > 0.0) {
        return Err(Error::domain("conductivity must be positive"));
    }
    let mut acc = 0.0;
    for (contact, _) in pattern.iter() {
        acc += pattern.weight_f64(contact) * unit_geometry(layout, contact, &point)?;
    }
    Ok(acc * total_current_ua / conductivity_s_per_m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fiber {
    pub position_um: [f64; 2],
    pub threshold_v: f64,
}

/// Log-normal threshold distribution: `median · exp(σ_ln · N(0,1))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDistribution {
    pub median_v: f64,
    pub sigma_ln: f64,
}

impl Default for ThresholdDistribution {
    fn default() -> Self {
        ThresholdDistribution { median_v: 0.1, sigma_ln: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FascicleFibers {
    pub fascicle_id: String,
    pub thresholds: ThresholdDistribution,
    pub fibers: Vec<Fiber>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuscleAssignment {
    pub muscle: MuscleId,
    pub weight: f64,
}

/// Nerve cross-section in the cuff frame: origin on the cuff axis, +x towards `C1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NerveModel {
    pub format_version: u32,
    pub layout: CuffLayout,
    pub cross_section: FascicleSection,
    pub conductivity_s_per_m: f64,
    pub fascicle_muscle_map: BTreeMap<String, MuscleAssignment>,
    pub fibers: Vec<FascicleFibers>,
    pub rng_seed: u64,
}

impl NerveModel {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.cross_section.validate()?;
        if !(self.conductivity_s_per_m.is_finite() && self.conductivity_s_per_m > 0.0) {
            return Err(Error::domain("conductivity must be positive"));
        }
        for (id, a) in &self.fascicle_muscle_map {
            if self.cross_section.fascicle(id).is_none() {
                return Err(Error::domain(format!("muscle map references missing fascicle `{id}`")));
            }
            if !(a.weight.is_finite() && a.weight >= 0.0) {
                return Err(Error::domain(format!("fascicle `{id}` has a negative mapping weight")));
            }
        }
        for group in &self.fibers {
            let fascicle = self
                .cross_section
                .fascicle(&group.fascicle_id)
                .ok_or_else(|| Error::domain(format!("fibers reference missing fascicle `{}`", group.fascicle_id)))?;
            let radius = fascicle.equivalent_radius_um();
            for (i, f) in group.fibers.iter().enumerate() {
                if !(f.threshold_v.is_finite() && f.threshold_v > 0.0) {
                    return Err(Error::domain(format!("fiber {i} of `{}` has non-positive threshold", group.fascicle_id)));
                }
                let d = (f.position_um[0] - fascicle.centroid_um[0]).hypot(f.position_um[1] - fascicle.centroid_um[1]);
                if d >= radius {
                    return Err(Error::domain(format!("fiber {i} lies outside fascicle `{}`", group.fascicle_id)));
                }
            }
        }
        Ok(())
    }

    /// Muscles reached by at least one mapped fascicle, sorted.
    pub fn muscles(&self) -> Vec<MuscleId> {
        let set: BTreeSet<MuscleId> = self.fascicle_muscle_map.values().map(|a| a.muscle.clone()).collect();
        set.into_iter().collect()
    }

    pub fn fiber_count(&self) -> usize {
        self.fibers.iter().map(|g| g.fibers.len()).sum()
    }

    /// Rotate every fascicle and fiber about the cuff axis by `degrees`.
    pub fn rotated(&self, degrees: f64) -> NerveModel {
        let (s, c) = degrees.to_radians().sin_cos();
        let rot = |p: [f64; 2]| [c * p[0] - s * p[1], s * p[0] + c * p[1]];
        let mut out = self.clone();
        for f in &mut out.cross_section.fascicles {
            f.centroid_um = rot(f.centroid_um);
            if let Some(contour) = &mut f.contour_um {
                contour.iter_mut().for_each(|p| *p = rot(*p));
            }
        }
        for g in &mut out.fibers {
            g.fibers.iter_mut().for_each(|f| f.position_um = rot(f.position_um));
        }
        out
    }

    /// Depolarizing drive (−V, volts) at every fiber for a unit (1 µA) stimulus,
    /// grouped like `self.fibers`.
    pub fn unit_drive(&self, pattern: &CurrentPattern) -> Result<Vec<Vec<f64>>> {
        self.fibers
            .iter()
            .map(|g| {
                g.fibers
                    .iter()
                    .map(|f| {
                        let p = Point3::new(f.position_um[0], f.position_um[1], 0.0);
                        Ok(-potential_at(p, pattern, 1.0, &self.layout, self.conductivity_s_per_m)?)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Fraction of each muscle's (weighted) motor fibers activated by `config` at `current_ua`.
pub fn simulate_recruitment(nerve: &NerveModel, config: &StimConfig, current_ua: f64) -> Result<BTreeMap<MuscleId, f64>> {
    if !(current_ua.is_finite() && current_ua >= 0.0) {
        return Err(Error::domain("stimulation current must be non-negative"));
    }
    let drive = nerve.unit_drive(&config.pattern)?;
    Ok(recruitment_from_drive(nerve, &drive, current_ua))
}

pub(crate) fn recruitment_from_drive(nerve: &NerveModel, drive: &[Vec<f64>], current_ua: f64) -> BTreeMap<MuscleId, f64> {
    let mut active: BTreeMap<MuscleId, f64> = BTreeMap::new();
    let mut total: BTreeMap<MuscleId, f64> = BTreeMap::new();
    for m in nerve.muscles() {
        active.insert(m.clone(), 0.0);
        total.insert(m, 0.0);
    }
    for (group, unit) in nerve.fibers.iter().zip(drive) {
        let Some(assign) = nerve.fascicle_muscle_map.get(&group.fascicle_id) else {
            continue;
        };
        let fired = group.fibers.iter().zip(unit).filter(|(f, &u)| u * current_ua >= f.threshold_v).count();
        *active.get_mut(&assign.muscle).expect("muscle listed") += assign.weight * fired as f64;
        *total.get_mut(&assign.muscle).expect("muscle listed") += assign.weight * group.fibers.len() as f64;
    }
    active
        .into_iter()
        .map(|(m, a)| {
            let t = total[&m];
            (m, if t > 0.0 { (a / t).min(1.0) } else { 0.0 })
        })
        .collect()
}
