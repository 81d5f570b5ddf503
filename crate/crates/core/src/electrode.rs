//! Cuff geometry and the seven stimulation configurations.
//!
//! The cuff carries two circumferential end rings and six central contacts
//! spaced 60° apart. A configuration is a charge-balanced set of per-contact
//! current fractions, kept as exact rationals so that `Σ weights = 0` holds
//! without tolerance.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CENTRAL_CONTACTS: u8 = 6;
const CENTRAL_SPACING_DEG: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ContactId {
    RingDistal,
    RingProximal,
    /// Central contact `k` in `1..=6`, numbered around the circumference.
    Central(u8),
}

impl ContactId {
    pub fn central(k: u8) -> Result<Self> {
        check_central_index(k)?;
        Ok(ContactId::Central(k))
    }

    /// All eight contacts of a cuff, rings first.
    pub fn all() -> [ContactId; 8] {
        [
            ContactId::RingDistal,
            ContactId::RingProximal,
            ContactId::Central(1),
            ContactId::Central(2),
            ContactId::Central(3),
            ContactId::Central(4),
            ContactId::Central(5),
            ContactId::Central(6),
        ]
    }

    pub fn is_ring(self) -> bool {
        matches!(self, ContactId::RingDistal | ContactId::RingProximal)
    }
}

impl fmt::Display for ContactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContactId::RingDistal => f.write_str("ring_distal"),
            ContactId::RingProximal => f.write_str("ring_proximal"),
            ContactId::Central(k) => write!(f, "C{k}"),
        }
    }
}

impl FromStr for ContactId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring_distal" => Ok(ContactId::RingDistal),
            "ring_proximal" => Ok(ContactId::RingProximal),
            _ => {
                let k = s
                    .strip_prefix('C')
                    .and_then(|n| n.parse::<u8>().ok())
                    .ok_or_else(|| Error::domain(format!("unknown contact `{s}`")))?;
                ContactId::central(k)
            }
        }
    }
}

impl TryFrom<String> for ContactId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ContactId> for String {
    fn from(c: ContactId) -> String {
        c.to_string()
    }
}

fn check_central_index(k: u8) -> Result<()> {
    if (1..=CENTRAL_CONTACTS).contains(&k) {
        Ok(())
    } else {
        Err(Error::domain(format!("central contact index {k} outside 1..=6")))
    }
}

/// Index of the central contact diametrically opposite `k`.
pub fn opposite(k: u8) -> u8 {
    ((k + 2) % CENTRAL_CONTACTS) + 1
}

/// Next central contact going around the cuff (6 wraps to 1).
pub fn rotate_index(k: u8) -> u8 {
    k % CENTRAL_CONTACTS + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }
}

/// Cuff geometry. Angles are measured in the cross-section plane from the +x axis,
/// axial offsets along +z (distal positive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuffLayout {
    pub inner_diameter_um: f64,
    /// Angle of `Central(k)` at index `k - 1`.
    pub central_angles_deg: [f64; 6],
    pub ring_distal_offset_um: f64,
    pub ring_proximal_offset_um: f64,
}

impl Default for CuffLayout {
    fn default() -> Self {
        CuffLayout::new(3000.0, 4000.0)
    }
}

impl CuffLayout {
    /// Evenly spaced layout with rings at `±ring_offset_um`.
    pub fn new(inner_diameter_um: f64, ring_offset_um: f64) -> Self {
        let mut central_angles_deg = [0.0; 6];
        for (i, a) in central_angles_deg.iter_mut().enumerate() {
            *a = i as f64 * CENTRAL_SPACING_DEG;
        }
        CuffLayout {
            inner_diameter_um,
            central_angles_deg,
            ring_distal_offset_um: ring_offset_um,
            ring_proximal_offset_um: -ring_offset_um,
        }
    }

    pub fn radius_um(&self) -> f64 {
        self.inner_diameter_um / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inner_diameter_um.is_finite() && self.inner_diameter_um > 0.0) {
            return Err(Error::domain("cuff diameter must be positive"));
        }
        for (i, &a) in self.central_angles_deg.iter().enumerate() {
            let expected = i as f64 * CENTRAL_SPACING_DEG;
            if (a.rem_euclid(360.0) - expected).abs() > 1e-9 {
                return Err(Error::domain(format!(
                    "central contact C{} at {a}°, expected {expected}°",
                    i + 1
                )));
            }
        }
        if (self.ring_distal_offset_um + self.ring_proximal_offset_um).abs() > 1e-9
            || self.ring_distal_offset_um <= 0.0
        {
            return Err(Error::domain(
                "ring offsets must be symmetric about the central plane",
            ));
        }
        Ok(())
    }

    pub fn ring_offset_um(&self, id: ContactId) -> Option<f64> {
        match id {
            ContactId::RingDistal => Some(self.ring_distal_offset_um),
            ContactId::RingProximal => Some(self.ring_proximal_offset_um),
            ContactId::Central(_) => None,
        }
    }

    /// Point on the cuff cylinder for a contact. Rings report their point at angle 0;
    /// the field model treats them as full circles.
    pub fn contact_position(&self, id: ContactId) -> Result<Point3> {
        let r = self.radius_um();
        match id {
            ContactId::Central(k) => {
                check_central_index(k)?;
                let theta = self.central_angles_deg[usize::from(k - 1)].to_radians();
                Ok(Point3::new(r * theta.cos(), r * theta.sin(), 0.0))
            }
            ring => Ok(Point3::new(r, 0.0, self.ring_offset_um(ring).unwrap_or(0.0))),
        }
    }
}

/// Signed per-contact fractions of the total stimulation current (cathodic negative).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurrentPattern {
    weights: BTreeMap<ContactId, Rational64>,
}

impl CurrentPattern {
    /// Build a pattern, dropping zero entries. Fails unless the weights sum to zero.
    pub fn new(weights: impl IntoIterator<Item = (ContactId, Rational64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, w) in weights {
            if let ContactId::Central(k) = id {
                check_central_index(k)?;
            }
            if map.insert(id, w).is_some() {
                return Err(Error::domain(format!("contact {id} listed twice")));
            }
        }
        map.retain(|_, w| !w.is_zero());
        let pattern = CurrentPattern { weights: map };
        if !pattern.sum().is_zero() {
            return Err(Error::domain(format!(
                "pattern is not charge balanced (sum = {})",
                pattern.sum()
            )));
        }
        Ok(pattern)
    }

    pub fn weight(&self, id: ContactId) -> Rational64 {
        self.weights.get(&id).copied().unwrap_or_else(Rational64::zero)
    }

    pub fn weight_f64(&self, id: ContactId) -> f64 {
        self.weight(id).to_f64().unwrap_or(0.0)
    }

    pub fn sum(&self) -> Rational64 {
        self.weights.values().sum()
    }

    /// Nonzero weights in contact order.
    pub fn iter(&self) -> impl Iterator<Item = (ContactId, Rational64)> + '_ {
        self.weights.iter().map(|(&id, &w)| (id, w))
    }

    pub fn cathodes(&self) -> impl Iterator<Item = ContactId> + '_ {
        self.iter().filter(|(_, w)| w.is_negative()).map(|(id, _)| id)
    }

    /// Relabel every central contact `k` as `k + 1` (mod 6). Rings are unchanged.
    pub fn rotated(&self) -> CurrentPattern {
        let weights = self
            .weights
            .iter()
            .map(|(&id, &w)| match id {
                ContactId::Central(k) => (ContactId::Central(rotate_index(k)), w),
                ring => (ring, w),
            })
            .collect();
        CurrentPattern { weights }
    }

    /// All eight contacts with their weight as `(contact, numerator, denominator)`.
    pub fn table(&self) -> Vec<(ContactId, i64, i64)> {
        ContactId::all()
            .into_iter()
            .map(|id| {
                let w = self.weight(id);
                (id, *w.numer(), *w.denom())
            })
            .collect()
    }
}

/// Steering configuration with cathode on `Central(k)`: the anodic current is shared
/// in thirds between both rings and the opposite central contact.
pub fn make_str_pattern(k: u8) -> Result<CurrentPattern> {
    check_central_index(k)?;
    let third = Rational64::new(1, 3);
    CurrentPattern::new([
        (ContactId::Central(k), Rational64::from_integer(-1)),
        (ContactId::RingDistal, third),
        (ContactId::RingProximal, third),
        (ContactId::Central(opposite(k)), third),
    ])
}

/// Tripolar ring configuration: central contacts share the cathodic current equally,
/// the two rings share the anodic return.
pub fn make_ring_pattern() -> CurrentPattern {
    let sixth = Rational64::new(-1, 6);
    let half = Rational64::new(1, 2);
    let weights = (1..=CENTRAL_CONTACTS)
        .map(|k| (ContactId::Central(k), sixth))
        .chain([(ContactId::RingDistal, half), (ContactId::RingProximal, half)]);
    CurrentPattern::new(weights).expect("ring pattern is balanced")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StimKind {
    Ring,
    Str(u8),
}

impl StimKind {
    /// The seven configurations: ring, then STR1..STR6.
    pub fn all() -> Vec<StimKind> {
        std::iter::once(StimKind::Ring)
            .chain((1..=CENTRAL_CONTACTS).map(StimKind::Str))
            .collect()
    }

    /// Ordering key used for tie-breaking: ring is 0, STR k is k.
    pub fn index(self) -> u8 {
        match self {
            StimKind::Ring => 0,
            StimKind::Str(k) => k,
        }
    }

    /// Polar angle of an STR configuration (its cathode's angle); `None` for the ring.
    pub fn polar_angle_deg(self) -> Option<f64> {
        match self {
            StimKind::Ring => None,
            StimKind::Str(k) => Some(f64::from(k - 1) * CENTRAL_SPACING_DEG),
        }
    }

    pub fn pattern(self) -> Result<CurrentPattern> {
        match self {
            StimKind::Ring => Ok(make_ring_pattern()),
            StimKind::Str(k) => make_str_pattern(k),
        }
    }
}

impl fmt::Display for StimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StimKind::Ring => f.write_str("RING"),
            StimKind::Str(k) => write!(f, "STR{k}"),
        }
    }
}

impl FromStr for StimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        if upper == "RING" {
            return Ok(StimKind::Ring);
        }
        let k = upper
            .strip_prefix("STR")
            .and_then(|n| n.parse::<u8>().ok())
            .ok_or_else(|| Error::domain(format!("unknown configuration `{s}`")))?;
        check_central_index(k)?;
        Ok(StimKind::Str(k))
    }
}

impl TryFrom<String> for StimKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StimKind> for String {
    fn from(k: StimKind) -> String {
        k.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimConfig {
    pub kind: StimKind,
    pub pattern: CurrentPattern,
}

impl StimConfig {
    pub fn new(kind: StimKind) -> Result<Self> {
        Ok(StimConfig { kind, pattern: kind.pattern()? })
    }

    pub fn ring() -> Self {
        StimConfig { kind: StimKind::Ring, pattern: make_ring_pattern() }
    }

    pub fn str(k: u8) -> Result<Self> {
        StimConfig::new(StimKind::Str(k))
    }

    pub fn all() -> Vec<StimConfig> {
        StimKind::all()
            .into_iter()
            .map(|k| StimConfig::new(k).expect("standard configuration"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn str2_uses_central5_as_anode() {
        let p = make_str_pattern(2).unwrap();
        assert_eq!(p.weight(ContactId::Central(2)), r(-1, 1));
        assert_eq!(p.weight(ContactId::RingDistal), r(1, 3));
        assert_eq!(p.weight(ContactId::RingProximal), r(1, 3));
        assert_eq!(p.weight(ContactId::Central(5)), r(1, 3));
        for k in [1, 3, 4, 6] {
            assert!(p.weight(ContactId::Central(k)).is_zero());
        }
    }

    #[test]
    fn opposite_contacts() {
        assert_eq!(opposite(1), 4);
        assert_eq!(opposite(2), 5);
        assert_eq!(opposite(3), 6);
        assert_eq!(opposite(4), 1);
        assert_eq!(opposite(5), 2);
        assert_eq!(opposite(6), 3);
    }

    #[test]
    fn str_pattern_rejects_bad_index() {
        assert!(matches!(make_str_pattern(0), Err(Error::Domain(_))));
        assert!(matches!(make_str_pattern(7), Err(Error::Domain(_))));
    }

    #[test]
    fn every_configuration_is_balanced() {
        let all = StimConfig::all();
        assert_eq!(all.len(), 7);
        for c in &all {
            assert!(c.pattern.sum().is_zero(), "{}", c.kind);
        }
        let kinds: std::collections::BTreeSet<_> = all.iter().map(|c| c.kind).collect();
        assert_eq!(kinds.len(), 7);
    }

    #[test]
    fn str_patterns_have_single_unit_cathode() {
        for k in 1..=6 {
            let p = make_str_pattern(k).unwrap();
            let cathodes: Vec<_> = p.cathodes().collect();
            assert_eq!(cathodes, vec![ContactId::Central(k)]);
            assert_eq!(p.weight(ContactId::Central(k)), r(-1, 1));
            assert!(p.iter().filter(|(id, _)| *id != ContactId::Central(k)).all(|(_, w)| w > r(0, 1)));
        }
    }

    #[test]
    fn ring_pattern_composition() {
        let p = make_ring_pattern();
        for k in 1..=6 {
            assert_eq!(p.weight(ContactId::Central(k)), r(-1, 6));
        }
        assert_eq!(p.weight(ContactId::RingDistal), r(1, 2));
        assert_eq!(p.weight(ContactId::RingProximal), r(1, 2));
        // arithmetic oracle: 6 * (-1/6) + 2 * (1/2)
        assert_eq!(r(-1, 6) * 6 + r(1, 2) * 2, r(0, 1));
        assert_eq!(p.rotated(), p);
    }

    #[test]
    fn rotation_maps_str_k_to_next() {
        for k in 1..=6 {
            let rotated = make_str_pattern(k).unwrap().rotated();
            assert_eq!(rotated, make_str_pattern(rotate_index(k)).unwrap());
        }
    }

    #[test]
    fn opposite_configurations_mirror() {
        for k in 1..=6 {
            let a = make_str_pattern(k).unwrap();
            let b = make_str_pattern(opposite(k)).unwrap();
            assert_eq!(a.weight(ContactId::Central(k)), b.weight(ContactId::Central(opposite(k))));
            assert_eq!(a.weight(ContactId::Central(opposite(k))), b.weight(ContactId::Central(k)));
        }
    }

    #[test]
    fn unbalanced_pattern_rejected() {
        let err = CurrentPattern::new([(ContactId::Central(1), r(-1, 1)), (ContactId::RingDistal, r(1, 2))]);
        assert!(err.is_err());
    }

    #[test]
    fn contact_positions() {
        let layout = CuffLayout::default();
        let c1 = layout.contact_position(ContactId::Central(1)).unwrap();
        assert!((c1.x - 1500.0).abs() < 1e-9 && c1.y.abs() < 1e-9 && c1.z == 0.0);
        let c4 = layout.contact_position(ContactId::Central(4)).unwrap();
        assert!((c4.x + 1500.0).abs() < 1e-9 && c4.y.abs() < 1e-9);
        let rd = layout.contact_position(ContactId::RingDistal).unwrap();
        assert_eq!(rd.z, 4000.0);
        let rp = layout.contact_position(ContactId::RingProximal).unwrap();
        assert_eq!(rp.z, -4000.0);
        assert!(layout.contact_position(ContactId::Central(9)).is_err());
        layout.validate().unwrap();
    }

    #[test]
    fn layout_validation_catches_uneven_spacing() {
        let mut layout = CuffLayout::default();
        layout.central_angles_deg[2] = 100.0;
        assert!(layout.validate().is_err());
        let layout = CuffLayout { ring_proximal_offset_um: -3000.0, ..CuffLayout::default() };
        assert!(layout.validate().is_err());
    }

    #[test]
    fn ids_round_trip_through_strings() {
        for id in ContactId::all() {
            assert_eq!(id.to_string().parse::<ContactId>().unwrap(), id);
        }
        for k in StimKind::all() {
            assert_eq!(k.to_string().parse::<StimKind>().unwrap(), k);
        }
        assert!("STR7".parse::<StimKind>().is_err());
    }

    #[test]
    fn pattern_table_lists_all_contacts() {
        let t = make_str_pattern(1).unwrap().table();
        assert_eq!(t.len(), 8);
        assert!(t.contains(&(ContactId::Central(4), 1, 3)));
        assert!(t.contains(&(ContactId::Central(2), 0, 1)));
    }
}
