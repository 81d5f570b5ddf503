//! Butterworth IIR design (bilinear transform with prewarped edges) and filtering
//! with second-order sections.
//!
//! Band filters follow the usual physiology convention: `order` is the overall
//! order, so a 4th-order band-pass has two poles per band edge.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FilterKind {
    Lowpass { cutoff_hz: f64 },
    Highpass { cutoff_hz: f64 },
    Bandpass { low_hz: f64, high_hz: f64 },
    /// Band-stop between the two -3 dB edges.
    Notch { low_hz: f64, high_hz: f64 },
}

impl FilterKind {
    fn edges(&self) -> Vec<f64> {
        match *self {
            FilterKind::Lowpass { cutoff_hz } | FilterKind::Highpass { cutoff_hz } => vec![cutoff_hz],
            FilterKind::Bandpass { low_hz, high_hz } | FilterKind::Notch { low_hz, high_hz } => {
                vec![low_hz, high_hz]
            }
        }
    }

    /// Notch centred on `center_hz` with the given -3 dB bandwidth.
    pub fn notch(center_hz: f64, bandwidth_hz: f64) -> FilterKind {
        // edges with geometric mean at the centre
        let half = bandwidth_hz / 2.0;
        let low = (half * half + center_hz * center_hz).sqrt() - half;
        FilterKind::Notch { low_hz: low, high_hz: low + bandwidth_hz }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FilterMode {
    Causal,
    /// Forward-backward filtering; squares the magnitude response and removes group delay.
    ZeroPhase,
}

/// One biquad, `a0` normalized to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + z_inv * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z_inv * self.a[0] + z2 * self.a[1];
        num / den
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub kind: FilterKind,
    pub order: usize,
    pub sample_rate_hz: f64,
    pub sections: Vec<Biquad>,
}

impl Filter {
    pub fn frequency_response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / self.sample_rate_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.frequency_response(freq_hz).norm()
    }

    /// Samples of odd-extension padding used by zero-phase filtering: three periods of
    /// the lowest band edge.
    fn pad_hint(&self) -> usize {
        let lowest = self.kind.edges().into_iter().fold(f64::INFINITY, f64::min);
        (3.0 * self.sample_rate_hz / lowest).ceil() as usize
    }

    /// Section states giving a steady-state response to a unit step.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut level = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let g = s.dc_gain();
                let s2 = (s.b[2] - s.a[1] * g) * level;
                let s1 = (s.b[1] - s.a[0] * g) * level + s2;
                level *= g;
                [s1, s2]
            })
            .collect()
    }

    fn run(&self, x: &[f64], init: Option<f64>) -> Vec<f64> {
        let mut states = match init {
            Some(x0) => self.step_states().into_iter().map(|[a, b]| [a * x0, b * x0]).collect(),
            None => vec![[0.0; 2]; self.sections.len()],
        };
        let mut out = x.to_vec();
        for (s, st) in self.sections.iter().zip(states.iter_mut()) {
            for v in out.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + st[0];
                st[0] = s.b[1] * input - s.a[0] * y + st[1];
                st[1] = s.b[2] * input - s.a[1] * y;
                *v = y;
            }
        }
        out
    }
}

fn prototype_poles(m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * m) as f64;
            Complex64::new(-theta.sin(), theta.cos())
        })
        .collect()
}

struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
}

fn neg_prod(v: &[Complex64]) -> Complex64 {
    v.iter().map(|&p| -p).product()
}

fn lp_to_lp(p: Vec<Complex64>, wo: f64) -> Zpk {
    let degree = p.len() as i32;
    Zpk { zeros: vec![], poles: p.iter().map(|&x| x * wo).collect(), gain: wo.powi(degree) }
}

fn lp_to_hp(p: Vec<Complex64>, wo: f64) -> Zpk {
    let gain = (Complex64::new(1.0, 0.0) / neg_prod(&p)).re;
    Zpk {
        zeros: vec![Complex64::new(0.0, 0.0); p.len()],
        poles: p.iter().map(|&x| wo / x).collect(),
        gain,
    }
}

fn lp_to_bp(p: Vec<Complex64>, wo: f64, bw: f64) -> Zpk {
    let degree = p.len() as i32;
    let mut poles = Vec::with_capacity(2 * p.len());
    for &x in &p {
        let scaled = x * bw / 2.0;
        let root = (scaled * scaled - wo * wo).sqrt();
        poles.push(scaled + root);
        poles.push(scaled - root);
    }
    Zpk { zeros: vec![Complex64::new(0.0, 0.0); p.len()], poles, gain: bw.powi(degree) }
}

fn lp_to_bs(p: Vec<Complex64>, wo: f64, bw: f64) -> Zpk {
    let gain = (Complex64::new(1.0, 0.0) / neg_prod(&p)).re;
    let mut poles = Vec::with_capacity(2 * p.len());
    let mut zeros = Vec::with_capacity(2 * p.len());
    for &x in &p {
        let scaled = (bw / 2.0) / x;
        let root = (scaled * scaled - wo * wo).sqrt();
        poles.push(scaled + root);
        poles.push(scaled - root);
        zeros.push(Complex64::new(0.0, wo));
        zeros.push(Complex64::new(0.0, -wo));
    }
    Zpk { zeros, poles, gain }
}

fn bilinear(analog: Zpk, fs: f64) -> Zpk {
    let fs2 = 2.0 * fs;
    let map = |s: Complex64| (fs2 + s) / (fs2 - s);
    let mut zeros: Vec<Complex64> = analog.zeros.iter().map(|&z| map(z)).collect();
    let poles: Vec<Complex64> = analog.poles.iter().map(|&p| map(p)).collect();
    zeros.resize(poles.len(), Complex64::new(-1.0, 0.0));
    let num: Complex64 = analog.zeros.iter().map(|&z| fs2 - z).product();
    let den: Complex64 = analog.poles.iter().map(|&p| fs2 - p).product();
    Zpk { zeros, poles, gain: analog.gain * (num / den).re }
}

/// Quadratic factor `1 + c1 z^-1 + c2 z^-2` plus a representative root used for pairing.
#[derive(Clone, Copy)]
struct Factor {
    c: [f64; 2],
    root: Complex64,
}

fn factorize(roots: &[Complex64]) -> Vec<Factor> {
    let scale = roots.iter().map(|r| r.norm()).fold(1.0, f64::max);
    let tol = 1e-10 * scale;
    let mut reals: Vec<f64> = roots.iter().filter(|r| r.im.abs() <= tol).map(|r| r.re).collect();
    reals.sort_by(|a, b| a.total_cmp(b));
    let mut factors: Vec<Factor> = roots
        .iter()
        .filter(|r| r.im > tol)
        .map(|r| Factor { c: [-2.0 * r.re, r.norm_sqr()], root: *r })
        .collect();
    for pair in reals.chunks(2) {
        let f = match *pair {
            [a, b] => Factor { c: [-(a + b), a * b], root: Complex64::new((a + b) / 2.0, 0.0) },
            [a] => Factor { c: [-a, 0.0], root: Complex64::new(a, 0.0) },
            _ => unreachable!(),
        };
        factors.push(f);
    }
    factors
}

fn zpk_to_sections(zpk: Zpk) -> Vec<Biquad> {
    let mut poles = factorize(&zpk.poles);
    // poles nearest the unit circle first, each taking its closest zero factor
    poles.sort_by(|a, b| b.root.norm().total_cmp(&a.root.norm()));
    let mut zeros = factorize(&zpk.zeros);
    let mut sections = Vec::with_capacity(poles.len());
    for p in poles {
        let b = if zeros.is_empty() {
            [1.0, 0.0, 0.0]
        } else {
            let (idx, _) = zeros
                .iter()
                .enumerate()
                .map(|(i, z)| (i, (z.root - p.root).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty");
            let z = zeros.swap_remove(idx);
            [1.0, z.c[0], z.c[1]]
        };
        sections.push(Biquad { b, a: p.c });
    }
    if let Some(first) = sections.first_mut() {
        for c in first.b.iter_mut() {
            *c *= zpk.gain;
        }
    }
    sections
}

/// Digital Butterworth filter of overall order `order`.
pub fn design_butterworth(kind: FilterKind, order: usize, sample_rate_hz: f64) -> Result<Filter> {
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::domain("sample rate must be positive"));
    }
    if order == 0 {
        return Err(Error::domain("filter order must be at least 1"));
    }
    let nyquist = sample_rate_hz / 2.0;
    for e in kind.edges() {
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::domain(format!("band edge {e} Hz must be positive")));
        }
        if e >= nyquist {
            return Err(Error::domain(format!("band edge {e} Hz is at or above Nyquist ({nyquist} Hz)")));
        }
    }
    let warp = |f: f64| 2.0 * sample_rate_hz * (std::f64::consts::PI * f / sample_rate_hz).tan();
    let analog = match kind {
        FilterKind::Lowpass { cutoff_hz } => lp_to_lp(prototype_poles(order), warp(cutoff_hz)),
        FilterKind::Highpass { cutoff_hz } => lp_to_hp(prototype_poles(order), warp(cutoff_hz)),
        FilterKind::Bandpass { low_hz, high_hz } | FilterKind::Notch { low_hz, high_hz } => {
            if low_hz >= high_hz {
                return Err(Error::domain("band edges must satisfy low < high"));
            }
            if !order.is_multiple_of(2) {
                return Err(Error::domain("band filters need an even overall order"));
            }
            let (w1, w2) = (warp(low_hz), warp(high_hz));
            let bw = w2 - w1;
            let proto = prototype_poles(order / 2);
            if matches!(kind, FilterKind::Bandpass { .. }) {
                lp_to_bp(proto, (w1 * w2).sqrt(), bw)
            } else {
                // warp the centre itself so the null lands exactly on it
                lp_to_bs(proto, warp((low_hz * high_hz).sqrt()), bw)
            }
        }
    };
    let sections = zpk_to_sections(bilinear(analog, sample_rate_hz));
    Ok(Filter { kind, order, sample_rate_hz, sections })
}

/// Filter one channel. Output has the input's length.
pub fn apply_filter(x: &[f64], filter: &Filter, mode: FilterMode) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::domain("cannot filter an empty channel"));
    }
    match mode {
        FilterMode::Causal => Ok(filter.run(x, None)),
        FilterMode::ZeroPhase => Ok(filtfilt(x, filter)),
    }
}

fn filtfilt(x: &[f64], filter: &Filter) -> Vec<f64> {
    let n = x.len();
    let pad = filter.pad_hint().min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (x[0], x[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

    let mut fwd = filter.run(&ext, Some(ext[0]));
    fwd.reverse();
    let mut back = filter.run(&fwd, Some(fwd[0]));
    back.reverse();
    back[pad..pad + n].to_vec()
}
