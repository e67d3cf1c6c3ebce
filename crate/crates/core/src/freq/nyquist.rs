//! Nyquist contours, adaptive curve sampling and winding numbers.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;

use crate::par::{self, Execution};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourOptions {
    /// Half-height `Ω` of the imaginary-axis part, rad/s.
    pub omega_max: f64,
    /// Radius of the semicircles around imaginary-axis poles.
    pub indent_radius: f64,
    /// Largest allowed argument change between adjacent image samples.
    pub max_arg_step: f64,
    pub max_samples: usize,
    pub exec: Execution,
}

impl Default for ContourOptions {
    fn default() -> Self {
        Self {
            omega_max: 1e6,
            indent_radius: 1e-4,
            max_arg_step: 0.1,
            max_samples: 400_000,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indentation {
    pub center: C64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NyquistCurve {
    pub s: Vec<C64>,
    pub image: Vec<C64>,
    pub indentations: Vec<Indentation>,
    /// Point the sampling was refined about.
    pub point: C64,
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Axis { w0: f64, w1: f64 },
    Arc { center: C64, radius: f64, a0: f64, a1: f64 },
}

impl Segment {
    fn at(&self, t: f64) -> C64 {
        match *self {
            Segment::Axis { w0, w1 } => C64::new(0.0, w0 + t * (w1 - w0)),
            Segment::Arc { center, radius, a0, a1 } => center + C64::from_polar(radius, a0 + t * (a1 - a0)),
        }
    }

    fn initial_params(&self, critical: &[C64], min_step: f64) -> Vec<f64> {
        match *self {
            Segment::Axis { w0, w1 } => {
                let len = w1 - w0;
                if len <= 0.0 {
                    return vec![0.0, 1.0];
                }
                let max_step = len / 16.0;
                let mut ts = vec![0.0];
                let mut w = w0;
                loop {
                    let s = C64::new(0.0, w);
                    let d = critical.iter().map(|c| (s - c).norm()).fold(w.abs().max(1.0), f64::min);
                    w += (0.05 * d).clamp(min_step, max_step);
                    if w >= w1 {
                        break;
                    }
                    ts.push((w - w0) / len);
                }
                ts.push(1.0);
                ts
            }
            Segment::Arc { a0, a1, .. } => {
                let n = ((a1 - a0).abs() / 0.05).ceil().max(16.0) as usize;
                (0..=n).map(|i| i as f64 / n as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    seg: usize,
    t: f64,
    s: C64,
    f: C64,
}

fn wrapped(d: f64) -> f64 {
    let mut x = d % TAU;
    if x > PI {
        x -= TAU;
    } else if x < -PI {
        x += TAU;
    }
    x
}

fn arg_step(a: C64, b: C64, p: C64) -> f64 {
    wrapped((b - p).arg() - (a - p).arg())
}

fn contour_segments(
    axis_poles: &[f64],
    upper_half: bool,
    opts: &ContourOptions,
) -> Result<(Vec<Segment>, Vec<Indentation>)> {
    let (big, rho) = (opts.omega_max, opts.indent_radius);
    let mut poles: Vec<f64> = axis_poles
        .iter()
        .copied()
        .filter(|w| !upper_half || *w >= -rho)
        .collect();
    poles.sort_by(f64::total_cmp);
    poles.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    for pair in poles.windows(2) {
        if pair[1] - pair[0] <= 2.0 * rho {
            return Err(Error::Indeterminate(format!(
                "imaginary-axis poles at {} and {} are closer than the indentation diameter",
                pair[0], pair[1]
            )));
        }
    }
    if let Some(w) = poles.iter().find(|w| w.abs() >= big - rho) {
        return Err(Error::Indeterminate(format!(
            "imaginary-axis pole at {w} lies outside the contour height {big}"
        )));
    }
    let mut segs = Vec::new();
    let mut dents = Vec::new();
    let mut cur = if upper_half { 0.0 } else { -big };
    for &w in &poles {
        let center = C64::new(0.0, w);
        dents.push(Indentation { center, radius: rho });
        if upper_half && w.abs() <= rho {
            segs.push(Segment::Arc {
                center: C64::new(0.0, 0.0),
                radius: rho,
                a0: 0.0,
                a1: FRAC_PI_2,
            });
        } else {
            segs.push(Segment::Axis { w0: cur, w1: w - rho });
            segs.push(Segment::Arc {
                center,
                radius: rho,
                a0: -FRAC_PI_2,
                a1: FRAC_PI_2,
            });
        }
        cur = w + rho;
    }
    segs.push(Segment::Axis { w0: cur, w1: big });
    let end = if upper_half { 0.0 } else { -FRAC_PI_2 };
    segs.push(Segment::Arc {
        center: C64::new(0.0, 0.0),
        radius: big,
        a0: FRAC_PI_2,
        a1: end,
    });
    Ok((segs, dents))
}

fn eval_all<F>(f: &F, pts: &[(usize, f64, C64)], exec: Execution) -> Result<Vec<Sample>>
where
    F: Fn(C64) -> C64 + Sync + Send,
{
    let vals = par::map(exec, pts, |&(_, _, s)| f(s));
    pts.iter()
        .zip(vals)
        .map(|(&(seg, t, s), v)| {
            if v.re.is_finite() && v.im.is_finite() {
                Ok(Sample { seg, t, s, f: v })
            } else {
                Err(Error::Numerical(format!("non-finite image at s = {s}")))
            }
        })
        .collect()
}

/// Samples the image of the Nyquist contour under `f`.
///
/// `critical` lists poles and zeros that drive the initial mesh density;
/// `axis_poles` gives the imaginary parts of poles on the imaginary axis,
/// which get indented into the right half plane. With `conjugate_symmetric`
/// only the upper half is evaluated and the rest mirrored, which is valid
/// for real-coefficient functions only.
pub fn nyquist_curve<F>(
    f: F,
    critical: &[C64],
    axis_poles: &[f64],
    point: C64,
    conjugate_symmetric: bool,
    opts: &ContourOptions,
) -> Result<NyquistCurve>
where
    F: Fn(C64) -> C64 + Sync + Send,
{
    let (segs, indentations) = contour_segments(axis_poles, conjugate_symmetric, opts)?;
    let min_step = 0.05 * opts.indent_radius;
    let mut pts = Vec::new();
    for (i, seg) in segs.iter().enumerate() {
        for t in seg.initial_params(critical, min_step) {
            pts.push((i, t, seg.at(t)));
        }
    }
    let mut samples = eval_all(&f, &pts, opts.exec)?;

    loop {
        let mut inserts = Vec::new();
        for (i, w) in samples.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if a.seg != b.seg || arg_step(a.f, b.f, point).abs() <= opts.max_arg_step {
                continue;
            }
            let t = 0.5 * (a.t + b.t);
            if t <= a.t || t >= b.t {
                return Err(Error::Indeterminate(format!(
                    "curve passes too close to {point} near s = {}; perturb the contour",
                    a.s
                )));
            }
            inserts.push((i, (a.seg, t, segs[a.seg].at(t))));
        }
        if inserts.is_empty() {
            break;
        }
        if samples.len() + inserts.len() > opts.max_samples {
            return Err(Error::Indeterminate(format!(
                "refinement exceeded {} samples",
                opts.max_samples
            )));
        }
        let new_pts: Vec<_> = inserts.iter().map(|x| x.1).collect();
        let fresh = eval_all(&f, &new_pts, opts.exec)?;
        let mut merged = Vec::with_capacity(samples.len() + fresh.len());
        let mut next = inserts.iter().map(|x| x.0).zip(fresh).peekable();
        for (i, smp) in samples.into_iter().enumerate() {
            merged.push(smp);
            if let Some((_, new)) = next.next_if(|(j, _)| *j == i) {
                merged.push(new);
            }
        }
        samples = merged;
    }

    let (mut s, mut image): (Vec<C64>, Vec<C64>) = samples.iter().map(|x| (x.s, x.f)).unzip();
    let mut indentations = indentations;
    if conjugate_symmetric {
        let mirror_s: Vec<C64> = s.iter().rev().map(|z| z.conj()).collect();
        let mirror_f: Vec<C64> = image.iter().rev().map(|z| z.conj()).collect();
        let mirror_d: Vec<Indentation> = indentations
            .iter()
            .filter(|d| d.center.im > d.radius)
            .map(|d| Indentation {
                center: d.center.conj(),
                radius: d.radius,
            })
            .collect();
        s = mirror_s.into_iter().chain(s).collect();
        image = mirror_f.into_iter().chain(image).collect();
        indentations = mirror_d.into_iter().rev().chain(indentations).collect();
    }
    Ok(NyquistCurve {
        s,
        image,
        indentations,
        point,
    })
}

impl NyquistCurve {
    /// A closed curve from explicit samples; the closing segment from the
    /// last to the first sample is implied.
    pub fn from_samples(s: Vec<C64>, image: Vec<C64>, point: C64) -> Result<Self> {
        if s.len() != image.len() || s.len() < 3 {
            return Err(Error::Config("a curve needs at least three paired samples".into()));
        }
        Ok(Self {
            s,
            image,
            indentations: Vec::new(),
            point,
        })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Largest argument change about `point` between adjacent samples.
    pub fn max_arg_step(&self, point: C64) -> f64 {
        self.steps(point).map(f64::abs).fold(0.0, f64::max)
    }

    fn steps(&self, point: C64) -> impl Iterator<Item = f64> + '_ {
        let n = self.image.len();
        (0..n).map(move |i| arg_step(self.image[i], self.image[(i + 1) % n], point))
    }

    /// Every other sample, keeping the first and last.
    pub fn decimated(&self) -> Self {
        let keep = |i: &usize| i.is_multiple_of(2) || *i + 1 == self.s.len();
        Self {
            s: (0..self.s.len()).filter(keep).map(|i| self.s[i]).collect(),
            image: (0..self.s.len()).filter(keep).map(|i| self.image[i]).collect(),
            indentations: self.indentations.clone(),
            point: self.point,
        }
    }

    /// `omega,re,im` rows; `omega` is `Im s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,re,im\n");
        for (s, f) in self.s.iter().zip(&self.image) {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", s.im, f.re, f.im);
        }
        out
    }
}

/// Counterclockwise encirclements of `point` by the closed curve.
pub fn winding_number(curve: &NyquistCurve, point: C64) -> Result<i64> {
    let scale = point.norm().max(1.0);
    let min_dist = curve
        .image
        .iter()
        .map(|z| (z - point).norm())
        .fold(f64::INFINITY, f64::min);
    if !(min_dist > 1e-9 * scale) {
        return Err(Error::Indeterminate(format!(
            "{point} lies on the curve (distance {min_dist:.3e}); perturb the contour"
        )));
    }
    let mut total = 0.0;
    for d in curve.steps(point) {
        if d.abs() > FRAC_PI_2 {
            return Err(Error::Indeterminate(format!(
                "argument step {d:.3} rad about {point} is too coarse to resolve"
            )));
        }
        total += d;
    }
    let w = total / TAU;
    let r = w.round();
    if (w - r).abs() >= 0.01 {
        return Err(Error::Indeterminate(format!(
            "winding sum {w:.4} is not near an integer"
        )));
    }
    Ok(r as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;

    fn circle(turns: usize, n: usize, center: C64, r: f64) -> NyquistCurve {
        let m = turns * n;
        let s: Vec<C64> = (0..m).map(|i| c64(0.0, i as f64)).collect();
        let f = (0..m)
            .map(|i| center + C64::from_polar(r, TAU * i as f64 / n as f64))
            .collect();
        NyquistCurve::from_samples(s, f, c64(0.0, 0.0)).unwrap()
    }

    #[test]
    fn circle_windings() {
        assert_eq!(
            winding_number(&circle(1, 200, c64(0.0, 0.0), 1.0), c64(0.0, 0.0)).unwrap(),
            1
        );
        assert_eq!(
            winding_number(&circle(1, 200, c64(0.0, 0.0), 1.0), c64(3.0, 0.0)).unwrap(),
            0
        );
        assert_eq!(
            winding_number(&circle(2, 200, c64(0.0, 0.0), 1.0), c64(0.0, 0.0)).unwrap(),
            2
        );
        let mut cw = circle(1, 200, c64(0.0, 0.0), 1.0);
        cw.image.reverse();
        assert_eq!(winding_number(&cw, c64(0.0, 0.0)).unwrap(), -1);
    }

    #[test]
    fn point_on_curve_is_indeterminate() {
        let c = circle(1, 200, c64(0.0, 0.0), 1.0);
        assert!(matches!(
            winding_number(&c, c64(1.0, 0.0)),
            Err(Error::Indeterminate(_))
        ));
    }

    #[test]
    fn coarse_sampling_is_indeterminate() {
        let c = circle(1, 3, c64(0.0, 0.0), 1.0);
        assert!(winding_number(&c, c64(0.0, 0.0)).is_err());
    }

    // Argument principle: zeros minus poles inside the contour, traversed
    // clockwise, so encirclements of 0 equal poles minus zeros in the RHP.
    #[test]
    fn argument_principle_on_contour() {
        let opts = ContourOptions::default();
        let zeros = [c64(2.0, 5.0), c64(-1.0, 0.0), c64(3.0, -1.0)];
        let poles = [c64(1.0, 1.0), c64(-4.0, 2.0)];
        let f = |s: C64| zeros.iter().map(|z| s - z).product::<C64>() / poles.iter().map(|p| s - p).product::<C64>();
        let crit: Vec<C64> = zeros.iter().chain(&poles).copied().collect();
        let curve = nyquist_curve(f, &crit, &[], c64(0.0, 0.0), false, &opts).unwrap();
        assert_eq!(winding_number(&curve, c64(0.0, 0.0)).unwrap(), 1 - 2);
        assert!(curve.max_arg_step(c64(0.0, 0.0)) <= 0.1 + 1e-12);
        assert_eq!(winding_number(&curve.decimated(), c64(0.0, 0.0)).unwrap(), -1);
    }

    #[test]
    fn indentation_and_symmetry() {
        let opts = ContourOptions::default();
        // (s − 1)(s + 2) / (s(s² + 4)): poles on the axis at 0 and ±2j.
        let f = |s: C64| (s - 1.0) * (s + 2.0) / (s * (s * s + 4.0));
        let crit = [
            c64(1.0, 0.0),
            c64(-2.0, 0.0),
            c64(0.0, 0.0),
            c64(0.0, 2.0),
            c64(0.0, -2.0),
        ];
        let full = nyquist_curve(f, &crit, &[0.0, 2.0, -2.0], c64(0.0, 0.0), false, &opts).unwrap();
        let half = nyquist_curve(f, &crit, &[0.0, 2.0, -2.0], c64(0.0, 0.0), true, &opts).unwrap();
        assert_eq!(full.indentations.len(), 3);
        assert_eq!(half.indentations.len(), 3);
        assert_eq!(winding_number(&full, c64(0.0, 0.0)).unwrap(), -1);
        assert_eq!(winding_number(&half, c64(0.0, 0.0)).unwrap(), -1);
        for (s, v) in half.s.iter().zip(&half.image) {
            assert!((f(*s) - v).norm() <= 1e-9 * v.norm().max(1.0));
        }
    }

    #[test]
    fn overlapping_indentations_fail() {
        let opts = ContourOptions::default();
        let r = nyquist_curve(|s| s, &[], &[1.0, 1.0 + 1e-5], c64(0.0, 0.0), false, &opts);
        assert!(matches!(r, Err(Error::Indeterminate(_))));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let f = |s: C64| 1.0 / ((s + 1.0) * (s + c64(0.5, 3.0)));
        let mut opts = ContourOptions {
            exec: Execution::Sequential,
            ..Default::default()
        };
        let a = nyquist_curve(f, &[c64(-1.0, 0.0), c64(-0.5, -3.0)], &[], c64(-1.0, 0.0), false, &opts).unwrap();
        opts.exec = Execution::Parallel;
        let b = nyquist_curve(f, &[c64(-1.0, 0.0), c64(-0.5, -3.0)], &[], c64(-1.0, 0.0), false, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.to_csv().starts_with("omega,re,im\n"));
    }
}
