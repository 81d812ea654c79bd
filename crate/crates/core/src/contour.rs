//! Closed contours and winding-number counting by adaptive phase tracking.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charmatrix::{delta, delta_scale, log_derivative};
use crate::error::{NtsError, Result};
use crate::linalg::{det_complex, ComplexValue};
use crate::sysmodel::NeutralSystem;

/// Axis-aligned rectangle `[re_min, re_max] × [im_min, im_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Self {
            re_min,
            re_max,
            im_min,
            im_max,
        }
    }

    /// `[re_min, re_max] × [-im_max, im_max]`.
    pub fn symmetric(re_min: f64, re_max: f64, im_max: f64) -> Self {
        Self::new(re_min, re_max, -im_max, im_max)
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }
    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }
    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }
    pub fn center(&self) -> Complex64 {
        Complex64::new(
            0.5 * (self.re_min + self.re_max),
            0.5 * (self.im_min + self.im_max),
        )
    }
    pub fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
            || [self.re_min, self.re_max, self.im_min, self.im_max]
                .iter()
                .any(|x| !x.is_finite())
    }
    pub fn contains(&self, z: Complex64) -> bool {
        z.re > self.re_min && z.re < self.re_max && z.im > self.im_min && z.im < self.im_max
    }
    /// Splits at the given fractions of width and height; children are ordered
    /// (lower-left, lower-right, upper-left, upper-right).
    pub fn quadrisect(&self, fx: f64, fy: f64) -> [Rect; 4] {
        let xm = self.re_min + fx * self.width();
        let ym = self.im_min + fy * self.height();
        [
            Rect::new(self.re_min, xm, self.im_min, ym),
            Rect::new(xm, self.re_max, self.im_min, ym),
            Rect::new(self.re_min, xm, ym, self.im_max),
            Rect::new(xm, self.re_max, ym, self.im_max),
        ]
    }
    /// Splits vertically at fraction `f` of the width.
    pub fn split_re(&self, f: f64) -> [Rect; 2] {
        let xm = self.re_min + f * self.width();
        [
            Rect::new(self.re_min, xm, self.im_min, self.im_max),
            Rect::new(xm, self.re_max, self.im_min, self.im_max),
        ]
    }
    fn inflated(&self, fraction: f64) -> Self {
        let dx = 0.5 * fraction * self.width();
        let dy = 0.5 * fraction * self.height();
        Rect::new(
            self.re_min - dx,
            self.re_max + dx,
            self.im_min - dy,
            self.im_max + dy,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Contour {
    Circle { center: ComplexValue, radius: f64 },
    Rect(Rect),
}

impl Contour {
    pub fn circle(center: Complex64, radius: f64) -> Self {
        Contour::Circle {
            center: center.into(),
            radius,
        }
    }

    fn inflated(&self, fraction: f64) -> Self {
        match *self {
            Contour::Circle { center, radius } => Contour::Circle {
                center,
                radius: radius * (1.0 + fraction),
            },
            Contour::Rect(r) => Contour::Rect(r.inflated(fraction)),
        }
    }

    /// Positively oriented pieces `(start, end, kind)` covering the contour.
    fn pieces(&self) -> Vec<Piece> {
        match *self {
            Contour::Circle { center, radius } => {
                let c: Complex64 = center.into();
                (0..4)
                    .map(|q| Piece::Arc {
                        center: c,
                        radius,
                        t0: q as f64 * 0.5 * PI,
                        t1: (q + 1) as f64 * 0.5 * PI,
                    })
                    .collect()
            }
            Contour::Rect(r) => {
                let p = [
                    Complex64::new(r.re_min, r.im_min),
                    Complex64::new(r.re_max, r.im_min),
                    Complex64::new(r.re_max, r.im_max),
                    Complex64::new(r.re_min, r.im_max),
                ];
                (0..4)
                    .map(|i| Piece::Line {
                        a: p[i],
                        b: p[(i + 1) % 4],
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line { a: Complex64, b: Complex64 },
    Arc { center: Complex64, radius: f64, t0: f64, t1: f64 },
}

impl Piece {
    fn at(&self, s: f64) -> Complex64 {
        match *self {
            Piece::Line { a, b } => a + (b - a) * s,
            Piece::Arc {
                center,
                radius,
                t0,
                t1,
            } => {
                let t = t0 + (t1 - t0) * s;
                center + Complex64::from_polar(radius, t)
            }
        }
    }
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { a, b } => (b - a).norm(),
            Piece::Arc {
                radius, t0, t1, ..
            } => radius * (t1 - t0).abs(),
        }
    }
}

/// Tuning knobs for winding-number counting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountOptions {
    /// A node is "on a root" when `|f| <= boundary_tol * scale(f)`.
    pub boundary_tol: f64,
    /// Maximum bisection depth of a single initial arc.
    pub max_depth: usize,
    /// Number of 1 % inflations tried when a node lands on a root.
    pub max_retries: usize,
    /// Initial nodes per unit of contour length, multiplied by the
    /// function's oscillation rate.
    pub density: f64,
}

impl Default for CountOptions {
    fn default() -> Self {
        Self {
            boundary_tol: 1e-12,
            max_depth: 40,
            max_retries: 5,
            density: 2.0,
        }
    }
}

/// Outcome of a successful count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Winding {
    pub count: usize,
    /// Total phase change divided by 2π.
    pub raw: f64,
    /// The contour actually used (differs from the request after inflation).
    pub contour: Contour,
    pub inflations: usize,
    pub evaluations: usize,
}

/// One evaluation of a sampled analytic function.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub value: Complex64,
    /// Natural magnitude; the value is "zero" when `|value| <= tol * scale`.
    pub scale: f64,
    /// Logarithmic derivative `f'/f`, when available.
    pub log_derivative: Option<Complex64>,
}

/// Analytic function sampled for phase tracking.
pub trait Sampled: Sync {
    fn sample(&self, z: Complex64) -> Sample;
    /// Phase rotation rate per unit length along the contour (for the
    /// initial sampling density).
    fn rate(&self) -> f64 {
        1.0
    }
}

/// `det Δ(λ)`, scaled by the product of the row-wise term magnitudes.
pub struct CharDet<'a>(pub &'a NeutralSystem);

impl Sampled for CharDet<'_> {
    fn sample(&self, z: Complex64) -> Sample {
        let d = delta(self.0, z);
        let scale = delta_scale(self.0, z).powi(self.0.n() as i32);
        let value = det_complex(&d);
        let log_derivative = (value.norm() > 0.0)
            .then(|| log_derivative(self.0, z))
            .flatten();
        Sample {
            value,
            scale,
            log_derivative,
        }
    }
    fn rate(&self) -> f64 {
        self.0.n() as f64 * self.0.h().max(1.0)
    }
}

impl<F: Fn(Complex64) -> Complex64 + Sync> Sampled for F {
    fn sample(&self, z: Complex64) -> Sample {
        let value = self(z);
        let eps = 1e-6 * (1.0 + z.norm());
        let e = Complex64::new(eps, 0.0);
        let deriv = (self(z + e) - self(z - e)) / (2.0 * eps);
        Sample {
            value,
            scale: value.norm().max(1.0),
            log_derivative: (value.norm() > 0.0).then(|| deriv / value),
        }
    }
}

enum TrackError {
    OnRoot,
    Depth,
}

struct Tracker<'a, F: Sampled + ?Sized> {
    f: &'a F,
    opts: &'a CountOptions,
    evaluations: usize,
}

impl<F: Sampled + ?Sized> Tracker<'_, F> {
    fn eval(&mut self, z: Complex64) -> std::result::Result<Sample, TrackError> {
        self.evaluations += 1;
        let s = self.f.sample(z);
        let v = s.value;
        if !v.is_finite() || v.norm() <= self.opts.boundary_tol * s.scale || v.norm() == 0.0 {
            return Err(TrackError::OnRoot);
        }
        Ok(s)
    }

    /// Phase change of `f` along `piece` between parameters `s0` and `s1`.
    ///
    /// An arc is accepted when its phase increments are below π/2, the
    /// midpoint splits them consistently, and the step is shorter than the
    /// local linearization radius `|f / f'|`. The last test rules out
    /// aliasing by whole turns near clustered or multiple zeros.
    fn arc_phase(
        &mut self,
        piece: &Piece,
        (s0, f0): (f64, Sample),
        (s1, f1): (f64, Sample),
        depth: usize,
    ) -> std::result::Result<f64, TrackError> {
        let step = (piece.at(s1) - piece.at(s0)).norm();
        let d = (f1.value / f0.value).arg();
        let sm = 0.5 * (s0 + s1);
        let fm = self.eval(piece.at(sm))?;
        let d1 = (fm.value / f0.value).arg();
        let d2 = (f1.value / fm.value).arg();
        let local = [f0, fm, f1]
            .iter()
            .map(|s| s.log_derivative.map_or(0.0, |l| l.norm()))
            .fold(0.0, f64::max);
        let consistent = d.abs() < 0.5 * PI
            && d1.abs() < 0.5 * PI
            && d2.abs() < 0.5 * PI
            && (d1 + d2 - d).abs() < 1e-9
            && 0.5 * step * local <= 1.0;
        if consistent {
            return Ok(d1 + d2);
        }
        if depth >= self.opts.max_depth {
            return Err(TrackError::Depth);
        }
        Ok(self.arc_phase(piece, (s0, f0), (sm, fm), depth + 1)?
            + self.arc_phase(piece, (sm, fm), (s1, f1), depth + 1)?)
    }

    fn total_phase(&mut self, contour: &Contour) -> std::result::Result<f64, TrackError> {
        let mut total = 0.0;
        for piece in contour.pieces() {
            let nodes = ((piece.length() * self.f.rate() * self.opts.density).ceil() as usize)
                .clamp(4, 1 << 16);
            let mut s_prev = 0.0;
            let mut f_prev = self.eval(piece.at(0.0))?;
            for i in 1..=nodes {
                let s = i as f64 / nodes as f64;
                let fv = self.eval(piece.at(s))?;
                total += self.arc_phase(&piece, (s_prev, f_prev), (s, fv), 0)?;
                s_prev = s;
                f_prev = fv;
            }
        }
        Ok(total)
    }
}

/// Winding number of `f` around `contour` with inflation retries.
pub fn winding_number<F: Sampled + ?Sized>(
    f: &F,
    contour: &Contour,
    opts: &CountOptions,
) -> Result<Winding> {
    let mut current = *contour;
    let mut evaluations = 0;
    for attempt in 0..=opts.max_retries {
        let mut tracker = Tracker {
            f,
            opts,
            evaluations: 0,
        };
        let outcome = tracker.total_phase(&current);
        evaluations += tracker.evaluations;
        match outcome {
            Ok(phase) => {
                let raw = phase / (2.0 * PI);
                let rounded = raw.round();
                if (raw - rounded).abs() >= 0.25 || rounded < 0.0 {
                    return Err(NtsError::NonIntegerWinding { raw });
                }
                return Ok(Winding {
                    count: rounded as usize,
                    raw,
                    contour: current,
                    inflations: attempt,
                    evaluations,
                });
            }
            Err(TrackError::Depth) => {
                return Err(NtsError::PhaseTracking {
                    depth: opts.max_depth,
                })
            }
            Err(TrackError::OnRoot) => current = current.inflated(0.01),
        }
    }
    Err(NtsError::RootOnContour {
        retries: opts.max_retries,
    })
}

/// Winding number without inflation; `None` when a node lands on a root.
pub fn winding_number_strict<F: Sampled + ?Sized>(
    f: &F,
    contour: &Contour,
    opts: &CountOptions,
) -> Result<Option<usize>> {
    let strict = CountOptions {
        max_retries: 0,
        ..*opts
    };
    match winding_number(f, contour, &strict) {
        Ok(w) => Ok(Some(w.count)),
        Err(NtsError::RootOnContour { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}
