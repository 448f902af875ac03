//! Exact piecewise-affine càdlàg paths.
//!
//! A [`Path`] is a right-continuous function on `[0, end)` made of affine
//! pieces. A discontinuity at a segment start encodes a jump; the value at a
//! breakpoint is the post-jump value and the left limit comes from the
//! previous segment. Every operation here works on the breakpoints directly
//! (roots, infima and integrals in closed form), never on a sampling grid.
//!
//! Attainment convention: a descending affine piece with start value `v0` and
//! left limit `v1` at its end attains exactly the levels `(v1, v0]`. The local
//! time computations in [`crate::levy`] rely on it.

use std::fmt::Write as _;

use thiserror::Error;

/// Tolerance used by [`Path::approx_eq`] and breakpoint merging.
///
/// Applied relative to `max(1, |x|, |y|)`.
pub const PATH_EQ_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("path has no segments")]
    Empty,
    #[error("first segment must start at 0, got {0}")]
    FirstStart(f64),
    #[error("segment starts must strictly increase (index {index}: {prev} then {next})")]
    NonIncreasing { index: usize, prev: f64, next: f64 },
    #[error("non-finite segment data at index {0}")]
    NonFinite(usize),
    #[error("end time {end} must exceed the last segment start {last}")]
    BadEnd { end: f64, last: f64 },
    #[error("window start {g} is beyond the path end {end}")]
    WindowStart { g: f64, end: f64 },
    #[error("window requires 0 <= g <= d (got g = {g}, d = {d})")]
    WindowOrder { g: f64, d: f64 },
    #[error("no excursion longer than {eps} completes before the path end")]
    NoLongExcursion { eps: f64 },
    #[error("path takes negative values (min {0})")]
    Negative(f64),
    #[error("not an excursion: {0}")]
    NotExcursion(&'static str),
    #[error("malformed path text at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One affine piece: `f(t) = value + slope * (t - start)` until the next start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub value: f64,
    pub slope: f64,
}

impl Segment {
    pub fn new(start: f64, value: f64, slope: f64) -> Self {
        Self {
            start,
            value,
            slope,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.value + self.slope * (t - self.start)
    }
}

#[inline]
fn close(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= PATH_EQ_TOL * 1f64.max(a.abs()).max(b.abs())
}

/// Piecewise-affine càdlàg path on `[0, end)`; `end` may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    segments: Vec<Segment>,
    end: f64,
}

impl Path {
    pub fn new(segments: Vec<Segment>, end: f64) -> Result<Self, PathError> {
        let first = segments.first().ok_or(PathError::Empty)?;
        if first.start != 0.0 {
            return Err(PathError::FirstStart(first.start));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.start.is_finite() && s.value.is_finite() && s.slope.is_finite()) {
                return Err(PathError::NonFinite(i));
            }
            if i > 0 && segments[i - 1].start >= s.start {
                return Err(PathError::NonIncreasing {
                    index: i,
                    prev: segments[i - 1].start,
                    next: s.start,
                });
            }
        }
        let last = segments[segments.len() - 1].start;
        if end.is_nan() || end <= last {
            return Err(PathError::BadEnd { end, last });
        }
        Ok(Self { segments, end })
    }

    /// Builds without validation. Callers guarantee the invariants.
    pub(crate) fn from_parts(segments: Vec<Segment>, end: f64) -> Self {
        debug_assert!(Self::new(segments.clone(), end).is_ok(), "{segments:?} end={end}");
        Self { segments, end }
    }

    pub fn constant(value: f64, end: f64) -> Self {
        Self::from_parts(vec![Segment::new(0.0, value, 0.0)], end)
    }

    pub fn affine(value: f64, slope: f64, end: f64) -> Self {
        Self::from_parts(vec![Segment::new(0.0, value, slope)], end)
    }

    /// Step path from `(start, value)` pairs.
    pub fn from_steps(steps: &[(f64, f64)], end: f64) -> Result<Self, PathError> {
        let segs = steps.iter().map(|&(t, v)| Segment::new(t, v, 0.0)).collect();
        Self::new(segs, end)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn initial_value(&self) -> f64 {
        self.segments[0].value
    }

    /// End of segment `i` (start of the next one, or the path end).
    #[inline]
    pub fn segment_end(&self, i: usize) -> f64 {
        self.segments.get(i + 1).map_or(self.end, |s| s.start)
    }

    /// Index of the segment containing `t` (the last one starting at or before `t`).
    pub fn segment_index(&self, t: f64) -> usize {
        self.segments
            .partition_point(|s| s.start <= t)
            .saturating_sub(1)
    }

    /// `f(t)`. Beyond `end` the last segment is extended.
    pub fn value_at(&self, t: f64) -> f64 {
        self.segments[self.segment_index(t)].eval(t)
    }

    /// `f(t-)`; equals `f(0)` at `t = 0`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let i = self.segments.partition_point(|s| s.start < t);
        if i == 0 {
            self.segments[0].value
        } else {
            self.segments[i - 1].eval(t)
        }
    }

    pub fn is_step(&self) -> bool {
        self.segments.iter().all(|s| s.slope == 0.0)
    }

    /// Number of discontinuities (jumps of nonzero size) before `end`.
    pub fn jump_count(&self) -> usize {
        self.segments
            .windows(2)
            .filter(|w| w[0].eval(w[1].start) != w[1].value)
            .count()
    }

    /// Breakpoint times with both the value and the left limit there.
    fn extreme_candidates(&self, upto: f64) -> impl Iterator<Item = f64> + '_ {
        let upto = upto.min(self.end);
        self.segments
            .iter()
            .enumerate()
            .take_while(move |(_, s)| s.start < upto)
            .flat_map(move |(i, s)| {
                let e = self.segment_end(i).min(upto);
                let tail = if e.is_finite() {
                    Some(s.eval(e))
                } else if s.slope == 0.0 {
                    None
                } else if s.slope > 0.0 {
                    Some(f64::INFINITY)
                } else {
                    Some(f64::NEG_INFINITY)
                };
                std::iter::once(s.value).chain(tail)
            })
    }

    /// `sup_{[0, end)} f`, counting left limits.
    pub fn sup(&self) -> f64 {
        self.extreme_candidates(self.end)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `inf_{[0, end)} f`, counting left limits.
    pub fn inf(&self) -> f64 {
        self.extreme_candidates(self.end).fold(f64::INFINITY, f64::min)
    }

    /// `∫_0^t f`, exact.
    pub fn integral_to(&self, t: f64) -> f64 {
        let t = t.min(self.end);
        let mut acc = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            if s.start >= t {
                break;
            }
            let d = self.segment_end(i).min(t) - s.start;
            acc += d * (s.value + 0.5 * s.slope * d);
        }
        acc
    }

    /// Averages `(1/w) ∫_{kw}^{(k+1)w} f` over consecutive windows covering `[0, upto)`.
    pub fn window_averages(&self, width: f64, upto: f64) -> Vec<f64> {
        let upto = upto.min(self.end);
        let k_max = (upto / width).ceil() as usize;
        let mut out = vec![0.0; k_max];
        for (i, s) in self.segments.iter().enumerate() {
            if s.start >= upto {
                break;
            }
            let e = self.segment_end(i).min(upto);
            let mut a = s.start;
            while a < e {
                let k = ((a / width).floor() as usize).min(k_max - 1);
                let b = e.min((k + 1) as f64 * width);
                let (va, vb) = (s.eval(a), s.eval(b));
                out[k] += 0.5 * (va + vb) * (b - a);
                if b <= a {
                    break;
                }
                a = b;
            }
        }
        out.iter_mut().for_each(|v| *v /= width);
        out
    }

    /// Drops breakpoints where the path continues with the same affine law.
    pub fn merged(&self) -> Path {
        let mut out: Vec<Segment> = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            if let Some(p) = out.last() {
                if close(p.slope, s.slope) && close(p.eval(s.start), s.value) {
                    continue;
                }
            }
            out.push(*s);
        }
        Path::from_parts(out, self.end)
    }

    /// Structural equality after merging: same breakpoints, values, slopes and
    /// end, each within [`PATH_EQ_TOL`].
    pub fn approx_eq(&self, other: &Path) -> bool {
        let a = self.merged();
        let b = other.merged();
        let ends = (a.end.is_infinite() && b.end.is_infinite() && a.end == b.end)
            || close(a.end, b.end);
        ends && a.segments.len() == b.segments.len()
            && a.segments.iter().zip(&b.segments).all(|(x, y)| {
                close(x.start, y.start) && close(x.value, y.value) && close(x.slope, y.slope)
            })
    }

    /// `sup_{[0, upto]} |f - g|`, exact for piecewise-affine paths.
    pub fn sup_distance(&self, other: &Path, upto: f64) -> f64 {
        let mut times: Vec<f64> = self
            .segments
            .iter()
            .chain(other.segments.iter())
            .map(|s| s.start)
            .filter(|&t| t <= upto)
            .collect();
        times.push(upto);
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut worst: f64 = 0.0;
        for &t in &times {
            worst = worst.max((self.value_at(t) - other.value_at(t)).abs());
            if t > 0.0 {
                worst = worst.max((self.left_limit(t) - other.left_limit(t)).abs());
            }
        }
        worst
    }

    /// Maps `(t, x)` to `(t / time_div, x / space_div)`.
    pub fn rescaled(&self, time_div: f64, space_div: f64) -> Path {
        let segs = self
            .segments
            .iter()
            .map(|s| Segment {
                start: s.start / time_div,
                value: s.value / space_div,
                slope: s.slope * time_div / space_div,
            })
            .collect();
        Path::from_parts(segs, self.end / time_div)
    }

    /// Text form: header `path v1 end=<t>` then one `t v slope` line per segment.
    pub fn to_text(&self) -> String {
        let mut out = format!("path v1 end={}\n", self.end);
        for s in &self.segments {
            let _ = writeln!(out, "{} {} {}", s.start, s.value, s.slope);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Path, PathError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(PathError::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let end = header
            .trim()
            .strip_prefix("path v1 end=")
            .ok_or_else(|| PathError::Parse {
                line: 1,
                reason: format!("bad header {header:?}"),
            })?
            .parse::<f64>()
            .map_err(|e| PathError::Parse {
                line: 1,
                reason: e.to_string(),
            })?;
        let mut segs = Vec::new();
        for (i, line) in lines {
            let nums: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            match nums {
                Ok(v) if v.len() == 3 => segs.push(Segment::new(v[0], v[1], v[2])),
                Ok(v) => {
                    return Err(PathError::Parse {
                        line: i + 1,
                        reason: format!("expected 3 fields, found {}", v.len()),
                    })
                }
                Err(e) => {
                    return Err(PathError::Parse {
                        line: i + 1,
                        reason: format!("{e}"),
                    })
                }
            }
        }
        Path::new(segs, end)
    }
}

/// Appends segments while keeping starts strictly increasing; a push at the
/// same start as the previous segment replaces it.
#[derive(Debug, Default)]
pub struct PathBuilder {
    segments: Vec<Segment>,
}

impl PathBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            segments: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, start: f64, value: f64, slope: f64) {
        if let Some(last) = self.segments.last_mut() {
            debug_assert!(start >= last.start, "{start} < {}", last.start);
            if start <= last.start {
                *last = Segment::new(last.start, value, slope);
                return;
            }
        }
        self.segments.push(Segment::new(start, value, slope));
    }

    pub fn last(&self) -> Option<&Segment> {
        self.segments.last()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn finish(self, end: f64) -> Path {
        Path::from_parts(self.segments, end)
    }
}

/// Excursion: nonnegative path absorbed at its first zero `T_e`, with
/// `0 < T_e < ∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct Excursion {
    path: Path,
    lifetime: f64,
}

impl Excursion {
    pub fn new(path: Path) -> Result<Self, PathError> {
        let lifetime = hitting_time_zero(&path);
        if !lifetime.is_finite() {
            return Err(PathError::NotExcursion("no visit to 0 before the path end"));
        }
        if lifetime <= 0.0 {
            return Err(PathError::NotExcursion("zero lifetime"));
        }
        let tol = PATH_EQ_TOL * 1f64.max(path.sup().abs());
        for (i, s) in path.segments.iter().enumerate() {
            let e = path.segment_end(i);
            if s.start < lifetime {
                let lo = s.value.min(s.eval(e.min(lifetime)));
                if lo < -tol {
                    return Err(PathError::Negative(lo));
                }
            } else if s.value.abs() > tol || (s.slope != 0.0 && e > s.start) {
                return Err(PathError::NotExcursion("not absorbed at 0 after its lifetime"));
            }
        }
        Ok(Self { path, lifetime })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn into_path(self) -> Path {
        self.path
    }

    /// `T_e`.
    pub fn lifetime(&self) -> f64 {
        self.lifetime
    }

    /// `∫ e` over `[0, T_e]`.
    pub fn area(&self) -> f64 {
        self.path.integral_to(self.lifetime)
    }

    pub fn sup(&self) -> f64 {
        self.path.sup()
    }

    /// Segments intersecting `[0, T_e)` with their durations.
    pub fn live_segments(&self) -> impl Iterator<Item = (Segment, f64)> + '_ {
        let t_e = self.lifetime;
        self.path
            .segments
            .iter()
            .enumerate()
            .take_while(move |(_, s)| s.start < t_e)
            .map(move |(i, s)| (*s, self.path.segment_end(i).min(t_e) - s.start))
    }

    /// Membership in the class with finite `∫ 1/e`.
    pub fn has_finite_reciprocal_integral(&self) -> bool {
        self.live_segments().all(|(s, d)| s.value > 0.0 && s.eval(s.start + d) > 0.0)
    }
}

/// First excursion above a length threshold, with its endpoints `g < d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionTriple {
    pub excursion: Excursion,
    pub g: f64,
    pub d: f64,
}

/// `f(t) - min(0, inf_{[0,t]} f)`, exact on the piecewise representation.
pub fn reflect(f: &Path) -> Path {
    let mut out = PathBuilder::with_capacity(f.segments.len() + 4);
    let mut low = 0.0_f64;
    for (i, s) in f.segments.iter().enumerate() {
        let e = f.segment_end(i);
        if s.value < low {
            low = s.value;
        }
        if s.slope >= 0.0 {
            out.push(s.start, s.value - low, s.slope);
        } else {
            let above = s.value - low;
            let hit = s.start + above / -s.slope;
            if above > 0.0 {
                out.push(s.start, above, s.slope);
                if hit < e {
                    out.push(hit, 0.0, 0.0);
                }
            } else {
                out.push(s.start, 0.0, 0.0);
            }
            if e.is_finite() {
                low = low.min(s.eval(e));
            }
        }
    }
    out.finish(f.end).merged()
}

/// `T_f = inf{t > 0 : f(t) = 0}`; `f64::INFINITY` when `f` does not visit 0
/// before its end.
pub fn hitting_time_zero(f: &Path) -> f64 {
    for (i, s) in f.segments.iter().enumerate() {
        let e = f.segment_end(i);
        if s.value == 0.0 {
            if s.start > 0.0 || s.slope == 0.0 {
                return s.start;
            }
            continue;
        }
        if (s.value > 0.0 && s.slope < 0.0) || (s.value < 0.0 && s.slope > 0.0) {
            let root = s.start + s.value / -s.slope;
            if root < e {
                return root;
            }
        }
    }
    f64::INFINITY
}

/// `t ↦ f(g + min(t, d - g))`, i.e. stop at `d` and shift by `g`.
pub fn window(f: &Path, g: f64, d: f64) -> Result<Path, PathError> {
    if !(0.0 <= g && g <= d) {
        return Err(PathError::WindowOrder { g, d });
    }
    if g >= f.end {
        return Err(PathError::WindowStart { g, end: f.end });
    }
    let first = f.segment_index(g);
    let mut out = PathBuilder::new();
    out.push(0.0, f.segments[first].eval(g), f.segments[first].slope);
    for s in &f.segments[first + 1..] {
        if s.start >= d {
            break;
        }
        out.push(s.start - g, s.value, s.slope);
    }
    if d < f.end {
        out.push(d - g, f.value_at(d), 0.0);
        Ok(out.finish(f64::INFINITY).merged())
    } else {
        Ok(out.finish(f.end - g).merged())
    }
}

/// Maximal intervals of `{f > 0}` as `(start, end, completed)`; an interval is
/// completed when `f` returns to 0 before the path end.
pub fn positive_intervals(f: &Path) -> Vec<(f64, f64, bool)> {
    let mut out: Vec<(f64, f64, bool)> = Vec::new();
    let mut push = |a: f64, b: f64| {
        if b <= a {
            return;
        }
        match out.last_mut() {
            Some(last) if last.1 == a => last.1 = b,
            _ => out.push((a, b, true)),
        }
    };
    for (i, s) in f.segments.iter().enumerate() {
        let e = f.segment_end(i);
        if s.value > 0.0 {
            if s.slope >= 0.0 {
                push(s.start, e);
            } else {
                push(s.start, e.min(s.start + s.value / -s.slope));
            }
        } else if s.slope > 0.0 {
            push(s.start + s.value / -s.slope, e);
        }
    }
    if let Some(last) = out.last_mut() {
        if last.1 >= f.end {
            last.2 = false;
        }
    }
    out
}

/// First excursion of a nonnegative path whose length exceeds `eps`.
pub fn extract_first_long_excursion(f: &Path, eps: f64) -> Result<ExcursionTriple, PathError> {
    let (g, d) = positive_intervals(f)
        .into_iter()
        .find(|&(a, b, done)| done && b - a > eps)
        .map(|(a, b, _)| (a, b))
        .ok_or(PathError::NoLongExcursion { eps })?;
    let mut w = window(f, g, d)?;
    // `d` is a computed root; pin the frozen tail to exactly 0.
    if let Some(last) = w.segments.last_mut() {
        if last.slope == 0.0 && (last.start - (d - g)).abs() <= PATH_EQ_TOL * d.max(1.0) {
            last.value = 0.0;
        }
    }
    let excursion = Excursion::new(w)?;
    Ok(ExcursionTriple { excursion, g, d })
}

/// Result of [`truncate_small_excursions`].
#[derive(Debug, Clone, PartialEq)]
pub struct Truncated {
    pub path: Path,
    /// An excursion still running at the path end was zeroed.
    pub trailing_dropped: bool,
}

/// Zeroes every excursion of length at most `eps`, and any excursion that has
/// not completed before the path end.
pub fn truncate_small_excursions(f: &Path, eps: f64) -> Truncated {
    let intervals = positive_intervals(f);
    let trailing_dropped = intervals.last().is_some_and(|iv| !iv.2);
    let mut out = PathBuilder::new();
    out.push(0.0, 0.0, 0.0);
    for &(a, b, done) in &intervals {
        if !done || b - a <= eps {
            continue;
        }
        let i0 = f.segment_index(a);
        out.push(a, f.segments[i0].eval(a), f.segments[i0].slope);
        for s in &f.segments[i0 + 1..] {
            if s.start >= b {
                break;
            }
            out.push(s.start, s.value, s.slope);
        }
        out.push(b, 0.0, 0.0);
    }
    Truncated {
        path: out.finish(f.end).merged(),
        trailing_dropped,
    }
}

/// `C(f, t, h)(s) = f(s)` for `s < t` and `h(s - t)` for `s >= t`.
pub fn concatenate(f: &Path, t: f64, h: &Path) -> Path {
    let mut out = PathBuilder::with_capacity(f.segments.len() + h.segments.len());
    for s in f.segments.iter().take_while(|s| s.start < t) {
        out.push(s.start, s.value, s.slope);
    }
    for s in &h.segments {
        out.push(s.start + t, s.value, s.slope);
    }
    out.finish(t + h.end)
}

/// Piecewise-linear test function through `knots`, zero outside
/// `[knots[0].0, knots[last].0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    knots: Vec<(f64, f64)>,
}

impl TestFunction {
    /// Knots must have strictly increasing abscissae, all `>= 0`.
    pub fn new(knots: Vec<(f64, f64)>) -> Option<Self> {
        let ok = knots.len() >= 2
            && knots[0].0 >= 0.0
            && knots.windows(2).all(|w| w[0].0 < w[1].0)
            && knots.iter().all(|k| k.0.is_finite() && k.1.is_finite());
        ok.then_some(Self { knots })
    }

    /// Tent of height `h` centred at `c` with half-width `w`.
    pub fn tent(c: f64, w: f64, h: f64) -> Self {
        let lo = (c - w).max(0.0);
        Self::new(vec![(lo, if lo > c - w { h * (1.0 - (c - lo) / w) } else { 0.0 }), (c, h), (c + w, 0.0)])
            .expect("valid tent")
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn value(&self, a: f64) -> f64 {
        let k = &self.knots;
        if a < k[0].0 || a > k[k.len() - 1].0 {
            return 0.0;
        }
        let i = k.partition_point(|p| p.0 <= a).clamp(1, k.len() - 1);
        let (a0, v0) = k[i - 1];
        let (a1, v1) = k[i];
        v0 + (v1 - v0) * (a - a0) / (a1 - a0)
    }

    /// `∫_lo^hi φ(a) da`, exact.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return -self.integral(hi, lo);
        }
        let mut acc = 0.0;
        for w in self.knots.windows(2) {
            let (a0, v0) = w[0];
            let (a1, v1) = w[1];
            let x0 = lo.max(a0);
            let x1 = hi.min(a1);
            if x1 > x0 {
                let s = (v1 - v0) / (a1 - a0);
                let y0 = v0 + s * (x0 - a0);
                let y1 = v0 + s * (x1 - a0);
                acc += 0.5 * (y0 + y1) * (x1 - x0);
            }
        }
        acc
    }
}

/// `∫_0^t φ(f(s)) ds`, integrating each affine piece in the level variable.
pub fn occupation_integral(f: &Path, phi: &TestFunction, t: f64) -> f64 {
    let mut acc = 0.0;
    for (i, s) in f.segments.iter().enumerate() {
        if s.start >= t {
            break;
        }
        let e = f.segment_end(i).min(t);
        let d = e - s.start;
        if d <= 0.0 {
            continue;
        }
        if s.slope == 0.0 {
            acc += phi.value(s.value) * d;
        } else {
            let v1 = s.eval(e);
            acc += phi.integral(s.value.min(v1), s.value.max(v1)) / s.slope.abs();
        }
    }
    acc
}
