//! Census of closed geodesics by length.
//!
//! The closed geodesics counted are the meridians, the parallels through
//! critical points of `h`, and the oscillating geodesics `γ_a` whose trip
//! rotation is a rational multiple `2πp/q` of a full turn; such a `γ_a`
//! closes after `q` full trips and has length `q·L(a)`.
//!
//! Before enumerating, the census looks for the two situations in which
//! `N(ℓ)` is infinite: an interval of critical points (a continuum of
//! parallels) and an interval on which `R` is constant (a continuum of
//! closed `γ_a` of bounded length). A profile whose `R` is identically `2π`
//! and whose curvature is identically 1 is the round sphere, on which every
//! geodesic is a congruent great circle.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{self, Write};

use num_integer::Integer;
use rayon::prelude::*;
use serde::Serialize;

use crate::clairaut::{self, USet};
use crate::error::{Error, Result};
use crate::farey::{self, Interval};
use crate::geodesic::{self, f17, GeodesicState};
use crate::profile::{self, Surface, SurfaceKind};
use crate::roots;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensusOptions {
    pub lmax: f64,
    /// optional cap on `q` on top of `⌊lmax / L_min⌋`
    pub q_max: Option<u64>,
    /// rotation-curve samples per interval of `U`
    pub grid_n: usize,
    pub quad_tol: f64,
    /// residual `|R(a) − 2πp/q|` accepted by the root solver
    pub solver_tol: f64,
    /// variation of `R` below which a window counts as constant
    pub tol_flat: f64,
    /// minimum plateau width as a fraction of its interval of `U`
    pub flat_fraction: f64,
    /// bands and parallels closer than this are the same geodesic
    pub dedup_tol: f64,
    /// fraction of each interval of `U` left unsampled at either end
    pub scan_margin: f64,
    /// tolerance on `h″ + h = 0` for the round-sphere test
    pub round_tol: f64,
}

impl Default for CensusOptions {
    fn default() -> Self {
        CensusOptions {
            lmax: 100.0,
            q_max: None,
            grid_n: 200,
            quad_tol: clairaut::DEFAULT_QUAD_TOL,
            solver_tol: 1e-11,
            tol_flat: 1e-7,
            flat_fraction: 0.01,
            dedup_tol: 1e-7,
            scan_margin: 0.005,
            round_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum RecordClass {
    Meridian,
    Parallel { s0: f64 },
    Rational { a: f64, b: f64, p: i64, q: u64 },
}

/// Equivalence class of a closed geodesic under the isometries in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum DedupKey {
    Meridian,
    /// `s₀` in units of the dedup tolerance
    Parallel { s0: i64 },
    /// band ends in units of the dedup tolerance, and the reduced rotation
    Rational { lo: i64, hi: i64, p: i64, q: u64 },
    /// every geodesic of the round sphere
    RoundSphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedGeodesicRecord {
    #[serde(flatten)]
    pub class: RecordClass,
    pub length: f64,
    pub key: DedupKey,
}

/// What the dedup key may identify: translates in `θ` always, the
/// reflection `s ↦ π − s` when it is an isometry, and everything on the
/// round sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyContext {
    pub tol: f64,
    pub torus: bool,
    pub mirror: bool,
    pub round: bool,
}

impl KeyContext {
    pub fn for_surface(surface: &Surface, tol: f64) -> KeyContext {
        let p = surface.profile();
        KeyContext {
            tol,
            torus: p.is_torus(),
            mirror: profile::has_equatorial_symmetry(p, 1e-9),
            round: false,
        }
    }

    fn fold(&self, s: f64) -> f64 {
        if self.torus {
            s.rem_euclid(PI)
        } else {
            s
        }
    }

    fn quantize(&self, x: f64) -> i64 {
        (x / self.tol).round() as i64
    }
}

pub fn dedup_key(class: &RecordClass, ctx: &KeyContext) -> DedupKey {
    if ctx.round {
        return DedupKey::RoundSphere;
    }
    match *class {
        RecordClass::Meridian => DedupKey::Meridian,
        RecordClass::Parallel { s0 } => {
            let s = ctx.fold(s0);
            let s = if ctx.mirror { s.min(ctx.fold(PI - s)) } else { s };
            DedupKey::Parallel { s0: ctx.quantize(s) }
        }
        RecordClass::Rational { a, b, p, q } => {
            let g = p.gcd(&(q as i64));
            let (p, q) = (p / g, q / g as u64);
            let band = |lo: f64, hi: f64| {
                let shift = ctx.fold(lo) - lo;
                (ctx.quantize(lo + shift), ctx.quantize(hi + shift))
            };
            let mut ends = band(a, b);
            if ctx.mirror {
                ends = ends.min(band(PI - b, PI - a));
            }
            DedupKey::Rational { lo: ends.0, hi: ends.1, p, q }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanSample {
    pub a: f64,
    pub b: f64,
    /// half-trip time
    pub t: f64,
    pub rotation: f64,
    pub length: f64,
}

/// Samples over one interval of `U`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSegment {
    pub interval: (f64, f64),
    pub samples: Vec<ScanSample>,
    /// `a`-ranges on which `R` is constant to within the flatness tolerance
    pub plateaus: Vec<(f64, f64)>,
}

impl ScanSegment {
    fn rotation_range(&self) -> Option<(f64, f64)> {
        range(self.samples.iter().map(|s| s.rotation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationScan {
    pub segments: Vec<ScanSegment>,
    pub diagnostics: Vec<String>,
}

impl RotationScan {
    pub fn samples(&self) -> impl Iterator<Item = &ScanSample> {
        self.segments.iter().flat_map(|s| s.samples.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.samples().next().is_none()
    }

    /// `[min R, max R]` over all samples.
    pub fn image(&self) -> Option<(f64, f64)> {
        range(self.samples().map(|s| s.rotation))
    }

    /// `R` varies by at most `tol` over the whole scan.
    pub fn is_flat(&self, tol: f64) -> bool {
        self.image().is_some_and(|(lo, hi)| hi - lo <= tol)
    }

    pub fn has_plateau(&self) -> bool {
        self.segments.iter().any(|s| !s.plateaus.is_empty())
    }

    /// Writes `a,b,T,R,L` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let trips: Vec<clairaut::TripData> = self
            .samples()
            .map(|s| clairaut::TripData { a: s.a, b: s.b, t_half: s.t, rotation: s.rotation, length: s.length })
            .collect();
        clairaut::write_trip_csv(out, &trips)
    }
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub grid_n: usize,
    pub quad_tol: f64,
    pub tol_flat: f64,
    pub flat_fraction: f64,
    pub margin: f64,
}

impl From<&CensusOptions> for ScanOptions {
    fn from(o: &CensusOptions) -> Self {
        ScanOptions {
            grid_n: o.grid_n,
            quad_tol: o.quad_tol,
            tol_flat: o.tol_flat,
            flat_fraction: o.flat_fraction,
            margin: o.scan_margin,
        }
    }
}

impl Default for ScanOptions {
    fn default() -> Self {
        (&CensusOptions::default()).into()
    }
}

/// Samples `a ↦ (b(a), T(a), R(a), L(a))` on a uniform grid inside each
/// interval of `U`, keeping a margin from its ends, and marks windows of
/// at least `flat_fraction` of the interval on which `R` is constant.
pub fn scan_rotation_curve(surface: &Surface, u: &USet, opts: &ScanOptions) -> RotationScan {
    let n = opts.grid_n.max(3);
    let mut segments = Vec::new();
    let mut diagnostics = Vec::new();
    for &(lo, hi) in &u.intervals {
        let width = hi - lo;
        let margin = (opts.margin * width).max(2.0 * clairaut::BOUNDARY_MARGIN);
        if width <= 2.0 * margin {
            diagnostics.push(format!("interval ({lo}, {hi}) of U too narrow to sample"));
            continue;
        }
        let grid: Vec<f64> = (0..n)
            .map(|i| lo + margin + (width - 2.0 * margin) * i as f64 / (n - 1) as f64)
            .collect();
        let results: Vec<_> = grid
            .par_iter()
            .map(|&a| clairaut::trip_quadrature(surface, a, opts.quad_tol))
            .collect();
        let mut samples = Vec::with_capacity(n);
        for (a, r) in grid.iter().zip(results) {
            match r {
                Ok(t) => samples.push(ScanSample { a: t.a, b: t.b, t: t.t_half, rotation: t.rotation, length: t.length }),
                Err(e) => diagnostics.push(format!("a = {a}: {e}")),
            }
        }
        let plateaus = find_plateaus(&samples, opts.flat_fraction * width, opts.tol_flat);
        segments.push(ScanSegment { interval: (lo, hi), samples, plateaus });
    }
    RotationScan { segments, diagnostics }
}

/// Maximal runs of samples spanning at least `min_width` in `a` with
/// `max R − min R ≤ tol`, merged where they overlap.
fn find_plateaus(samples: &[ScanSample], min_width: f64, tol: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut start = 0;
    while start < samples.len() {
        let mut end = start;
        let (mut lo, mut hi) = (samples[start].rotation, samples[start].rotation);
        while end + 1 < samples.len() {
            let r = samples[end + 1].rotation;
            if hi.max(r) - lo.min(r) > tol {
                break;
            }
            lo = lo.min(r);
            hi = hi.max(r);
            end += 1;
        }
        let (a0, a1) = (samples[start].a, samples[end].a);
        if end > start && a1 - a0 >= min_width {
            match out.last_mut() {
                Some(last) if last.1 >= a0 => last.1 = last.1.max(a1),
                _ => out.push((a0, a1)),
            }
        }
        start += 1;
    }
    out
}

/// A point `a` with `R(a) = 2πp/q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RationalRoot {
    pub a: f64,
    pub p: i64,
    pub q: u64,
}

/// Every reduced `p/q` with `q ≤ q_max` whose rotation `2πp/q` lies between
/// the values of `R` at neighbouring samples is solved for inside that
/// cell. Cells where `q·L` certainly exceeds `lmax` are skipped when
/// `lmax` is given.
pub fn solve_rational_rotations(
    surface: &Surface,
    scan: &RotationScan,
    q_max: u64,
    solver_tol: f64,
    quad_tol: f64,
    lmax: Option<f64>,
) -> (Vec<RationalRoot>, Vec<String>) {
    struct Target {
        lo: (f64, f64),
        hi: (f64, f64),
        p: i64,
        q: u64,
    }
    let mut targets = Vec::new();
    for seg in &scan.segments {
        for w in seg.samples.windows(2) {
            let (x, y) = (&w[0], &w[1]);
            let (r_lo, r_hi) = (x.rotation.min(y.rotation), x.rotation.max(y.rotation));
            let l_floor = 0.5 * x.length.min(y.length);
            for q in 1..=q_max {
                if lmax.is_some_and(|l| q as f64 * l_floor > l) {
                    break;
                }
                let qf = q as f64;
                let p_lo = (qf * r_lo / TWO_PI).ceil() as i64;
                let p_hi = (qf * r_hi / TWO_PI).floor() as i64;
                for p in p_lo..=p_hi {
                    if p.gcd(&(q as i64)) == 1 {
                        targets.push(Target { lo: (x.a, x.rotation), hi: (y.a, y.rotation), p, q });
                    }
                }
            }
        }
    }
    let solved: Vec<Result<RationalRoot>> = targets
        .par_iter()
        .map(|t| {
            let goal = TWO_PI * t.p as f64 / t.q as f64;
            let f = |a: f64| clairaut::rotation_r(surface, a, quad_tol).map(|r| r - goal);
            let a = roots::illinois(f, t.lo.0, t.hi.0, t.lo.1 - goal, t.hi.1 - goal, solver_tol)?;
            Ok(RationalRoot { a, p: t.p, q: t.q })
        })
        .collect();
    let mut found = Vec::new();
    let mut diagnostics = Vec::new();
    for r in solved {
        match r {
            Ok(root) => found.push(root),
            Err(e) => diagnostics.push(format!("rotation solve failed: {e}")),
        }
    }
    (found, diagnostics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    /// `N(ℓ) = 1` for all sufficiently large `ℓ`
    RoundLike,
    /// `N(ℓ) = ∞` beyond `infinite_at`
    Infinite,
    /// `N(ℓ) ≥ c ℓ²` on the scanned range
    Quadratic,
    /// none of the above could be established
    Inconclusive,
}

/// The interval `I′ ⊆ U` on which the quadratic bound is probed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub a_lo: f64,
    pub a_hi: f64,
    /// `R(I′) / 2π`
    pub image_lo: f64,
    pub image_hi: f64,
    /// max `L` on `I′`
    pub l0: f64,
}

/// The rational count predicted by the Farey lemma for the probe interval:
/// every `p/q ∈ R(I′)/2π` with `q ≤ ⌊ℓ_max / L₀⌋` gives a distinct closed
/// geodesic of length at most `ℓ_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FareyCheck {
    pub n: u64,
    pub predicted: u64,
    pub rational_records: u64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NRow {
    pub length: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSummary {
    pub kind: SurfaceKind,
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusResult {
    pub profile: ProfileSummary,
    #[serde(rename = "l_max")]
    pub lmax: f64,
    pub verdict: Verdict,
    pub records: Vec<ClosedGeodesicRecord>,
    #[serde(rename = "N_table")]
    pub n_table: Vec<NRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infinite_at: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<Probe>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub farey_check: Option<FareyCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torus_case: Option<TorusCase>,
    pub diagnostics: Vec<String>,
}

impl CensusResult {
    /// `N(ℓ)`, or `None` where it is infinite.
    pub fn n_at(&self, ell: f64) -> Option<u64> {
        if self.infinite_at.is_some_and(|l| ell >= l) {
            return None;
        }
        Some(self.records.iter().filter(|r| r.length <= ell).count() as u64)
    }

    pub fn rational_count(&self) -> u64 {
        self.records.iter().filter(|r| matches!(r.class, RecordClass::Rational { .. })).count() as u64
    }

    /// Writes `length,N` rows; a final row with `N = inf` marks
    /// `infinite_at`.
    pub fn write_n_table_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "length,N")?;
        for row in &self.n_table {
            writeln!(out, "{},{}", f17(row.length), row.count)?;
        }
        if let Some(l) = self.infinite_at {
            writeln!(out, "{},inf", f17(l))?;
        }
        Ok(())
    }
}

/// The two alternatives for a torus profile: a non-isolated critical
/// point, or an isolated local minimum of `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "case")]
pub enum TorusCase {
    NonIsolated { span: (f64, f64) },
    AsymptoticCase { s0: f64 },
}

pub fn torus_case_split(surface: &Surface) -> Result<TorusCase> {
    if !surface.profile().is_torus() {
        return Err(Error::InvalidArgument("case split applies to torus profiles".into()));
    }
    let critical = surface.critical_points();
    if let Some(span) = critical.iter().find_map(|c| c.span) {
        return Ok(TorusCase::NonIsolated { span });
    }
    critical
        .iter()
        .filter(|c| c.is_local_min())
        .min_by(|x, y| x.h_value.total_cmp(&y.h_value))
        .map(|c| TorusCase::AsymptoticCase { s0: c.s0 })
        .ok_or_else(|| Error::InvalidArgument("no local minimum found on a periodic profile".into()))
}

/// Records that exist for every profile: the meridian and the parallels
/// through isolated critical points.
fn base_records(surface: &Surface) -> Vec<RecordClass> {
    let mut out = vec![RecordClass::Meridian];
    out.extend(
        surface
            .critical_points()
            .iter()
            .filter(|c| !c.is_span())
            .map(|c| RecordClass::Parallel { s0: c.s0 }),
    );
    out
}

fn record_length(surface: &Surface, class: &RecordClass, trip_length: f64) -> f64 {
    let p = surface.profile();
    match *class {
        // pole to pole and back on the sphere; once around the period on the torus
        RecordClass::Meridian => {
            if p.is_torus() {
                p.period()
            } else {
                TWO_PI
            }
        }
        RecordClass::Parallel { s0 } => TWO_PI * p.h(s0),
        RecordClass::Rational { q, .. } => q as f64 * trip_length,
    }
}

/// Keeps the shortest record of each key, sorted by length then key.
fn dedup(records: Vec<ClosedGeodesicRecord>) -> Vec<ClosedGeodesicRecord> {
    let mut best: BTreeMap<DedupKey, ClosedGeodesicRecord> = BTreeMap::new();
    for r in records {
        best.entry(r.key)
            .and_modify(|cur| {
                if r.length < cur.length {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let mut out: Vec<_> = best.into_values().collect();
    out.sort_by(|x, y| x.length.total_cmp(&y.length).then(x.key.cmp(&y.key)));
    out
}

fn n_table(records: &[ClosedGeodesicRecord]) -> Vec<NRow> {
    let mut rows: Vec<NRow> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match rows.last_mut() {
            Some(last) if last.length == r.length => last.count = i as u64 + 1,
            _ => rows.push(NRow { length: r.length, count: i as u64 + 1 }),
        }
    }
    rows
}

/// `min N(ℓ)/ℓ²` over `ℓ ∈ [ℓ₀, ℓ_max]`. Between jumps the ratio decreases,
/// so the minimum is attained just before a jump or at `ℓ_max`.
pub fn growth_constant(records: &[ClosedGeodesicRecord], l0: f64, lmax: f64) -> Option<f64> {
    if !(l0 < lmax) {
        return None;
    }
    let below = |ell: f64| records.iter().filter(|r| r.length < ell).count() as f64;
    let upto = |ell: f64| records.iter().filter(|r| r.length <= ell).count() as f64;
    let mut best = (upto(l0) / (l0 * l0)).min(upto(lmax) / (lmax * lmax));
    for r in records {
        if r.length > l0 && r.length <= lmax {
            best = best.min(below(r.length) / (r.length * r.length));
        }
    }
    Some(best)
}

/// Middle half of the interval of `U` whose rotation image is widest.
fn choose_probe(scan: &RotationScan) -> Option<Probe> {
    let seg = scan
        .segments
        .iter()
        .filter_map(|s| s.rotation_range().map(|(lo, hi)| (hi - lo, s)))
        .max_by(|x, y| x.0.total_cmp(&y.0))?
        .1;
    let (lo, hi) = seg.interval;
    let (a_lo, a_hi) = (lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo));
    let inner: Vec<&ScanSample> = seg.samples.iter().filter(|s| s.a >= a_lo && s.a <= a_hi).collect();
    let (r_lo, r_hi) = range(inner.iter().map(|s| s.rotation))?;
    let l0 = inner.iter().map(|s| s.length).fold(f64::NEG_INFINITY, f64::max);
    let (a_lo, a_hi) = range(inner.iter().map(|s| s.a))?;
    Some(Probe { a_lo, a_hi, image_lo: r_lo / TWO_PI, image_hi: r_hi / TWO_PI, l0 })
}

/// Builds the census of closed geodesics of length at most `opts.lmax`.
pub fn build_census(surface: &Surface, opts: &CensusOptions) -> Result<CensusResult> {
    if !(opts.lmax > 0.0) {
        return Err(Error::InvalidArgument(format!("lmax = {} must be positive", opts.lmax)));
    }
    let p = surface.profile();
    let mut ctx = KeyContext::for_surface(surface, opts.dedup_tol);
    let mut result = CensusResult {
        profile: ProfileSummary { kind: p.kind(), formula: p.expr().to_string() },
        lmax: opts.lmax,
        verdict: Verdict::Inconclusive,
        records: Vec::new(),
        n_table: Vec::new(),
        infinite_at: None,
        growth_constant: None,
        probe: None,
        farey_check: None,
        torus_case: if p.is_torus() { Some(torus_case_split(surface)?) } else { None },
        diagnostics: Vec::new(),
    };
    let make = |classes: Vec<(RecordClass, f64)>, ctx: &KeyContext| -> Vec<ClosedGeodesicRecord> {
        let all = classes
            .into_iter()
            .map(|(class, trip)| ClosedGeodesicRecord { class, length: record_length(surface, &class, trip), key: dedup_key(&class, ctx) })
            .filter(|r| r.length <= opts.lmax)
            .collect();
        dedup(all)
    };
    let base: Vec<(RecordClass, f64)> = base_records(surface).into_iter().map(|c| (c, 0.0)).collect();
    let finish = |mut result: CensusResult, records: Vec<ClosedGeodesicRecord>| {
        let cut = result.infinite_at.unwrap_or(f64::INFINITY);
        result.n_table = n_table(&records).into_iter().filter(|r| r.length < cut).collect();
        result.records = records;
        result
    };

    // a continuum of parallels
    let span_bound = surface
        .critical_points()
        .iter()
        .filter(|c| c.is_span())
        .map(|c| TWO_PI * c.h_value)
        .fold(f64::INFINITY, f64::min);
    if span_bound.is_finite() {
        result.verdict = Verdict::Infinite;
        result.infinite_at = Some(span_bound);
        result.diagnostics.push("h has a non-isolated critical point".into());
        let records = make(base, &ctx);
        return Ok(finish(result, records));
    }

    let u = clairaut::compute_u(surface, opts.grid_n.max(256));
    let scan = scan_rotation_curve(surface, &u, &opts.into());
    result.diagnostics.extend(scan.diagnostics.iter().cloned());
    if scan.is_empty() {
        result.diagnostics.push("U is empty; no oscillating closed geodesics to count".into());
        let records = make(base, &ctx);
        return Ok(finish(result, records));
    }

    // R ≡ 2π everywhere
    let image = scan.image().expect("non-empty scan");
    let rotation_is_full_turn = scan.is_flat(opts.tol_flat) && (image.0 - TWO_PI).abs() <= opts.tol_flat && (image.1 - TWO_PI).abs() <= opts.tol_flat;
    if rotation_is_full_turn && !p.is_torus() && profile::has_unit_curvature(p, opts.round_tol) {
        result.verdict = Verdict::RoundLike;
        ctx.round = true;
        let mut classes = base;
        let mid = &scan.segments[0].samples[scan.segments[0].samples.len() / 2];
        classes.push((RecordClass::Rational { a: mid.a, b: mid.b, p: 1, q: 1 }, mid.length));
        let records = make(classes, &ctx);
        return Ok(finish(result, records));
    }

    // R constant on an interval: closed γ_a of length at most max L there
    let plateau_bound = scan
        .segments
        .iter()
        .flat_map(|seg| {
            seg.plateaus.iter().map(move |&(lo, hi)| {
                seg.samples
                    .iter()
                    .filter(|s| s.a >= lo && s.a <= hi)
                    .map(|s| s.length)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
        })
        .fold(f64::INFINITY, f64::min);
    if plateau_bound.is_finite() {
        result.verdict = Verdict::Infinite;
        result.infinite_at = Some(plateau_bound);
        result.diagnostics.push("rotation is locally constant on part of U".into());
        let records = make(base, &ctx);
        return Ok(finish(result, records));
    }

    let l_min = scan.samples().map(|s| s.length).fold(f64::INFINITY, f64::min);
    let mut q_cap = (opts.lmax / l_min).floor() as u64;
    if let Some(q) = opts.q_max {
        q_cap = q_cap.min(q);
    }
    let (roots, diags) = solve_rational_rotations(surface, &scan, q_cap, opts.solver_tol, opts.quad_tol, Some(opts.lmax));
    result.diagnostics.extend(diags);
    let trips: Vec<Result<(RecordClass, f64)>> = roots
        .par_iter()
        .map(|r| {
            let trip = clairaut::trip_quadrature(surface, r.a, opts.quad_tol)?;
            Ok((RecordClass::Rational { a: r.a, b: trip.b, p: r.p, q: r.q }, trip.length))
        })
        .collect();
    let mut classes = base;
    for t in trips {
        match t {
            Ok(c) => classes.push(c),
            Err(e) => result.diagnostics.push(format!("trip evaluation failed: {e}")),
        }
    }
    let records = make(classes, &ctx);

    if let Some(probe) = choose_probe(&scan) {
        result.probe = Some(probe);
        let rational = records.iter().filter(|r| matches!(r.class, RecordClass::Rational { .. })).count() as u64;
        let n = (opts.lmax / probe.l0).floor() as u64;
        if n >= 1 && probe.image_hi > probe.image_lo {
            let iv = Interval::closed(probe.image_lo, probe.image_hi).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let predicted = farey::count_rationals_in_interval(&iv, n).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            result.farey_check = Some(FareyCheck { n, predicted, rational_records: rational, holds: rational >= predicted });
        }
        result.growth_constant = growth_constant(&records, 3.0 * probe.l0, opts.lmax);
        if result.growth_constant.is_none() {
            result.diagnostics.push(format!("lmax is below 3 L0 = {}", 3.0 * probe.l0));
        }
    }
    let growth = result.growth_constant.is_some_and(|c| c > 0.0);
    let farey_ok = result.farey_check.is_none_or(|f| f.holds);
    result.verdict = if growth && farey_ok { Verdict::Quadratic } else { Verdict::Inconclusive };
    Ok(finish(result, records))
}

/// How far a rational record's geodesic lands from its start after `q`
/// full trips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosureWitness {
    pub ds: f64,
    /// distance of the end angle from the start angle, modulo `2π`
    pub dtheta: f64,
    pub theta_advance: f64,
}

impl ClosureWitness {
    pub fn within(&self, tol: f64) -> bool {
        self.ds <= tol && self.dtheta <= tol
    }
}

/// Re-integrates a rational record for its full length.
pub fn closure_witness(surface: &Surface, record: &ClosedGeodesicRecord, rtol: f64) -> Result<ClosureWitness> {
    let RecordClass::Rational { a, .. } = record.class else {
        return Err(Error::InvalidArgument("closure witness needs a rational record".into()));
    };
    let p = surface.profile();
    let traj = geodesic::integrate_geodesic(p, GeodesicState::horizontal(p, a, 0.0), record.length, rtol)?;
    let end = traj.last().state;
    let wrapped = end.theta.rem_euclid(TWO_PI);
    Ok(ClosureWitness {
        ds: (end.s - a).abs(),
        dtheta: wrapped.min(TWO_PI - wrapped),
        theta_advance: end.theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Profile;

    fn surface(kind: SurfaceKind, f: &str) -> Surface {
        Surface::new(Profile::parse(kind, f).unwrap())
    }

    fn ctx() -> KeyContext {
        KeyContext { tol: 1e-7, torus: false, mirror: false, round: false }
    }

    #[test]
    fn keys_ignore_launch_angle_and_unreduced_fractions() {
        let a = RecordClass::Rational { a: 0.4, b: 2.5, p: 3, q: 4 };
        let b = RecordClass::Rational { a: 0.4, b: 2.5, p: 6, q: 8 };
        assert_eq!(dedup_key(&a, &ctx()), dedup_key(&b, &ctx()));
    }

    #[test]
    fn keys_separate_classes_and_bands() {
        let k = ctx();
        let par = dedup_key(&RecordClass::Parallel { s0: PI / 2.0 }, &k);
        let rat = dedup_key(&RecordClass::Rational { a: 0.4, b: 2.5, p: 1, q: 1 }, &k);
        assert_ne!(par, rat);
        let x = dedup_key(&RecordClass::Rational { a: 0.4, b: 2.5, p: 1, q: 2 }, &k);
        let y = dedup_key(&RecordClass::Rational { a: 0.5, b: 2.4, p: 1, q: 2 }, &k);
        assert_ne!(x, y);
    }

    #[test]
    fn mirror_merges_reflected_bands() {
        let k = KeyContext { mirror: true, ..ctx() };
        let x = dedup_key(&RecordClass::Rational { a: 0.3, b: 2.0, p: 1, q: 2 }, &k);
        let y = dedup_key(&RecordClass::Rational { a: PI - 2.0, b: PI - 0.3, p: 1, q: 2 }, &k);
        assert_eq!(x, y);
        let p = dedup_key(&RecordClass::Parallel { s0: 0.7 }, &k);
        assert_eq!(p, dedup_key(&RecordClass::Parallel { s0: PI - 0.7 }, &k));
    }

    #[test]
    fn torus_keys_fold_the_period() {
        let k = KeyContext { torus: true, ..ctx() };
        let x = dedup_key(&RecordClass::Rational { a: 2.0, b: 4.0, p: 2, q: 3 }, &k);
        let y = dedup_key(&RecordClass::Rational { a: 2.0 + PI, b: 4.0 + PI, p: 2, q: 3 }, &k);
        assert_eq!(x, y);
    }

    #[test]
    fn plateaus_need_minimum_width() {
        let s = |a: f64, r: f64| ScanSample { a, b: 0.0, t: 0.0, rotation: r, length: 1.0 };
        let flat: Vec<_> = (0..10).map(|i| s(i as f64 * 0.1, 1.0)).collect();
        assert_eq!(find_plateaus(&flat, 0.5, 1e-7), vec![(0.0, 0.9)]);
        let slope: Vec<_> = (0..10).map(|i| s(i as f64 * 0.1, i as f64)).collect();
        assert!(find_plateaus(&slope, 0.05, 1e-7).is_empty());
    }

    #[test]
    fn growth_constant_at_jumps() {
        let rec = |l: f64| ClosedGeodesicRecord { class: RecordClass::Meridian, length: l, key: DedupKey::Meridian };
        let records = vec![rec(1.0), rec(2.0), rec(3.0)];
        // candidates: 1/1.5², 1/2² and 2/3² before the jumps, 3/4² at the end
        let c = growth_constant(&records, 1.5, 4.0).unwrap();
        assert!((c - 3.0 / 16.0).abs() < 1e-15);
        let c = growth_constant(&records, 1.5, 3.5).unwrap();
        assert!((c - 2.0 / 9.0).abs() < 1e-15);
        assert!(growth_constant(&records, 5.0, 4.0).is_none());
    }

    #[test]
    fn torus_case_split_examples() {
        let flat = surface(SurfaceKind::Torus, "1");
        assert!(matches!(torus_case_split(&flat).unwrap(), TorusCase::NonIsolated { .. }));
        match torus_case_split(&surface(SurfaceKind::Torus, "2 + cos(2*s)")).unwrap() {
            TorusCase::AsymptoticCase { s0 } => assert!((s0 - PI / 2.0).abs() < 1e-12),
            c => panic!("{c:?}"),
        }
        let s = surface(SurfaceKind::Torus, "2 + cos(2*s) + 0.3*cos(4*s)");
        let TorusCase::AsymptoticCase { s0 } = torus_case_split(&s).unwrap() else { panic!() };
        assert!(s.profile().dh(s0).abs() < 1e-12 && s.profile().d2h(s0) > 0.0);
        assert!(torus_case_split(&surface(SurfaceKind::Sphere, "sin(s)")).is_err());
    }

    #[test]
    fn round_sphere_census() {
        let s = surface(SurfaceKind::Sphere, "sin(s)");
        let c = build_census(&s, &CensusOptions { lmax: 100.0, grid_n: 50, ..Default::default() }).unwrap();
        assert_eq!(c.verdict, Verdict::RoundLike);
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.n_at(6.0), Some(0));
        assert_eq!(c.n_at(TWO_PI), Some(1));
        assert_eq!(c.n_at(100.0), Some(1));
    }

    #[test]
    fn flat_torus_is_infinite() {
        let c = build_census(&surface(SurfaceKind::Torus, "1"), &CensusOptions::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Infinite);
        assert!((c.infinite_at.unwrap() - TWO_PI).abs() < 1e-12);
        assert_eq!(c.n_at(7.0), None);
    }

    #[test]
    fn rational_targets_by_brute_force() {
        // fractions in [0.98, 1.10] with denominator at most 5 and 20
        let count = |qmax: i64| {
            (1..=qmax)
                .flat_map(|q| (0..=2 * q).map(move |p| (p, q)))
                .filter(|&(p, q)| p.gcd(&q) == 1 && 0.98 * q as f64 <= p as f64 && p as f64 <= 1.10 * q as f64)
                .count()
        };
        assert_eq!(count(5), 1);
        let iv = Interval::closed(0.98, 1.10).unwrap();
        assert_eq!(farey::count_rationals_in_interval(&iv, 5).unwrap(), 1);
        assert_eq!(farey::count_rationals_in_interval(&iv, 20).unwrap() as usize, count(20));
    }
}
