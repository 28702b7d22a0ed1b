//! Ground-truth generation, detector emulation, and dataset plumbing:
//! the Godunov LWR solver, manufactured solutions with exact derivatives,
//! time-averaged sparse sampling, uniform collocation generation, and
//! detector CSV ingestion.
//!
//! Dataset objects are immutable after construction.

pub mod detector;
pub mod godunov;
pub mod jets;
pub mod manufactured;
pub mod stencil;

pub use detector::{load_detector_csv, write_detector_csv};
pub use godunov::{solve_lwr_godunov, Boundary, GodunovGrid, InitialDensity};
pub use manufactured::{ManufacturedField, ManufacturedKind, PolyXY};

use crate::error::{Error, Result};
use crate::physics::{NormScale, PhysicsSpec};
use std::io::Write as _;
use std::path::Path;

/// Rectangular space-time domain, physical units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl Rect {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_hi > self.x_lo) || !(self.t_hi > self.t_lo) {
            return Err(Error::config("degenerate domain rectangle"));
        }
        Ok(())
    }

    pub fn span_x(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn span_t(&self) -> f64 {
        self.t_hi - self.t_lo
    }

    pub fn contains(&self, x: f64, t: f64) -> bool {
        let ex = 1e-9 * self.span_x().max(1.0);
        let et = 1e-9 * self.span_t().max(1.0);
        x >= self.x_lo - ex && x <= self.x_hi + ex && t >= self.t_lo - et && t <= self.t_hi + et
    }
}

/// Dense matrix over the (t, x) lattice, row-major in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub nx: usize,
    pub nt: usize,
    data: Vec<f64>,
}

impl Grid2 {
    pub fn zeros(nx: usize, nt: usize) -> Self {
        Grid2 {
            nx,
            nt,
            data: vec![0.0; nx * nt],
        }
    }

    #[inline]
    pub fn get(&self, ti: usize, xi: usize) -> f64 {
        self.data[ti * self.nx + xi]
    }

    #[inline]
    pub fn set(&mut self, ti: usize, xi: usize, v: f64) {
        self.data[ti * self.nx + xi] = v;
    }

    pub fn row(&self, ti: usize) -> &[f64] {
        &self.data[ti * self.nx..(ti + 1) * self.nx]
    }
}

/// Dense ground truth on a fine uniform grid, with an optional analytic
/// descriptor providing closed-form partials.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub rho: Grid2,
    pub u: Grid2,
    pub analytic: Option<ManufacturedField>,
    pub spec: PhysicsSpec,
}

impl FieldSolution {
    pub fn new(
        x: Vec<f64>,
        t: Vec<f64>,
        rho: Grid2,
        u: Grid2,
        analytic: Option<ManufacturedField>,
        spec: PhysicsSpec,
    ) -> Result<Self> {
        if x.len() < 2 || t.len() < 2 {
            return Err(Error::config("field grid needs at least 2 points per axis"));
        }
        for (axis, name) in [(&x, "x"), (&t, "t")] {
            let d = axis[1] - axis[0];
            for w in axis.windows(2) {
                if ((w[1] - w[0]) - d).abs() > 1e-9 * d.abs().max(1.0) {
                    return Err(Error::config(format!("non-uniform {name} grid")));
                }
            }
        }
        if rho.nx != x.len() || rho.nt != t.len() || u.nx != x.len() || u.nt != t.len() {
            return Err(Error::config("grid shape mismatch"));
        }
        let tol = 1e-9 * spec.rho_max;
        for ti in 0..rho.nt {
            for xi in 0..rho.nx {
                let r = rho.get(ti, xi);
                if r < -tol || r > spec.rho_max + tol {
                    return Err(Error::domain(format!(
                        "density {r} outside [0, {}] at grid ({ti}, {xi})",
                        spec.rho_max
                    )));
                }
            }
        }
        Ok(FieldSolution {
            x,
            t,
            rho,
            u,
            analytic,
            spec,
        })
    }

    pub fn dx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn domain(&self) -> Rect {
        Rect {
            x_lo: self.x[0],
            x_hi: *self.x.last().unwrap(),
            t_lo: self.t[0],
            t_hi: *self.t.last().unwrap(),
        }
    }

    /// Linear interpolation in x at a fixed time index.
    fn interp_row(&self, grid: &Grid2, ti: usize, x: f64) -> f64 {
        let dx = self.dx();
        let s = ((x - self.x[0]) / dx).clamp(0.0, (self.x.len() - 1) as f64);
        let i0 = (s.floor() as usize).min(self.x.len() - 2);
        let w = s - i0 as f64;
        grid.get(ti, i0) * (1.0 - w) + grid.get(ti, i0 + 1) * w
    }

    pub fn rho_at(&self, ti: usize, x: f64) -> f64 {
        self.interp_row(&self.rho, ti, x)
    }

    pub fn u_at(&self, ti: usize, x: f64) -> f64 {
        self.interp_row(&self.u, ti, x)
    }
}

/// Sample a manufactured field onto a uniform lattice, keeping the analytic
/// descriptor attached.
pub fn manufactured_solution(
    kind: ManufacturedKind,
    spec: PhysicsSpec,
    domain: Rect,
    nx: usize,
    nt: usize,
) -> Result<FieldSolution> {
    let field = ManufacturedField::new(kind, spec.clone(), domain)?;
    if nx < 2 || nt < 2 {
        return Err(Error::config("manufactured lattice needs nx, nt >= 2"));
    }
    let x: Vec<f64> = (0..nx)
        .map(|i| domain.x_lo + domain.span_x() * i as f64 / (nx - 1) as f64)
        .collect();
    let t: Vec<f64> = (0..nt)
        .map(|k| domain.t_lo + domain.span_t() * k as f64 / (nt - 1) as f64)
        .collect();
    let mut rho = Grid2::zeros(nx, nt);
    let mut u = Grid2::zeros(nx, nt);
    for (k, &tk) in t.iter().enumerate() {
        for (i, &xi) in x.iter().enumerate() {
            rho.set(k, i, field.rho(xi, tk));
            u.set(k, i, field.u(xi, tk));
        }
    }
    FieldSolution::new(x, t, rho, u, Some(field), spec)
}

/// Detector sampling geometry: minimal sensor spacing and reporting
/// interval, both positive.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplingGeometry {
    pub delta_x: f64,
    pub delta_t: f64,
}

impl SamplingGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_x > 0.0) || !(self.delta_t > 0.0) {
            return Err(Error::config("sampling geometry must be positive"));
        }
        Ok(())
    }
}

/// One time-averaged detector record, physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub t: f64,
    pub rho: f64,
    pub u: f64,
}

/// A physical detector location with its reporting interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub id: String,
    pub x: f64,
    pub delta_t: f64,
}

/// Sparse, time-averaged observations plus collocation points and the
/// sampling/normalization metadata the trainer and auditors need.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorDataset {
    pub observations: Vec<Observation>,
    pub collocation: Vec<(f64, f64)>,
    pub stations: Vec<Station>,
    pub geometry: SamplingGeometry,
    pub scale: NormScale,
    pub domain: Rect,
}

impl DetectorDataset {
    pub fn validate(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(Error::config("dataset has no observations"));
        }
        self.geometry.validate()?;
        for o in &self.observations {
            if !self.domain.contains(o.x, o.t) {
                return Err(Error::domain(format!(
                    "observation at ({}, {}) outside the domain box",
                    o.x, o.t
                )));
            }
        }
        for c in &self.collocation {
            if !self.domain.contains(c.0, c.1) {
                return Err(Error::domain(format!(
                    "collocation point ({}, {}) outside the domain box",
                    c.0, c.1
                )));
            }
        }
        Ok(())
    }

    pub fn normalize_x(&self, x: f64) -> f64 {
        (x - self.domain.x_lo) / self.scale.l_x
    }

    pub fn normalize_t(&self, t: f64) -> f64 {
        (t - self.domain.t_lo) / self.scale.l_t
    }

    /// (x, t, rho, u) in normalized coordinates/targets.
    pub fn normalized_observations(&self) -> Vec<[f64; 4]> {
        self.observations
            .iter()
            .map(|o| {
                [
                    self.normalize_x(o.x),
                    self.normalize_t(o.t),
                    o.rho / self.scale.rho_max,
                    o.u / self.scale.u_max,
                ]
            })
            .collect()
    }

    pub fn normalized_collocation(&self) -> Vec<(f64, f64)> {
        self.collocation
            .iter()
            .map(|&(x, t)| (self.normalize_x(x), self.normalize_t(t)))
            .collect()
    }
}

/// Composite-Simpson average of `f` over [t - dt/2, t + dt/2] with `n`
/// (even) subintervals.
pub fn time_average_fn(f: &dyn Fn(f64) -> f64, t: f64, delta_t: f64, n: usize) -> Result<f64> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::config("Simpson subinterval count must be even and >= 2"));
    }
    let a = t - delta_t / 2.0;
    let h = delta_t / n as f64;
    let mut acc = f(a) + f(a + delta_t);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    Ok(acc * h / (3.0 * delta_t))
}

/// Time-averaged field samples on the full x-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedField {
    pub x: Vec<f64>,
    pub t_centers: Vec<f64>,
    pub rho_bar: Grid2,
    pub u_bar: Grid2,
    /// Report windows dropped because they left the domain.
    pub dropped: usize,
}

/// Number of fine-grid steps per averaging window; must be even (Simpson)
/// and at least 2.
fn window_steps(field: &FieldSolution, delta_t: f64) -> Result<usize> {
    let dt = field.dt();
    let ratio = delta_t / dt;
    let m = ratio.round() as usize;
    if m < 2 {
        return Err(Error::config(format!(
            "averaging window {delta_t} must span at least 2 fine-grid steps (dt = {dt})"
        )));
    }
    if (ratio - m as f64).abs() > 1e-6 || m % 2 != 0 {
        return Err(Error::config(format!(
            "averaging window {delta_t} must be an even multiple of the fine step {dt}"
        )));
    }
    Ok(m)
}

/// Simpson average over grid samples `ti0..=ti0+m` at interpolated x.
fn grid_window_average(field: &FieldSolution, grid: &Grid2, ti0: usize, m: usize, x: f64) -> f64 {
    let mut acc = field.interp_row(grid, ti0, x) + field.interp_row(grid, ti0 + m, x);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * field.interp_row(grid, ti0 + k, x);
    }
    acc / (3.0 * m as f64)
}

/// Time-average the whole field at reporting interval `delta_t`. Report
/// centers are spaced `delta_t` starting half a window after t_lo; windows
/// that would leave the domain are dropped and counted.
pub fn time_average(field: &FieldSolution, delta_t: f64) -> Result<AveragedField> {
    let m = window_steps(field, delta_t)?;
    let dt = field.dt();
    let nt = field.t.len();
    let mut centers = Vec::new();
    let mut starts = Vec::new();
    let mut dropped = 0usize;
    let mut k = 0usize;
    loop {
        // Window start index for the k-th report.
        let start = k * m;
        let center_t = field.t[0] + (start as f64 + m as f64 / 2.0) * dt;
        if center_t + delta_t / 2.0 > field.t[nt - 1] + 1e-9 * dt {
            if start < nt - 1 {
                dropped += 1;
            }
            break;
        }
        centers.push(center_t);
        starts.push(start);
        k += 1;
    }
    if centers.is_empty() {
        return Err(Error::config("no averaging window fits inside the domain"));
    }
    let nx = field.x.len();
    let mut rho_bar = Grid2::zeros(nx, centers.len());
    let mut u_bar = Grid2::zeros(nx, centers.len());
    for (r, &start) in starts.iter().enumerate() {
        for (i, &xi) in field.x.iter().enumerate() {
            rho_bar.set(r, i, grid_window_average(field, &field.rho, start, m, xi));
            u_bar.set(r, i, grid_window_average(field, &field.u, start, m, xi));
        }
    }
    Ok(AveragedField {
        x: field.x.clone(),
        t_centers: centers,
        rho_bar,
        u_bar,
        dropped,
    })
}

/// Emulate loop detectors: sensors every `delta_x` starting at the left
/// edge (endpoint-inclusive), reports every `delta_t`, values time-averaged.
pub fn sparse_sample(field: &FieldSolution, geometry: SamplingGeometry) -> Result<DetectorDataset> {
    geometry.validate()?;
    let domain = field.domain();
    let n_sensors = (domain.span_x() / geometry.delta_x + 1e-9).floor() as usize + 1;
    if n_sensors < 2 {
        return Err(Error::config(format!(
            "sensor spacing {} yields fewer than 2 sensors over span {}",
            geometry.delta_x,
            domain.span_x()
        )));
    }
    let sensor_x: Vec<f64> = (0..n_sensors)
        .map(|s| domain.x_lo + s as f64 * geometry.delta_x)
        .collect();
    if let Some(&last) = sensor_x.last() {
        if last > domain.x_hi + 1e-9 * domain.span_x() {
            return Err(Error::config("sensor layout exceeds the domain"));
        }
    }

    let m = window_steps(field, geometry.delta_t)?;
    let dt = field.dt();
    let nt = field.t.len();
    let mut observations = Vec::new();
    let mut report_centers = Vec::new();
    let mut k = 0usize;
    loop {
        let start = k * m;
        if start + m > nt - 1 {
            break;
        }
        let center_t = field.t[0] + (start as f64 + m as f64 / 2.0) * dt;
        report_centers.push((start, center_t));
        k += 1;
    }
    if report_centers.is_empty() {
        return Err(Error::config(
            "reporting interval leaves no complete window inside the horizon",
        ));
    }
    for &xs in &sensor_x {
        for &(start, tc) in &report_centers {
            observations.push(Observation {
                x: xs,
                t: tc,
                rho: grid_window_average(field, &field.rho, start, m, xs),
                u: grid_window_average(field, &field.u, start, m, xs),
            });
        }
    }
    let stations = sensor_x
        .iter()
        .enumerate()
        .map(|(s, &x)| Station {
            id: format!("s{s:03}"),
            x,
            delta_t: geometry.delta_t,
        })
        .collect();
    let scale = NormScale {
        l_x: domain.span_x(),
        l_t: domain.span_t(),
        rho_max: field.spec.rho_max,
        u_max: field.spec.u_max,
    };
    let ds = DetectorDataset {
        observations,
        collocation: Vec::new(),
        stations,
        geometry,
        scale,
        domain,
    };
    ds.validate()?;
    Ok(ds)
}

/// Sensor spacing for an endpoint-inclusive detector count over a span.
pub fn spacing_for_detector_count(span: f64, detectors: usize) -> Result<f64> {
    if detectors < 2 {
        return Err(Error::config("need at least 2 detectors"));
    }
    Ok(span / (detectors - 1) as f64)
}

/// Uniform collocation lattice over the observation bounding box:
/// N_coll = floor(0.8 N_o), n = floor(sqrt(N_coll)), n x n Cartesian grid.
pub fn uniform_collocation(dataset: &DetectorDataset) -> Result<Vec<(f64, f64)>> {
    let n_obs = dataset.observations.len();
    if n_obs < 2 {
        return Err(Error::config("collocation needs at least 2 observations"));
    }
    let n_coll = (0.8 * n_obs as f64).floor() as usize;
    let n = (n_coll as f64).sqrt().floor() as usize;
    if n < 2 {
        return Err(Error::config(format!(
            "degenerate collocation grid (n = {n}) from {n_obs} observations"
        )));
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut t_min, mut t_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for o in &dataset.observations {
        x_min = x_min.min(o.x);
        x_max = x_max.max(o.x);
        t_min = t_min.min(o.t);
        t_max = t_max.max(o.t);
    }
    let mut points = Vec::with_capacity(n * n);
    for i in 0..n {
        let x = x_min + i as f64 * (x_max - x_min) / (n - 1) as f64;
        for j in 0..n {
            let t = t_min + j as f64 * (t_max - t_min) / (n - 1) as f64;
            points.push((x, t));
        }
    }
    Ok(points)
}

/// Discrete mass residual on the detector lattice via forward differences,
/// the same discretization model the error bounds assume. Returns the mean
/// |f1| over interior lattice cells; a directional audit of how well the
/// sampled data can represent the conservation law.
pub fn sampling_residual_probe(dataset: &DetectorDataset) -> Result<f64> {
    let mut xs: Vec<f64> = dataset.stations.iter().map(|s| s.x).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut ts: Vec<f64> = dataset.observations.iter().map(|o| o.t).collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if xs.len() < 2 || ts.len() < 2 {
        return Err(Error::config("residual probe needs >= 2 stations and reports"));
    }
    let lookup = |x: f64, t: f64| -> Option<&Observation> {
        dataset
            .observations
            .iter()
            .find(|o| (o.x - x).abs() < 1e-6 && (o.t - t).abs() < 1e-6)
    };
    let mut acc = 0.0;
    let mut count = 0usize;
    for si in 0..xs.len() - 1 {
        for ri in 0..ts.len() - 1 {
            let (Some(o), Some(ox), Some(ot)) = (
                lookup(xs[si], ts[ri]),
                lookup(xs[si + 1], ts[ri]),
                lookup(xs[si], ts[ri + 1]),
            ) else {
                continue;
            };
            let dx = xs[si + 1] - xs[si];
            let dt = ts[ri + 1] - ts[ri];
            let f1 = (ot.rho - o.rho) / dt + (ox.rho * ox.u - o.rho * o.u) / dx;
            acc += f1.abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::config("no complete lattice cells in the dataset"));
    }
    Ok(acc / count as f64)
}

/// Write a field matrix as CSV with axis header lines: first row is
/// `t\x` followed by the x grid, then one row per time with the t value
/// leading.
pub fn write_field_matrix(path: &Path, x: &[f64], t: &[f64], grid: &Grid2) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "t\\x")?;
    for xi in x {
        write!(f, ",{xi:?}")?;
    }
    writeln!(f)?;
    for (k, tk) in t.iter().enumerate() {
        write!(f, "{tk:?}")?;
        for i in 0..grid.nx {
            write!(f, ",{:?}", grid.get(k, i))?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}
