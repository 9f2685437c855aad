//! Random sections `F = range(G)` of the ℓ_p ball for an `n × k` Gaussian
//! matrix `G`, and the distortion
//! `max_{θ} R(θ) / min_{θ} R(θ)` of `R(θ) = ‖Gθ‖_p / ‖Gθ‖_2`.
//!
//! Both solvers work in an orthonormal basis `Q` of the section (thin QR of
//! `G`), where `R` becomes `φ ↦ ‖Qφ‖_p` on the unit sphere of `R^k`. The
//! extremes are the same since `θ ↦ Gθ/‖Gθ‖_2` and `φ ↦ Qφ` parametrize
//! the same set of unit vectors of `F`.
//!
//! Net brackets. Let `N` cover the sphere with radius `ρ < 1` and write
//! `M = max_S ‖Q·‖_p`. Because `‖Qv‖_2 = ‖v‖_2`, moving `φ` by at most `ρ`
//! changes `‖Qφ‖_p` by at most `ρ M`, and `M ≤ max_N R / (1 - ρ)`. Hence
//! `max_S R ∈ [max_N R, max_N R / (1 - ρ)]` and
//! `min_S R ∈ [min_N R - ρ max_N R / (1 - ρ), min_N R]`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::gauss::{sample_gaussian_vector, stream_tag, with_pow, LpKernel, PExponent, RngStream};
use crate::mc::{accumulate_chunked, sample_norms, EstimateWithCI};
use crate::par::map_chunks;
use crate::specfun::gaussian_abs_norm;

/// Exponent used to smooth the max-norm on the minimization side.
pub const SMOOTHING_P: f64 = 1024.0;
pub const DEFAULT_RESTARTS: usize = 32;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Consecutive rejections after which greedy packing is declared maximal.
pub const PACKING_PATIENCE: usize = 10_000;
/// Limit on `(3/δ)^k` for net enumeration.
pub const NET_BUDGET: f64 = 1e8;
/// Limit on the number of completion-sweep candidates.
pub const SWEEP_BUDGET: f64 = 2e7;

/// An `n × k` matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl GaussianMatrix {
    pub fn from_row_major(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || k > n {
            return domain("GaussianMatrix", format!("need 1 <= k <= n, got n={n} k={k}"));
        }
        if data.len() != n * k {
            return domain("GaussianMatrix", "data length must be n k");
        }
        Ok(Self { n, k, data })
    }

    /// The `k × k` identity, whose section is all of `R^k`.
    pub fn identity_block(k: usize) -> Result<Self> {
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            data[i * k + i] = 1.0;
        }
        Self::from_row_major(k, k, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.k + j]).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            k: self.k,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// `y = Gθ`.
    pub fn apply(&self, theta: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(self.data.chunks_exact(self.k)) {
            *yi = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        }
    }
}

/// `n × k` matrix of i.i.d. standard normals, filled row by row.
pub fn sample_gaussian_matrix(stream: &mut RngStream, n: usize, k: usize) -> Result<GaussianMatrix> {
    if k == 0 || k > n {
        return domain("sample_gaussian_matrix", format!("need 1 <= k <= n, got n={n} k={k}"));
    }
    GaussianMatrix::from_row_major(n, k, sample_gaussian_vector(stream, n * k)?)
}

/// `R(θ) = ‖Gθ‖_p / ‖Gθ‖_2`.
pub fn distortion_functional(g: &GaussianMatrix, p: PExponent, theta: &[f64]) -> Result<f64> {
    if theta.len() != g.k {
        return domain("distortion_functional", "theta must have length k");
    }
    let mut y = vec![0.0; g.n];
    g.apply(theta, &mut y);
    let l2 = LpKernel::Two.norm(&y);
    if !(l2 > 0.0) || !l2.is_finite() {
        return Err(Error::Evaluation("G theta vanishes".into()));
    }
    Ok(LpKernel::new(p).norm(&y) / l2)
}

/// Orthonormal basis `Q` (row-major `n × k`) of `range(G)` and the
/// triangular factor used to map back to `θ` coordinates.
#[derive(Debug, Clone)]
pub struct SectionBasis {
    n: usize,
    k: usize,
    /// Row-major copy of `Q`.
    q: Vec<f64>,
    /// Column-major copy, for the matrix-vector products.
    qc: Vec<f64>,
    r: DMatrix<f64>,
}

impl SectionBasis {
    pub fn new(g: &GaussianMatrix) -> Self {
        let qr = DMatrix::from_row_slice(g.n, g.k, &g.data).qr();
        let qm = qr.q();
        let mut q = vec![0.0; g.n * g.k];
        for i in 0..g.n {
            for j in 0..g.k {
                q[i * g.k + j] = qm[(i, j)];
            }
        }
        Self {
            n: g.n,
            k: g.k,
            q,
            qc: qm.as_slice().to_vec(),
            r: qr.r(),
        }
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.qc[j * self.n..(j + 1) * self.n]
    }

    /// `y = Qφ`, four columns per sweep over `y`.
    #[inline]
    fn apply(&self, phi: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut j = 0;
        while j + 4 <= self.k {
            let (c0, c1, c2, c3) = (
                self.column(j),
                self.column(j + 1),
                self.column(j + 2),
                self.column(j + 3),
            );
            let (a0, a1, a2, a3) = (phi[j], phi[j + 1], phi[j + 2], phi[j + 3]);
            for i in 0..y.len() {
                y[i] += (a0 * c0[i] + a1 * c1[i]) + (a2 * c2[i] + a3 * c3[i]);
            }
            j += 4;
        }
        for j in j..self.k {
            let a = phi[j];
            y.iter_mut().zip(self.column(j)).for_each(|(yi, c)| *yi += a * c);
        }
    }

    /// `out = Qᵀw`.
    #[inline]
    fn apply_transpose(&self, w: &[f64], out: &mut [f64]) {
        let mut j = 0;
        while j + 4 <= self.k {
            let (c0, c1, c2, c3) = (
                self.column(j),
                self.column(j + 1),
                self.column(j + 2),
                self.column(j + 3),
            );
            let mut acc = [[0.0; 2]; 4];
            let n2 = w.len() / 2 * 2;
            for i in (0..n2).step_by(2) {
                for l in 0..2 {
                    let wi = w[i + l];
                    acc[0][l] += c0[i + l] * wi;
                    acc[1][l] += c1[i + l] * wi;
                    acc[2][l] += c2[i + l] * wi;
                    acc[3][l] += c3[i + l] * wi;
                }
            }
            for (m, a) in acc.iter_mut().enumerate() {
                if n2 < w.len() {
                    a[0] += self.column(j + m)[n2] * w[n2];
                }
                out[j + m] = a[0] + a[1];
            }
            j += 4;
        }
        for j in j..self.k {
            out[j] = dot(self.column(j), w);
        }
    }

    fn row_norms(&self) -> Vec<f64> {
        self.q
            .chunks_exact(self.k)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// The unit `θ` with `Gθ ∝ Qφ`.
    fn to_theta(&self, phi: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(phi);
        match self.r.solve_upper_triangular(&v) {
            Some(t) if t.iter().all(|x| x.is_finite()) => normalized(t.as_slice()),
            _ => phi.to_vec(),
        }
    }
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter().map(|v| v / s).collect()
}

fn random_unit(stream: &mut RngStream, k: usize) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; k];
        stream.fill_gaussian(&mut v);
        let s = v.iter().map(|x| x * x).sum::<f64>();
        if s > 1e-24 {
            return v.iter().map(|x| x / s.sqrt()).collect();
        }
    }
}

/// Evaluates `φ ↦ ‖Qφ‖_p / ‖Qφ‖_2` and its gradient.
struct Objective<'a> {
    basis: &'a SectionBasis,
    kernel: LpKernel,
    p: f64,
    y: Vec<f64>,
    w: Vec<f64>,
    f: f64,
    l2: f64,
}

impl<'a> Objective<'a> {
    fn new(basis: &'a SectionBasis, p: f64) -> Self {
        Self {
            basis,
            kernel: LpKernel::new(if p.is_infinite() {
                PExponent::Infinity
            } else {
                PExponent::Finite(p)
            }),
            p,
            y: vec![0.0; basis.n],
            w: vec![0.0; basis.n],
            f: 0.0,
            l2: 0.0,
        }
    }

    fn value(&mut self, phi: &[f64]) -> f64 {
        self.basis.apply(phi, &mut self.y);
        self.f = self.kernel.norm(&self.y);
        self.l2 = LpKernel::Two.norm(&self.y);
        self.f / self.l2
    }

    /// Gradient at the point of the last [`value`](Self::value) call:
    /// `Qᵀ[sgn(y)(|y|/f)^{p-1}/‖y‖_2 - R y/‖y‖_2²]`.
    fn gradient(&mut self, grad: &mut [f64]) {
        let (f, l2) = (self.f, self.l2);
        let (inv_f, inv_l2) = (1.0 / f, 1.0 / l2);
        let radial = f * inv_l2 * inv_l2 * inv_l2;
        let e = self.p - 1.0;
        let w = &mut self.w;
        let y = &self.y;
        if e == 0.0 {
            for (wi, &yi) in w.iter_mut().zip(y) {
                let s = if yi == 0.0 { 0.0 } else { 1.0f64.copysign(yi) };
                *wi = s * inv_l2 - radial * yi;
            }
        } else {
            with_pow!(LpKernel::new(PExponent::Finite(e)), |pw| {
                for (wi, &yi) in w.iter_mut().zip(y) {
                    *wi = pw(yi * inv_f).copysign(yi) * inv_l2 - radial * yi;
                }
            });
        }
        self.basis.apply_transpose(&self.w, grad);
    }
}

struct LocalResult {
    value: f64,
    phi: Vec<f64>,
    converged: bool,
}

/// Dot product with four interleaved partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Projected gradient ascent (`sign = 1`) or descent (`sign = -1`) on the
/// sphere with normalization retraction and step-halving line search. The
/// trial step is the Barzilai-Borwein length when it is defined.
fn local_search(obj: &mut Objective, start: &[f64], sign: f64, tol: f64, max_iter: usize) -> LocalResult {
    let k = start.len();
    let mut phi = normalized(start);
    let mut v = obj.value(&phi);
    let mut grad = vec![0.0; k];
    let mut d = vec![0.0; k];
    let mut prev_phi = vec![0.0; k];
    let mut prev_d = vec![0.0; k];
    let mut cand = vec![0.0; k];
    let mut alpha = 0.0;
    for it in 0..max_iter {
        obj.gradient(&mut grad);
        let radial = dot(&grad, &phi);
        for i in 0..k {
            d[i] = sign * (grad[i] - radial * phi[i]);
        }
        let dn2 = dot(&d, &d);
        let dn = dn2.sqrt();
        if dn <= 1e-15 * v.abs().max(1e-300) {
            return LocalResult {
                value: v,
                phi,
                converged: true,
            };
        }
        if it == 0 {
            alpha = 0.1 / dn;
        } else {
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..k {
                let si = phi[i] - prev_phi[i];
                ss += si * si;
                sy += si * (prev_d[i] - d[i]);
            }
            if sy > 0.0 {
                alpha = ss / sy;
            }
        }
        alpha = alpha.min(1.0 / dn);
        let accepted = loop {
            for i in 0..k {
                cand[i] = phi[i] + alpha * d[i];
            }
            let s = dot(&cand, &cand).sqrt();
            cand.iter_mut().for_each(|c| *c /= s);
            let vc = obj.value(&cand);
            if sign * (vc - v) >= 1e-4 * alpha * dn2 {
                break Some(vc);
            }
            alpha *= 0.5;
            if alpha * dn < 1e-16 {
                break None;
            }
        };
        let Some(vc) = accepted else {
            obj.value(&phi);
            return LocalResult {
                value: v,
                phi,
                converged: true,
            };
        };
        let gain = sign * (vc - v);
        prev_phi.copy_from_slice(&phi);
        prev_d.copy_from_slice(&d);
        phi.copy_from_slice(&cand);
        v = vc;
        if gain <= tol * v.abs() {
            return LocalResult {
                value: v,
                phi,
                converged: true,
            };
        }
        alpha *= 2.0;
    }
    LocalResult {
        value: v,
        phi,
        converged: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    Net,
    #[serde(rename = "opt")]
    Optimizer,
}

impl std::fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Net => "net",
            Self::Optimizer => "opt",
        })
    }
}

/// Max and min of the distortion functional over the section sphere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `max_ratio / min_ratio`.
    pub distortion: f64,
    pub method: SolverMethod,
    /// Certified interval for `max_S R` (net only).
    pub max_bracket: Option<(f64, f64)>,
    /// Certified interval for `min_S R` (net only).
    pub min_bracket: Option<(f64, f64)>,
    /// Optimizer: relative-improvement stopping tolerance. Net: covering radius.
    pub tolerance: f64,
    pub restarts_used: usize,
    /// False when some local search hit the iteration cap.
    pub converged: bool,
    pub net_size: Option<usize>,
    /// Unit `θ` attaining `max_ratio` and `min_ratio`.
    pub argmax: Vec<f64>,
    pub argmin: Vec<f64>,
}

impl DistortionReport {
    /// Certified upper bound on the distortion, when brackets exist.
    pub fn certified_distortion_upper(&self) -> Option<f64> {
        match (self.max_bracket, self.min_bracket) {
            (Some((_, hi)), Some((lo, _))) if lo > 0.0 => Some(hi / lo),
            (Some(_), Some(_)) => Some(f64::INFINITY),
            _ => None,
        }
    }
}

/// A δ-separated subset of `S^{k-1}` whose covering radius is at most
/// `covering_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereNet {
    pub k: usize,
    pub delta: f64,
    pub covering_radius: f64,
    pub points: Vec<Vec<f64>>,
}

struct SpatialHash {
    cell: f64,
    k: usize,
    map: HashMap<[i64; 4], Vec<usize>>,
}

impl SpatialHash {
    fn key(&self, x: &[f64]) -> [i64; 4] {
        let mut key = [0i64; 4];
        for (i, v) in x.iter().enumerate() {
            key[i] = (v / self.cell).floor() as i64;
        }
        key
    }

    fn has_within(&self, x: &[f64], points: &[Vec<f64>], delta: f64) -> bool {
        let base = self.key(x);
        let offsets = 3usize.pow(self.k as u32);
        for o in 0..offsets {
            let mut key = base;
            let mut rest = o;
            for slot in key.iter_mut().take(self.k) {
                *slot += (rest % 3) as i64 - 1;
                rest /= 3;
            }
            if let Some(ids) = self.map.get(&key) {
                for &id in ids {
                    let d2: f64 = points[id].iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d2 < delta * delta {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn insert(&mut self, x: &[f64], id: usize) {
        let key = self.key(x);
        self.map.entry(key).or_default().push(id);
    }
}

/// Fails when a net for `(k, δ)` would exceed the enumeration budgets;
/// otherwise returns the per-axis grid resolution of the completion sweep.
pub fn check_net_budget(k: usize, delta: f64) -> Result<f64> {
    if !(1..=4).contains(&k) {
        return Err(Error::Budget {
            op: "sphere_net",
            msg: format!("nets are limited to k <= 4, got k={k}; use the optimizer"),
        });
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return domain("sphere_net", format!("delta must lie in (0, 0.5], got {delta}"));
    }
    if (3.0 / delta).powi(k as i32) > NET_BUDGET {
        return Err(Error::Budget {
            op: "sphere_net",
            msg: format!("(3/delta)^k exceeds {NET_BUDGET:e}; use the optimizer"),
        });
    }
    if k == 1 {
        return Ok(0.0);
    }
    let h = delta / (2.0 * ((k - 1) as f64).sqrt());
    let m = (2.0 / h).ceil();
    let candidates = 2.0 * k as f64 * (m + 1.0).powi(k as i32 - 1);
    if candidates > SWEEP_BUDGET {
        return Err(Error::Budget {
            op: "sphere_net",
            msg: format!("completion sweep needs {candidates:e} candidates; use the optimizer"),
        });
    }
    Ok(m)
}

/// Greedy δ-packing of `S^{k-1}`: random candidates are accepted first come
/// first served until [`PACKING_PATIENCE`] consecutive rejections, then a
/// deterministic sweep over a grid on the faces of `[-1, 1]^k` (spacing at
/// most `h = δ/(2√(k-1))`, projected radially) adds any grid point still
/// δ-far from the set. Every sphere point is within `h√(k-1)/2 = δ/4` of a
/// grid point and every grid point within δ of the set, so the covering
/// radius is at most `1.25 δ`.
pub fn sphere_net(k: usize, delta: f64, seed: u64) -> Result<SphereNet> {
    let m = check_net_budget(k, delta)?;
    if k == 1 {
        return Ok(SphereNet {
            k,
            delta,
            covering_radius: 0.0,
            points: vec![vec![1.0], vec![-1.0]],
        });
    }
    let mut stream = RngStream::new(seed, stream_tag("net", &[k as u64, delta.to_bits()]));
    let mut hash = SpatialHash {
        cell: delta,
        k,
        map: HashMap::new(),
    };
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut rejections = 0;
    while rejections < PACKING_PATIENCE {
        let x = random_unit(&mut stream, k);
        if hash.has_within(&x, &points, delta) {
            rejections += 1;
        } else {
            hash.insert(&x, points.len());
            points.push(x);
            rejections = 0;
        }
    }
    let m = m as usize;
    let step = 2.0 / m as f64;
    let face_points = (m + 1).pow(k as u32 - 1);
    let mut c = vec![0.0; k];
    for axis in 0..k {
        for sign in [-1.0, 1.0] {
            for idx in 0..face_points {
                let mut rest = idx;
                let mut slot = 0;
                for (j, cj) in c.iter_mut().enumerate() {
                    if j == axis {
                        *cj = sign;
                    } else {
                        *cj = -1.0 + step * (rest % (m + 1)) as f64;
                        rest /= m + 1;
                        slot += 1;
                    }
                }
                debug_assert_eq!(slot, k - 1);
                let x = normalized(&c);
                if !hash.has_within(&x, &points, delta) {
                    hash.insert(&x, points.len());
                    points.push(x);
                }
            }
        }
    }
    let h = step;
    Ok(SphereNet {
        k,
        delta,
        covering_radius: delta + h * ((k - 1) as f64).sqrt() / 2.0,
        points,
    })
}

/// Net evaluation with certified brackets; see the module notes.
pub fn distortion_on_net(g: &GaussianMatrix, p: PExponent, net: &SphereNet) -> Result<DistortionReport> {
    if net.k != g.k {
        return domain("distortion_net", "net dimension differs from k");
    }
    let basis = SectionBasis::new(g);
    let mut obj = Objective::new(&basis, p.value());
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut arg_hi, mut arg_lo) = (0, 0);
    for (i, u) in net.points.iter().enumerate() {
        let v = obj.value(u);
        if v > hi {
            hi = v;
            arg_hi = i;
        }
        if v < lo {
            lo = v;
            arg_lo = i;
        }
    }
    let rho = net.covering_radius;
    let m_upper = hi / (1.0 - rho);
    Ok(DistortionReport {
        max_ratio: hi,
        min_ratio: lo,
        distortion: hi / lo,
        method: SolverMethod::Net,
        max_bracket: Some((hi, m_upper)),
        min_bracket: Some(((lo - rho * m_upper).max(0.0), lo)),
        tolerance: rho,
        restarts_used: 0,
        converged: true,
        net_size: Some(net.points.len()),
        argmax: basis.to_theta(&net.points[arg_hi]),
        argmin: basis.to_theta(&net.points[arg_lo]),
    })
}

/// [`distortion_on_net`] with a net built from seed 0.
pub fn distortion_net(g: &GaussianMatrix, p: PExponent, delta: f64) -> Result<DistortionReport> {
    let net = sphere_net(g.k, delta, 0)?;
    distortion_on_net(g, p, &net)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the stream supplying the random starting points.
    pub start_seed: u64,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            start_seed: 0,
        }
    }
}

fn check_opt(opts: &OptOptions) -> Result<()> {
    if opts.restarts < 1 {
        return domain("distortion_opt", "restarts must be at least 1");
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return domain("distortion_opt", "tol and max_iter must be positive");
    }
    Ok(())
}

/// Starting points: rows of `Q` with the largest norms, basis vectors, the
/// diagonal, then `restarts` uniform points.
fn starting_points(basis: &SectionBasis, restarts: usize, stream: &mut RngStream) -> Vec<Vec<f64>> {
    let k = basis.k;
    let norms = basis.row_norms();
    let mut order: Vec<usize> = (0..basis.n).collect();
    order.sort_by(|a, b| norms[*b].total_cmp(&norms[*a]).then(a.cmp(b)));
    let mut starts: Vec<Vec<f64>> = order
        .iter()
        .take(4.min(basis.n))
        .filter(|&&i| norms[i] > 0.0)
        .map(|&i| normalized(&basis.q[i * k..(i + 1) * k]))
        .collect();
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        starts.push(e);
    }
    starts.push(vec![1.0 / (k as f64).sqrt(); k]);
    for _ in 0..restarts {
        starts.push(random_unit(stream, k));
    }
    starts
}

struct OptRun {
    report: DistortionReport,
    /// Stopped once `max/min ≥ threshold` was established.
    early_exit: bool,
}

fn optimize(basis: &SectionBasis, p: PExponent, opts: &OptOptions, threshold: Option<f64>) -> OptRun {
    let k = basis.k;
    let mut stream = RngStream::new(opts.start_seed, stream_tag("restarts", &[basis.n as u64, k as u64]));
    let starts = starting_points(basis, opts.restarts, &mut stream);
    let smooth_p = match p {
        PExponent::Infinity => SMOOTHING_P,
        PExponent::Finite(q) => q,
    };
    let mut exact = Objective::new(basis, p.value());
    let mut smooth = Objective::new(basis, smooth_p);

    let initial: Vec<f64> = starts.iter().map(|s| exact.value(s)).collect();
    let best_of = |cmp: fn(f64, f64) -> bool| {
        let mut idx = 0;
        for i in 1..initial.len() {
            if cmp(initial[i], initial[idx]) {
                idx = i;
            }
        }
        idx
    };
    let (hi_i, lo_i) = (best_of(|a, b| a > b), best_of(|a, b| a < b));
    let mut hi = (initial[hi_i], starts[hi_i].clone());
    let mut lo = (initial[lo_i], starts[lo_i].clone());
    let mut converged = true;
    let mut restarts_used = 0;
    let done = |hi: f64, lo: f64| threshold.is_some_and(|t| hi >= t * lo);

    let mut max_order: Vec<usize> = (0..starts.len()).collect();
    max_order.sort_by(|a, b| initial[*b].total_cmp(&initial[*a]).then(a.cmp(b)));
    let mut min_order = max_order.clone();
    min_order.reverse();

    let mut early_exit = done(hi.0, lo.0);
    if let (PExponent::Infinity, false) = (p, early_exit) {
        // max_φ ‖Qφ‖_∞ is the largest row norm of Q, attained at that row
        let norms = basis.row_norms();
        let i = (0..basis.n).fold(0, |b, i| if norms[i] > norms[b] { i } else { b });
        let phi = normalized(&basis.q[i * k..(i + 1) * k]);
        let v = exact.value(&phi);
        if v > hi.0 {
            hi = (v, phi);
        }
        max_order.clear();
        early_exit = done(hi.0, lo.0);
    }
    let rounds = max_order.len().max(min_order.len());
    'outer: for round in 0..rounds {
        if early_exit {
            break;
        }
        if let Some(&s) = max_order.get(round) {
            let r = local_search(&mut exact, &starts[s], 1.0, opts.tol, opts.max_iter);
            restarts_used += 1;
            converged &= r.converged;
            if r.value > hi.0 {
                hi = (r.value, r.phi);
            }
            if done(hi.0, lo.0) {
                early_exit = true;
                break 'outer;
            }
        }
        if let Some(&s) = min_order.get(round) {
            let r = local_search(&mut smooth, &starts[s], -1.0, opts.tol, opts.max_iter);
            restarts_used += 1;
            converged &= r.converged;
            let v = exact.value(&r.phi);
            if v < lo.0 {
                lo = (v, r.phi);
            }
            if done(hi.0, lo.0) {
                early_exit = true;
                break 'outer;
            }
        }
    }
    OptRun {
        report: DistortionReport {
            max_ratio: hi.0,
            min_ratio: lo.0,
            distortion: hi.0 / lo.0,
            method: SolverMethod::Optimizer,
            max_bracket: None,
            min_bracket: None,
            tolerance: opts.tol,
            restarts_used,
            converged,
            net_size: None,
            argmax: basis.to_theta(&hi.1),
            argmin: basis.to_theta(&lo.1),
        },
        early_exit,
    }
}

/// Multi-start projected gradient search for both extremes of `R`.
pub fn distortion_opt(g: &GaussianMatrix, p: PExponent, opts: &OptOptions) -> Result<DistortionReport> {
    check_opt(opts)?;
    Ok(optimize(&SectionBasis::new(g), p, opts, None).report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub method: SolverMethod,
    pub delta: f64,
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Count a success only when the certified net bound is below `1 + ε`.
    pub strict: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::Optimizer,
            delta: 0.05,
            restarts: DEFAULT_RESTARTS,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            strict: false,
        }
    }
}

impl SolverOptions {
    fn validate(&self, k: usize) -> Result<()> {
        if self.strict && self.method != SolverMethod::Net {
            return domain("section_success_probability", "strict mode needs the net solver");
        }
        match self.method {
            SolverMethod::Net => check_net_budget(k, self.delta).map(|_| ()),
            SolverMethod::Optimizer => check_opt(&OptOptions {
                restarts: self.restarts,
                tol: self.tol,
                max_iter: self.max_iter,
                start_seed: 0,
            }),
        }
    }

    fn tolerance(&self) -> f64 {
        match self.method {
            SolverMethod::Net => self.delta,
            SolverMethod::Optimizer => self.tol,
        }
    }
}

fn section_tag(n: usize, k: usize, p: PExponent) -> u64 {
    stream_tag("section", &[n as u64, k as u64, p.value().to_bits()])
}

/// Per-instance outcome of the `(1+ε)`-Euclidean test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SectionOutcome {
    pub success: bool,
    pub converged: bool,
}

/// Outcomes for `samples` independent sections; sample `j` depends only on
/// `(seed, n, k, p, j)`, not on ε, so outcomes for two ε values are nested.
pub fn section_success_outcomes(
    n: usize,
    k: usize,
    p: PExponent,
    eps: f64,
    samples: u64,
    seed: u64,
    solver: &SolverOptions,
) -> Result<Vec<SectionOutcome>> {
    if k == 0 || k > n {
        return domain(
            "section_success_probability",
            format!("need 1 <= k <= n, got n={n} k={k}"),
        );
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return domain(
            "section_success_probability",
            format!("eps must be positive, got {eps}"),
        );
    }
    solver.validate(k)?;
    let net = match solver.method {
        SolverMethod::Net => Some(sphere_net(k, solver.delta, seed)?),
        SolverMethod::Optimizer => None,
    };
    let tag = section_tag(n, k, p);
    let threshold = 1.0 + eps;
    map_chunks(samples, 1, |c| {
        let mut s = c.stream(seed, tag);
        let g = sample_gaussian_matrix(&mut s, n, k)?;
        if k == 1 || p == PExponent::Finite(2.0) {
            return Ok(SectionOutcome {
                success: true,
                converged: true,
            });
        }
        if let Some(net) = &net {
            let rep = distortion_on_net(&g, p, net)?;
            let d = if solver.strict {
                rep.certified_distortion_upper().unwrap_or(f64::INFINITY)
            } else {
                rep.distortion
            };
            return Ok(SectionOutcome {
                success: d < threshold,
                converged: true,
            });
        }
        let opts = OptOptions {
            restarts: solver.restarts,
            tol: solver.tol,
            max_iter: solver.max_iter,
            start_seed: s.next_u64(),
        };
        let run = optimize(&SectionBasis::new(&g), p, &opts, Some(threshold));
        Ok(SectionOutcome {
            success: !run.early_exit && run.report.distortion < threshold,
            converged: run.report.converged,
        })
    })
    .into_iter()
    .collect()
}

/// Fraction of sections with distortion below `1 + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectionSuccess {
    pub k: usize,
    pub estimate: EstimateWithCI,
    /// Instances where an optimizer run hit its iteration cap.
    pub unconverged: u64,
    pub method: SolverMethod,
    pub tolerance: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn section_success_probability(
    n: usize,
    k: usize,
    p: PExponent,
    eps: f64,
    samples: u64,
    seed: u64,
    solver: &SolverOptions,
    z: f64,
) -> Result<SectionSuccess> {
    let outcomes = section_success_outcomes(n, k, p, eps, samples, seed, solver)?;
    let hits = outcomes.iter().filter(|o| o.success).count() as u64;
    Ok(SectionSuccess {
        k,
        estimate: EstimateWithCI::wilson(hits, samples, z),
        unconverged: outcomes.iter().filter(|o| !o.converged).count() as u64,
        method: solver.method,
        tolerance: solver.tolerance(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessCurve {
    pub n: usize,
    pub p: PExponent,
    pub eps: f64,
    pub samples: u64,
    pub seed: u64,
    pub rows: Vec<SectionSuccess>,
}

impl SuccessCurve {
    /// Number of consecutive pairs where the success rate rises by more than
    /// `se_mult` combined standard errors.
    pub fn significant_inversions(&self, se_mult: f64) -> usize {
        self.rows
            .windows(2)
            .filter(|w| {
                let (a, b) = (w[0].estimate, w[1].estimate);
                let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
                b.value - a.value > se_mult * se
            })
            .count()
    }

    /// Pairs with any increase at all.
    pub fn inversions(&self) -> usize {
        self.rows
            .windows(2)
            .filter(|w| w[1].estimate.value > w[0].estimate.value)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalDimension {
    /// Largest grid `k` with Wilson lower bound at least the target, or 0.
    pub k_star: usize,
    pub curve: SuccessCurve,
}

#[allow(clippy::too_many_arguments)]
pub fn empirical_critical_dimension(
    n: usize,
    p: PExponent,
    eps: f64,
    target_prob: f64,
    samples: u64,
    seed: u64,
    k_grid: &[usize],
    solver: &SolverOptions,
    z: f64,
) -> Result<CriticalDimension> {
    if !(target_prob > 0.0 && target_prob < 1.0) {
        return domain(
            "empirical_critical_dimension",
            format!("target must lie in (0, 1), got {target_prob}"),
        );
    }
    if k_grid.is_empty() || k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return domain(
            "empirical_critical_dimension",
            "k grid must be non-empty and increasing",
        );
    }
    let rows = k_grid
        .iter()
        .map(|&k| section_success_probability(n, k, p, eps, samples, seed, solver, z))
        .collect::<Result<Vec<_>>>()?;
    let k_star = rows
        .iter()
        .filter(|r| r.estimate.ci_low >= target_prob)
        .map(|r| r.k)
        .max()
        .unwrap_or(0);
    Ok(CriticalDimension {
        k_star,
        curve: SuccessCurve {
            n,
            p,
            eps,
            samples,
            seed,
            rows,
        },
    })
}

/// Both sides of `(E|‖Ga‖_p - ‖Gb‖_p|^r)^{1/r} ≤ π σ_r ‖a-b‖_2 (E‖∇‖W‖_p‖_2^r)^{1/r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessCheck {
    pub lhs: EstimateWithCI,
    pub rhs: f64,
    pub rhs_std_error: f64,
    /// `(E‖∇‖W‖_p‖_2^r)^{1/r}` with `‖∇‖w‖_p‖_2 = (‖w‖_{2p-2}/‖w‖_p)^{p-1}`.
    pub gradient_moment: EstimateWithCI,
    /// `rhs - lhs`.
    pub margin: f64,
}

fn r_th_root_estimate(values: &[f64], r: f64, z: f64) -> Result<EstimateWithCI> {
    let acc = accumulate_chunked(values);
    let a = acc.mean()?;
    let value = a.powf(1.0 / r);
    let se = if a > 0.0 {
        value * acc.std_error_mean()? / (r * a)
    } else {
        0.0
    };
    Ok(EstimateWithCI::normal(value, se, values.len() as u64, z))
}

#[allow(clippy::too_many_arguments)]
pub fn schechtman_process_check(
    n: usize,
    k: usize,
    p: f64,
    a: &[f64],
    b: &[f64],
    r: f64,
    samples: u64,
    seed: u64,
    z: f64,
) -> Result<ProcessCheck> {
    if k == 0 || a.len() != k || b.len() != k {
        return domain("schechtman_process_check", "a and b must have length k >= 1");
    }
    for v in [a, b] {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return domain("schechtman_process_check", "a and b must be unit vectors");
        }
    }
    if !(r >= 1.0) || !r.is_finite() {
        return domain("schechtman_process_check", format!("r must be >= 1, got {r}"));
    }
    if !(p > 1.0) || !p.is_finite() {
        return domain("schechtman_process_check", format!("p must be finite and > 1, got {p}"));
    }
    if samples < 2 || n == 0 {
        return domain("schechtman_process_check", "need n >= 1 and at least two samples");
    }
    let pe = PExponent::Finite(p);
    let kernel = LpKernel::new(pe);
    let tag = stream_tag("process", &[n as u64, k as u64, p.to_bits()]);
    let diffs: Vec<f64> = map_chunks(samples, crate::par::CHUNK_SAMPLES, |c| {
        let mut s = c.stream(seed, tag);
        let mut g = vec![0.0; n * k];
        let (mut ga, mut gb) = (vec![0.0; n], vec![0.0; n]);
        (0..c.len())
            .map(|_| {
                s.fill_gaussian(&mut g);
                for (i, row) in g.chunks_exact(k).enumerate() {
                    ga[i] = dot(row, a);
                    gb[i] = dot(row, b);
                }
                (kernel.norm(&ga) - kernel.norm(&gb)).abs().powf(r)
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let lhs = r_th_root_estimate(&diffs, r, z)?;

    let q = PExponent::Finite(2.0 * p - 2.0);
    let tag_w = stream_tag("process-gradient", &[n as u64, p.to_bits()]);
    let grads: Vec<f64> = map_chunks(samples, crate::par::CHUNK_SAMPLES, |c| {
        let mut s = c.stream(seed, tag_w);
        let mut w = vec![0.0; n];
        let kq = LpKernel::new(q);
        (0..c.len())
            .map(|_| {
                s.fill_gaussian(&mut w);
                let ln_grad = (p - 1.0) * (kq.norm(&w).ln() - kernel.norm(&w).ln());
                (r * ln_grad).exp()
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let gradient_moment = r_th_root_estimate(&grads, r, z)?;
    let dist = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let factor = std::f64::consts::PI * gaussian_abs_norm(r)? * dist;
    let rhs = factor * gradient_moment.value;
    Ok(ProcessCheck {
        lhs,
        rhs,
        rhs_std_error: factor * gradient_moment.std_error,
        gradient_moment,
        margin: rhs - lhs.value,
    })
}

/// `(E|‖X‖_p - ‖Y‖_p|^r)^{1/r}` for independent `X, Y ~ N(0, I_n)`, from
/// two independent batches of sampled norms.
pub fn independent_norm_difference_moment(
    n: usize,
    p: f64,
    r: f64,
    samples: u64,
    seed: u64,
    z: f64,
) -> Result<EstimateWithCI> {
    let pe = PExponent::Finite(p);
    let x = sample_norms(n, pe, samples, seed, "pair-x")?;
    let y = sample_norms(n, pe, samples, seed, "pair-y")?;
    let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (a - b).abs().powf(r)).collect();
    r_th_root_estimate(&d, r, z)
}
