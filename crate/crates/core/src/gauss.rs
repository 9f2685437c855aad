//! Kernels every experiment runs on: counter-based random streams, Gaussian
//! vectors, ℓ_p norms that neither overflow nor underflow, rearrangements and
//! mergeable moment accumulators.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{domain, Error, Result};
use crate::specfun::{neg_inv_cdf_central, neg_inv_cdf_rational, neg_inv_cdf_tail, ACKLAM_SPLIT};

/// The norm index `p ∈ [1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PExponent {
    Finite(f64),
    Infinity,
}

impl PExponent {
    pub fn finite(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            return Ok(Self::Infinity);
        }
        if !(p >= 1.0) {
            return domain("PExponent", format!("p must be >= 1, got {p}"));
        }
        Ok(Self::Finite(p))
    }

    /// The exponent as an `f64`, `+inf` for the max-norm.
    pub fn value(self) -> f64 {
        match self {
            Self::Finite(p) => p,
            Self::Infinity => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Self::Infinity)
    }

    /// The finite exponent, or an error naming the operation that needs one.
    pub fn require_finite(self, op: &'static str) -> Result<f64> {
        match self {
            Self::Finite(p) => Ok(p),
            Self::Infinity => domain(op, "requires a finite p"),
        }
    }
}

impl fmt::Display for PExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(p) => write!(f, "{p}"),
            Self::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for PExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(Self::Infinity);
        }
        let p: f64 = t.parse().map_err(|_| Error::Domain {
            op: "PExponent",
            msg: format!("cannot parse {s:?} as a norm index"),
        })?;
        Self::finite(p)
    }
}

impl Serialize for PExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

// Philox4x64-10 constants (Salmon et al., Random123).
const PHILOX_M0: u64 = 0xD2E7_470E_E14C_6C93;
const PHILOX_M1: u64 = 0xCA5A_8263_9512_1157;
const PHILOX_W0: u64 = 0x9E37_79B9_7F4A_7C15;
const PHILOX_W1: u64 = 0xBB67_AE85_84CA_A73B;

#[inline(always)]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let prod = (a as u128) * (b as u128);
    ((prod >> 64) as u64, prod as u64)
}

/// One Philox4x64-10 block: a keyed bijection of the 256-bit counter.
#[inline]
pub fn philox4x64(mut ctr: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let (mut k0, mut k1) = (key[0], key[1]);
    for round in 0..10 {
        if round > 0 {
            k0 = k0.wrapping_add(PHILOX_W0);
            k1 = k1.wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0];
    }
    ctr
}

/// Four independent Philox blocks evaluated in lockstep, so the multiply
/// chains of different blocks overlap.
#[inline(always)]
fn philox4x64_x4(mut c: [[u64; 4]; 4], key: [u64; 2]) -> [[u64; 4]; 4] {
    let (mut k0, mut k1) = (key[0], key[1]);
    for round in 0..10 {
        if round > 0 {
            k0 = k0.wrapping_add(PHILOX_W0);
            k1 = k1.wrapping_add(PHILOX_W1);
        }
        for b in c.iter_mut() {
            let (hi0, lo0) = mulhilo(PHILOX_M0, b[0]);
            let (hi1, lo1) = mulhilo(PHILOX_M1, b[2]);
            *b = [hi1 ^ b[1] ^ k0, lo1, hi0 ^ b[3] ^ k1, lo0];
        }
    }
    c
}

/// A counter-based random stream.
///
/// Output number `counter` is a pure function of `(seed, stream_id, chunk,
/// counter)`: the Philox key is `(seed, stream_id)` and the block counter is
/// `(counter / 4, chunk, 0, 0)`. Streams with different ids or chunks never
/// overlap. Blocks are generated four at a time.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    chunk: u64,
    counter: u64,
    buf: [u64; BATCH],
}

const BATCH: usize = 16;

const TWO_POW_53: u64 = 1 << 53;
const INV_TWO_POW_53: f64 = 1.0 / TWO_POW_53 as f64;

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self::with_chunk(seed, stream_id, 0)
    }

    pub fn with_chunk(seed: u64, stream_id: u64, chunk: u64) -> Self {
        Self {
            seed,
            stream_id,
            chunk,
            counter: 0,
            buf: [0; BATCH],
        }
    }

    /// Reposition the stream at an arbitrary output index.
    pub fn seek(&mut self, counter: u64) {
        self.counter = counter;
        if counter % BATCH as u64 != 0 {
            self.refill(counter / BATCH as u64);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn chunk(&self) -> u64 {
        self.chunk
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    fn refill(&mut self, batch: u64) {
        let b = 4 * batch;
        let ch = self.chunk;
        let out = philox4x64_x4(
            [[b, ch, 0, 0], [b + 1, ch, 0, 0], [b + 2, ch, 0, 0], [b + 3, ch, 0, 0]],
            [self.seed, self.stream_id],
        );
        for (i, block) in out.iter().enumerate() {
            self.buf[4 * i..4 * i + 4].copy_from_slice(block);
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let lane = (self.counter % BATCH as u64) as usize;
        if lane == 0 {
            self.refill(self.counter / BATCH as u64);
        }
        self.counter += 1;
        self.buf[lane]
    }

    /// 53-bit index `k`; the uniform variate is `(k + 1/2) / 2^53 ∈ (0, 1)`.
    #[inline]
    fn next_index53(&mut self) -> u64 {
        self.next_u64() >> 11
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_index53() as f64 + 0.5) * INV_TWO_POW_53
    }

    /// Standard normal variate by inverse-CDF transform of the 53-bit uniform.
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        let k = self.next_index53();
        if k < TWO_POW_53 / 2 {
            -neg_inv_cdf_rational(tail_from_index(k))
        } else {
            neg_inv_cdf_rational(tail_from_index(TWO_POW_53 - 1 - k))
        }
    }

    /// `max_i |g_i|` over `n` fresh normals without transforming each of them.
    ///
    /// Consumes exactly the outputs `n` calls to [`next_gaussian`] would, and
    /// returns the magnitude of the most extreme of those variates: `|g|` is
    /// a decreasing function of the folded index `min(k, 2^53 - 1 - k)`.
    ///
    /// [`next_gaussian`]: RngStream::next_gaussian
    pub fn max_abs_gaussian(&mut self, n: usize) -> f64 {
        let mut folded = u64::MAX;
        let mut left = n;
        while left > 0 && self.counter % BATCH as u64 != 0 {
            let k = self.next_index53();
            folded = folded.min(k.min(TWO_POW_53 - 1 - k));
            left -= 1;
        }
        while left >= BATCH {
            self.refill(self.counter / BATCH as u64);
            self.counter += BATCH as u64;
            for &u in &self.buf {
                let k = u >> 11;
                folded = folded.min(k.min(TWO_POW_53 - 1 - k));
            }
            left -= BATCH;
        }
        for _ in 0..left {
            let k = self.next_index53();
            folded = folded.min(k.min(TWO_POW_53 - 1 - k));
        }
        neg_inv_cdf_rational(tail_from_index(folded))
    }

    /// The next sixteen normals; the counter must sit on a batch boundary.
    /// Same values as sixteen calls to `next_gaussian`.
    #[inline]
    fn gaussian_batch(&mut self, out: &mut [f64; BATCH]) {
        debug_assert!(self.counter % BATCH as u64 == 0);
        self.refill(self.counter / BATCH as u64);
        self.counter += BATCH as u64;
        let mut sign = [0u64; BATCH];
        let mut q = [0.0; BATCH];
        for ((q, sign), &u) in q.iter_mut().zip(sign.iter_mut()).zip(self.buf.iter()) {
            let k = u >> 11;
            // upper half folds by complement, which for 53 bits is an xor
            let upper = k >> 52;
            *q = tail_from_folded_bits(k ^ (upper.wrapping_neg() & (TWO_POW_53 - 1)));
            *sign = (upper ^ 1) << 63;
        }
        for (o, &q) in out.iter_mut().zip(q.iter()) {
            *o = neg_inv_cdf_central(q);
        }
        for (o, &sign) in out.iter_mut().zip(sign.iter()) {
            *o = f64::from_bits(o.to_bits() ^ sign);
        }
        let mut tails = 0u32;
        for (i, &u) in self.buf.iter().enumerate() {
            let k = u >> 11;
            let folded = k.min(TWO_POW_53 - 1 - k);
            tails |= ((folded < TAIL_INDEX_LIMIT) as u32) << i;
        }
        // about one lane in twenty needs the tail branch
        while tails != 0 {
            let i = tails.trailing_zeros() as usize;
            tails &= tails - 1;
            let k = self.buf[i] >> 11;
            out[i] = if k < TWO_POW_53 / 2 {
                -neg_inv_cdf_tail(tail_from_index(k))
            } else {
                neg_inv_cdf_tail(tail_from_index(TWO_POW_53 - 1 - k))
            };
        }
    }

    /// Feeds the next `n` normals to `f` in order.
    #[inline]
    pub fn for_each_gaussian(&mut self, n: usize, mut f: impl FnMut(f64)) {
        let mut left = n;
        while left > 0 && self.counter % BATCH as u64 != 0 {
            f(self.next_gaussian());
            left -= 1;
        }
        let mut block = [0.0; BATCH];
        while left >= BATCH {
            self.gaussian_batch(&mut block);
            for &z in &block {
                f(z);
            }
            left -= BATCH;
        }
        for _ in 0..left {
            f(self.next_gaussian());
        }
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        let mut it = out.iter_mut();
        self.for_each_gaussian(it.len(), |z| *it.next().unwrap() = z);
    }
}

#[inline(always)]
fn tail_from_index(folded: u64) -> f64 {
    (folded as f64 + 0.5) * INV_TWO_POW_53
}

/// Same value as `tail_from_index` for `folded < 2^52`, assembled from the
/// mantissa bits so it vectorizes: `1 + folded/2^52` is exact.
#[inline(always)]
fn tail_from_folded_bits(folded: u64) -> f64 {
    const ONE_BITS: u64 = 0x3FF0_0000_0000_0000;
    (f64::from_bits(ONE_BITS | folded) - 1.0) * 0.5 + 0.5 * INV_TWO_POW_53
}

/// Smallest folded index whose variate takes the central rational branch.
const TAIL_INDEX_LIMIT: u64 = {
    // (k + 1/2) / 2^53 <= split  <=>  k <= floor(split * 2^53 - 1/2)
    (ACKLAM_SPLIT * TWO_POW_53 as f64 - 0.5) as u64 + 1
};

/// FNV-1a over a label and integer parameters, used to name stream families.
pub fn stream_tag(label: &str, params: &[u64]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in label.bytes().chain(params.iter().flat_map(|v| v.to_le_bytes())) {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// A vector of `n` i.i.d. standard normals drawn from `stream`.
pub fn sample_gaussian_vector(stream: &mut RngStream, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return domain("sample_gaussian_vector", "n must be at least 1");
    }
    let mut out = vec![0.0; n];
    stream.fill_gaussian(&mut out);
    Ok(out)
}

/// Values below this are treated as "underflowed" by the unscaled fast path.
const FAST_PATH_FLOOR: f64 = 1e-200;

/// `a^k` for `k ≥ 1` by binary powering. Every integer-power path goes
/// through here so that fused and materialized sums agree bit for bit.
#[inline(always)]
pub(crate) fn ipow(a: f64, mut k: i32) -> f64 {
    let mut r = 1.0;
    let mut b = a;
    loop {
        if k & 1 == 1 {
            r *= b;
        }
        k >>= 1;
        if k == 0 {
            return r;
        }
        b *= b;
    }
}

/// Sum with four partial sums striped by index, `(s0 + s1) + (s2 + s3)`.
#[inline(always)]
fn striped_sum(x: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = [0.0; 4];
    let mut chunks = x.chunks_exact(4);
    for c in &mut chunks {
        for l in 0..4 {
            acc[l] += f(c[l]);
        }
    }
    for (l, &v) in chunks.remainder().iter().enumerate() {
        acc[l] += f(v);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Runs `$body` with `$f` bound to `|v| |v|^p`, specialized for small
/// integer exponents so the loop in `$body` inlines the power.
macro_rules! with_pow {
    ($kernel:expr, |$f:ident| $body:expr) => {
        match $kernel {
            $crate::gauss::LpKernel::One => {
                let $f = |v: f64| v.abs();
                $body
            }
            $crate::gauss::LpKernel::Two => {
                let $f = |v: f64| v * v;
                $body
            }
            $crate::gauss::LpKernel::Int(3) => {
                let $f = |v: f64| $crate::gauss::ipow(v.abs(), 3);
                $body
            }
            $crate::gauss::LpKernel::Int(4) => {
                let $f = |v: f64| $crate::gauss::ipow(v.abs(), 4);
                $body
            }
            $crate::gauss::LpKernel::Int(6) => {
                let $f = |v: f64| $crate::gauss::ipow(v.abs(), 6);
                $body
            }
            $crate::gauss::LpKernel::Int(8) => {
                let $f = |v: f64| $crate::gauss::ipow(v.abs(), 8);
                $body
            }
            $crate::gauss::LpKernel::Int(20) => {
                let $f = |v: f64| $crate::gauss::ipow(v.abs(), 20);
                $body
            }
            $crate::gauss::LpKernel::Int(k) => {
                let $f = move |v: f64| $crate::gauss::ipow(v.abs(), k);
                $body
            }
            $crate::gauss::LpKernel::Real(p) => {
                let $f = move |v: f64| v.abs().powf(p);
                $body
            }
            $crate::gauss::LpKernel::Inf => unreachable!("no power sum for the infinity norm"),
        }
    };
}
pub(crate) use with_pow;

/// Precomputed evaluation strategy for `‖·‖_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LpKernel {
    One,
    Two,
    Int(i32),
    Real(f64),
    Inf,
}

impl LpKernel {
    pub fn new(p: PExponent) -> Self {
        match p {
            PExponent::Infinity => Self::Inf,
            PExponent::Finite(p) if p == 1.0 => Self::One,
            PExponent::Finite(p) if p == 2.0 => Self::Two,
            PExponent::Finite(p) if p.fract() == 0.0 && p <= 4096.0 => Self::Int(p as i32),
            PExponent::Finite(p) => Self::Real(p),
        }
    }

    pub fn exponent(self) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Two => 2.0,
            Self::Int(k) => k as f64,
            Self::Real(p) => p,
            Self::Inf => f64::INFINITY,
        }
    }

    /// `Σ |x_i|^p` without rescaling. May overflow; see [`LpKernel::norm`].
    #[inline]
    pub fn pow_sum(self, x: &[f64]) -> f64 {
        with_pow!(self, |f| striped_sum(x, f))
    }

    /// `‖x‖_p`. The plain power sum is used when it lands in the normal
    /// range; otherwise the sum is recomputed relative to `max |x_i|`.
    #[inline]
    pub fn norm(self, x: &[f64]) -> f64 {
        if let Self::Inf = self {
            return max_abs(x);
        }
        let s = self.pow_sum(x);
        if s.is_finite() && s > FAST_PATH_FLOOR {
            return self.root(s);
        }
        self.scaled_norm(x)
    }

    #[inline(always)]
    fn root(self, s: f64) -> f64 {
        match self {
            Self::One => s,
            Self::Two => s.sqrt(),
            Self::Int(k) => s.powf(1.0 / k as f64),
            Self::Real(p) => s.powf(1.0 / p),
            Self::Inf => unreachable!(),
        }
    }

    fn scaled_norm(self, x: &[f64]) -> f64 {
        let m = max_abs(x);
        if m == 0.0 || !m.is_finite() {
            return m;
        }
        // each ratio lies in [0, 1], so the powers cannot overflow
        let s = with_pow!(self, |f| striped_sum(x, |v| f(v / m)));
        m * self.root(s)
    }
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `‖x‖_p`; the empty vector has norm 0.
pub fn lp_norm(x: &[f64], p: PExponent) -> f64 {
    LpKernel::new(p).norm(x)
}

impl RngStream {
    /// Unscaled `Σ |g_i|^p` over `n` fresh normals (finite `p` only); may
    /// overflow for large `p`.
    #[inline]
    pub fn gaussian_pow_sum(&mut self, n: usize, kernel: LpKernel) -> f64 {
        let mut acc = [0.0; 4];
        let mut i = 0;
        with_pow!(kernel, |f| self.for_each_gaussian(n, |z| {
            acc[i & 3] += f(z);
            i += 1;
        }));
        (acc[0] + acc[1]) + (acc[2] + acc[3])
    }

    /// `‖g‖_p` for `n` fresh normals, bit-identical to `lp_norm` of the vector
    /// the same outputs would produce. The power sum is accumulated on the
    /// fly; only when it leaves the normal range is the vector regenerated
    /// into `scratch` for the rescaled evaluation.
    pub fn gaussian_norm(&mut self, n: usize, kernel: LpKernel, scratch: &mut Vec<f64>) -> f64 {
        if let LpKernel::Inf = kernel {
            return self.max_abs_gaussian(n);
        }
        let start = self.counter;
        let s = self.gaussian_pow_sum(n, kernel);
        if s.is_finite() && s > FAST_PATH_FLOOR {
            return kernel.root(s);
        }
        self.seek(start);
        scratch.resize(n, 0.0);
        self.fill_gaussian(scratch);
        kernel.norm(scratch)
    }
}

/// Non-increasing rearrangement of `|x|`.
pub fn sorted_abs_desc(x: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    out.sort_unstable_by(|a, b| b.total_cmp(a));
    out
}

/// Streaming count, mean and central moment sums up to order four.
///
/// Updates follow Welford/Pébay; [`merge`](Self::merge) combines two
/// accumulators exactly in real arithmetic, so splitting a stream into
/// chunks changes results only through floating-point reassociation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MomentAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values(values: &[f64]) -> Self {
        let mut acc = Self::new();
        for &v in values {
            acc.push(v);
        }
        acc
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2 - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&self, other: &Self) -> Self {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let delta2 = delta * delta;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + delta2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta * delta2 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + delta2 * delta2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * delta2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        Self {
            count: self.count + other.count,
            mean,
            m2: m2.max(0.0),
            m3,
            m4: m4.max(0.0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::Undefined("mean of an empty accumulator".into()));
        }
        Ok(self.mean)
    }

    /// Unbiased sample variance (divisor `count - 1`).
    pub fn variance(&self) -> Result<f64> {
        if self.count < 2 {
            return Err(Error::Undefined(format!(
                "sample variance needs at least 2 values, have {}",
                self.count
            )));
        }
        Ok(self.m2 / (self.count as f64 - 1.0))
    }

    pub fn std_error_mean(&self) -> Result<f64> {
        Ok((self.variance()? / self.count as f64).sqrt())
    }

    /// Fourth central moment `m4 / count`.
    pub fn central_moment4(&self) -> Result<f64> {
        self.mean()?;
        Ok(self.m4 / self.count as f64)
    }

    /// Standard error of the sample variance,
    /// `sqrt((μ₄ - σ⁴ (N-3)/(N-1)) / N)`.
    pub fn variance_std_error(&self) -> Result<f64> {
        if self.count < 4 {
            return Err(Error::Undefined(
                "variance standard error needs at least 4 values".into(),
            ));
        }
        let n = self.count as f64;
        let var = self.variance()?;
        let mu4 = self.m4 / n;
        Ok(((mu4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt())
    }

    /// Standardized fourth moment `μ₄ / μ₂²` (3 for a Gaussian).
    pub fn kurtosis(&self) -> Result<f64> {
        if self.count < 2 || self.m2 == 0.0 {
            return Err(Error::Undefined("kurtosis of a degenerate sample".into()));
        }
        let n = self.count as f64;
        Ok(n * self.m4 / (self.m2 * self.m2))
    }

    pub fn skewness(&self) -> Result<f64> {
        if self.count < 2 || self.m2 == 0.0 {
            return Err(Error::Undefined("skewness of a degenerate sample".into()));
        }
        let n = self.count as f64;
        Ok(n.sqrt() * self.m3 / self.m2.powf(1.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fused_norm_matches_materialized() {
        let mut scratch = Vec::new();
        for p in [1.0, 2.0, 3.0, 4.5, 20.0, 3000.0] {
            let k = LpKernel::new(PExponent::Finite(p));
            let mut a = RngStream::new(5, 6);
            let mut b = RngStream::new(5, 6);
            for n in [1usize, 7, 300] {
                let fused = a.gaussian_norm(n, k, &mut scratch);
                let x = sample_gaussian_vector(&mut b, n).unwrap();
                assert_eq!(fused, lp_norm(&x, PExponent::Finite(p)));
                assert_eq!(a.counter(), b.counter());
            }
        }
        let mut a = RngStream::new(1, 2);
        let mut b = RngStream::new(1, 2);
        let fused = a.gaussian_norm(50, LpKernel::Inf, &mut scratch);
        assert_eq!(
            fused,
            lp_norm(&sample_gaussian_vector(&mut b, 50).unwrap(), PExponent::Infinity)
        );
    }
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn philox_matches_reference_outputs() {
        // numpy.random.Philox(key=0, counter=0) emits block counter 1 first.
        assert_eq!(
            philox4x64([1, 0, 0, 0], [0, 0]),
            [
                0x02f4_ba64_08e4_d89b,
                0x3dd6_2b0b_9ca8_c5b2,
                0x1c86_67a5_5d90_2e79,
                0x907d_7a05_2fd5_b4dc
            ]
        );
        assert_eq!(
            philox4x64([2, 0, 0, 0], [0, 0]),
            [
                0x809b_f322_8839_87c3,
                0x4711_28b9_e807_f7dd,
                0xf250_ba0d_bec0_65b7,
                0xfc6e_d667_67a4_57bc
            ]
        );
        assert_eq!(
            philox4x64([6, 0, 0, 0], [1, 2]),
            [
                0xe760_a852_b593_7c36,
                0x352d_ae2d_26b4_ee43,
                0x7af5_4aaf_d2ce_e4ae,
                0x73b6_49a7_302b_c8b1
            ]
        );
    }

    #[test]
    fn stream_is_a_function_of_its_position() {
        let mut a = RngStream::with_chunk(7, 11, 3);
        let first: Vec<u64> = (0..10).map(|_| a.next_u64()).collect();
        let mut b = RngStream::with_chunk(7, 11, 3);
        b.seek(5);
        let tail: Vec<u64> = (0..5).map(|_| b.next_u64()).collect();
        assert_eq!(&first[5..], &tail[..]);
        let mut other = RngStream::with_chunk(7, 11, 4);
        assert_ne!(other.next_u64(), first[0]);
        let mut other = RngStream::with_chunk(7, 12, 3);
        assert_ne!(other.next_u64(), first[0]);
    }

    #[test]
    fn gaussian_vectors_are_reproducible() {
        let x = sample_gaussian_vector(&mut RngStream::new(42, 1), 100).unwrap();
        let y = sample_gaussian_vector(&mut RngStream::new(42, 1), 100).unwrap();
        assert_eq!(x, y);
        assert!(sample_gaussian_vector(&mut RngStream::new(42, 1), 0).is_err());
    }

    #[test]
    fn gaussian_first_two_moments() {
        let n = 1_000_000;
        let mut s = RngStream::new(2024, 9);
        let acc = MomentAccumulator::from_values(&(0..n).map(|_| s.next_gaussian()).collect::<Vec<_>>());
        let sq = (n as f64).sqrt();
        assert!(acc.mean().unwrap().abs() <= 4.0 / sq);
        let second = acc.variance().unwrap() * (n as f64 - 1.0) / n as f64 + acc.mean().unwrap().powi(2);
        assert!((second - 1.0).abs() <= 6.0 / sq, "E x^2 = {second}");
        assert!((acc.kurtosis().unwrap() - 3.0).abs() < 0.05);
    }

    #[test]
    fn batched_normals_match_one_at_a_time() {
        for (seed, skip) in [(0u64, 0usize), (3, 5), (9, 16), (11, 31)] {
            let mut a = RngStream::new(seed, 1);
            let mut b = RngStream::new(seed, 1);
            for _ in 0..skip {
                a.next_u64();
                b.next_u64();
            }
            let mut x = vec![0.0; 20_000];
            a.fill_gaussian(&mut x);
            for &v in &x {
                assert_eq!(v.to_bits(), b.next_gaussian().to_bits());
            }
            assert_eq!(a.counter(), b.counter());
        }
    }

    #[test]
    fn folded_bits_and_tail_split() {
        let mut s = RngStream::new(4, 4);
        for _ in 0..10_000 {
            let f = s.next_u64() >> 12;
            assert_eq!(tail_from_folded_bits(f), tail_from_index(f));
        }
        for f in TAIL_INDEX_LIMIT - 3..TAIL_INDEX_LIMIT + 3 {
            assert_eq!(f < TAIL_INDEX_LIMIT, tail_from_index(f) <= ACKLAM_SPLIT);
        }
        assert_eq!(tail_from_folded_bits(0), tail_from_index(0));
        assert_eq!(tail_from_folded_bits((1 << 52) - 1), tail_from_index((1 << 52) - 1));
    }

    #[test]
    fn max_abs_gaussian_agrees_with_full_sample() {
        for seed in 0..20 {
            let mut a = RngStream::new(seed, 5);
            let mut b = RngStream::new(seed, 5);
            let x = sample_gaussian_vector(&mut a, 777).unwrap();
            let m = b.max_abs_gaussian(777);
            assert_eq!(m, lp_norm(&x, PExponent::Infinity));
            assert_eq!(a.counter(), b.counter());
        }
    }

    #[test]
    fn norm_examples() {
        let f = |p| PExponent::finite(p).unwrap();
        assert_eq!(lp_norm(&[3.0, 4.0], f(2.0)), 5.0);
        assert_eq!(lp_norm(&[2.0, 1.0], f(1000.0)), 2.0);
        assert_eq!(lp_norm(&[2.0, 1.0], f(1000.5)), 2.0);
        assert_eq!(lp_norm(&[], f(3.0)), 0.0);
        assert_eq!(lp_norm(&[0.0; 5], f(3.0)), 0.0);
        assert_eq!(lp_norm(&[0.0; 5], PExponent::Infinity), 0.0);
        let ones = vec![1.0; 64];
        for p in [1.0, 1.5, 2.0, 3.0, 7.25, 40.0] {
            assert_relative_eq!(lp_norm(&ones, f(p)), 64f64.powf(1.0 / p), max_relative = 1e-14);
        }
        assert_eq!(lp_norm(&ones, PExponent::Infinity), 1.0);
        assert_eq!(lp_norm(&[-3.0, 1.0], PExponent::Infinity), 3.0);
    }

    #[test]
    fn norm_survives_extreme_magnitudes() {
        let f = |p| PExponent::finite(p).unwrap();
        for &scale in &[1e-300, 1e-150, 1e150, 1e300] {
            let x = [3.0 * scale, 4.0 * scale];
            assert_relative_eq!(lp_norm(&x, f(2.0)), 5.0 * scale, max_relative = 1e-14);
            for p in [1.0, 2.5, 17.0, 1e4] {
                let want = scale * lp_norm(&[3.0, 4.0], f(p));
                let got = lp_norm(&x, f(p));
                assert!(got.is_finite() && got > 0.0);
                assert_relative_eq!(got, want, max_relative = 1e-12);
            }
        }
        let mixed = [1e-300, 1e300, 5.0];
        assert_relative_eq!(lp_norm(&mixed, f(3.0)), 1e300, max_relative = 1e-15);
    }

    #[test]
    fn sorted_rearrangement() {
        assert_eq!(sorted_abs_desc(&[-3.0, 1.0, 2.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(sorted_abs_desc(&[-2.0, 2.0, -2.0]), vec![2.0, 2.0, 2.0]);
        let x = sample_gaussian_vector(&mut RngStream::new(3, 3), 500).unwrap();
        let s = sorted_abs_desc(&x);
        assert_eq!(s.len(), 500);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let mut a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        a.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(a, s);
    }

    #[test]
    fn accumulator_small_cases() {
        let acc = MomentAccumulator::from_values(&[1.0, 2.0, 3.0]);
        assert_eq!(acc.mean().unwrap(), 2.0);
        assert_eq!(acc.variance().unwrap(), 1.0);
        let single = MomentAccumulator::from_values(&[4.0]);
        assert!(matches!(single.variance(), Err(Error::Undefined(_))));
        assert!(MomentAccumulator::new().mean().is_err());
        let a = MomentAccumulator::from_values(&[0.5, -1.5, 9.0]);
        assert_eq!(MomentAccumulator::new().merge(&a), a);
        assert_eq!(a.merge(&MomentAccumulator::new()), a);
    }

    #[test]
    fn accumulator_halves_match_single_pass() {
        let mut s = RngStream::new(1, 77);
        let xs: Vec<f64> = (0..100_000).map(|_| s.next_gaussian().exp()).collect();
        let whole = MomentAccumulator::from_values(&xs);
        let (a, b) = xs.split_at(37_123);
        let merged = MomentAccumulator::from_values(a).merge(&MomentAccumulator::from_values(b));
        assert_eq!(merged.count(), whole.count());
        assert_relative_eq!(merged.mean().unwrap(), whole.mean().unwrap(), max_relative = 1e-10);
        assert_relative_eq!(
            merged.variance().unwrap(),
            whole.variance().unwrap(),
            max_relative = 1e-10
        );
        assert_relative_eq!(
            merged.kurtosis().unwrap(),
            whole.kurtosis().unwrap(),
            max_relative = 1e-10
        );
        assert_relative_eq!(
            merged.skewness().unwrap(),
            whole.skewness().unwrap(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn variance_standard_error_matches_gaussian_formula() {
        // For Gaussian data Var(s²) ≈ 2σ⁴/(N-1).
        let mut s = RngStream::new(5, 5);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| 2.0 * s.next_gaussian()).collect();
        let acc = MomentAccumulator::from_values(&xs);
        let se = acc.variance_std_error().unwrap();
        let want = (2.0 * 16.0 / (n as f64 - 1.0)).sqrt();
        assert!((se / want - 1.0).abs() < 0.05);
    }

    #[test]
    fn p_exponent_parsing() {
        assert_eq!("inf".parse::<PExponent>().unwrap(), PExponent::Infinity);
        assert_eq!("2.5".parse::<PExponent>().unwrap(), PExponent::Finite(2.5));
        assert!("0.5".parse::<PExponent>().is_err());
        assert!("abc".parse::<PExponent>().is_err());
        assert_eq!(PExponent::Infinity.to_string(), "inf");
    }

    fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 1..40)
    }

    fn p_strategy() -> impl Strategy<Value = PExponent> {
        prop_oneof![
            (1.0f64..50.0).prop_map(PExponent::Finite),
            Just(PExponent::Finite(2.0)),
            Just(PExponent::Infinity),
        ]
    }

    proptest! {
        #[test]
        fn triangle_and_homogeneity(x in vec_strategy(), y in vec_strategy(), c in -100.0f64..100.0, p in p_strategy()) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            let sum: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
            let nx = lp_norm(x, p);
            let ny = lp_norm(y, p);
            prop_assert!(lp_norm(&sum, p) <= (nx + ny) * (1.0 + 1e-12) + 1e-12);
            let scaled: Vec<f64> = x.iter().map(|a| c * a).collect();
            let lhs = lp_norm(&scaled, p);
            prop_assert!((lhs - c.abs() * nx).abs() <= 1e-12 * (1.0 + c.abs() * nx));
        }

        #[test]
        fn norm_monotonicity_in_p(x in vec_strategy(), p in 1.0f64..20.0, dq in 0.01f64..20.0, q_inf in any::<bool>()) {
            let n = x.len() as f64;
            let q = if q_inf { PExponent::Infinity } else { PExponent::Finite(p + dq) };
            let np = lp_norm(&x, PExponent::Finite(p));
            let nq = lp_norm(&x, q);
            let factor = n.powf(1.0 / p - 1.0 / q.value());
            prop_assert!(nq <= np * (1.0 + 1e-12));
            prop_assert!(np <= factor * nq * (1.0 + 1e-12));
        }

        #[test]
        fn merge_is_commutative_and_associative(a in prop::collection::vec(-50.0f64..50.0, 0..30),
                                                b in prop::collection::vec(-50.0f64..50.0, 0..30),
                                                c in prop::collection::vec(-50.0f64..50.0, 0..30)) {
            let (ma, mb, mc) = (MomentAccumulator::from_values(&a), MomentAccumulator::from_values(&b), MomentAccumulator::from_values(&c));
            let left = ma.merge(&mb).merge(&mc);
            let right = ma.merge(&mb.merge(&mc));
            let swapped = mb.merge(&ma).merge(&mc);
            prop_assert_eq!(left.count(), right.count());
            if left.count() >= 2 {
                for other in [right, swapped] {
                    let (va, vb) = (left.variance().unwrap(), other.variance().unwrap());
                    prop_assert!((va - vb).abs() <= 1e-9 * (1.0 + va));
                    prop_assert!((left.mean().unwrap() - other.mean().unwrap()).abs() <= 1e-9 * (1.0 + left.mean().unwrap().abs()));
                }
            }
        }
    }
}
