//! Row-pair selection laws.
//!
//! Three samplers share one interface:
//!
//! * [`SamplerKind::Iid`]: both indices drawn independently with
//!   probability `‖a_i‖² / ‖A‖_F²` (repeats allowed).
//! * [`SamplerKind::WithoutReplacement`]: the first index as above, the
//!   second from the remaining rows renormalized by `‖A‖_F² - ‖a_{i1}‖²`.
//! * [`SamplerKind::Volume`]: the unordered pair `{i, j}` drawn with
//!   probability proportional to `det(A_S A_Sᵀ) = ‖a_i‖²‖a_j‖² - ⟨a_i,a_j⟩²`,
//!   then returned in uniformly random order.
//!
//! Every draw is an inversion of a cumulative-weight table by binary
//! search. The volume table holds all `m(m-1)/2` pair weights and is built
//! once in `O(m² n)`; a built sampler is immutable and can be shared by
//! concurrent trials, each owning its own [`SeededRng`].

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, row_geometry, DenseMatrix, RowGeometry};

/// Deterministic, platform-stable random source.
///
/// Wraps ChaCha8 (a counter-based stream cipher generator) seeded through
/// `SeedableRng::seed_from_u64`. Independent streams of the same seed are
/// selected with [`SeededRng::with_stream`].
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    draws: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            draws: 0,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32/64-bit words consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    #[inline]
    pub fn coin(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.draws += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.draws += 1;
        self.inner.fill_bytes(dst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum SamplerKind {
    Iid,
    /// Strategy I.
    WithoutReplacement,
    /// Strategy II.
    Volume,
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::Iid => "iid",
            SamplerKind::WithoutReplacement => "without-replacement",
            SamplerKind::Volume => "volume",
        })
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iid" => Ok(SamplerKind::Iid),
            "i" | "strategy-i" | "without-replacement" | "wor" => Ok(SamplerKind::WithoutReplacement),
            "ii" | "strategy-ii" | "volume" | "vol" => Ok(SamplerKind::Volume),
            other => Err(Error::Config(format!("unknown sampler kind '{other}'"))),
        }
    }
}

/// Weight tables for 2-element volume sampling.
#[derive(Clone, Debug)]
struct VolumeTable {
    /// `w_{ij}` for `i < j`, in row-major upper-triangle order.
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    /// Σ_{i<j} w_{ij}
    total: f64,
    /// Start offset of each `i` in the triangle ordering.
    offsets: Vec<usize>,
}

impl VolumeTable {
    fn build(a: &DenseMatrix, geom: &RowGeometry) -> Self {
        let m = a.nrows();
        let npairs = m * (m - 1) / 2;
        let mut weights = Vec::with_capacity(npairs);
        let mut offsets = Vec::with_capacity(m);
        for i in 0..m {
            offsets.push(weights.len());
            let ni = geom.row_norms_sq[i];
            for j in (i + 1)..m {
                let nj = geom.row_norms_sq[j];
                let g = match &geom.gram {
                    Some(gram) => gram.get(i, j),
                    None => dot(a.row(i), a.row(j)),
                };
                let scale = ni * nj;
                let w = if g * g > 0.75 * scale {
                    // nearly parallel: ‖a_i‖²‖a_j - c a_i‖² avoids the cancellation,
                    // and an error in c only enters at second order
                    let c = g / ni;
                    let perp: f64 = a.row(i).iter().zip(a.row(j)).map(|(p, q)| (-c).mul_add(*p, *q).powi(2)).sum();
                    ni * perp
                } else {
                    scale - g * g
                };
                // below rounding noise the pair is colinear
                weights.push(if w <= 4.0 * f64::EPSILON * scale { 0.0 } else { w });
            }
        }
        let mut cumulative = Vec::with_capacity(npairs);
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        Self {
            weights,
            cumulative,
            total: acc,
            offsets,
        }
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        self.offsets[i] + (j - i - 1)
    }

    #[inline]
    fn weight(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.weights[self.index(i, j)],
            std::cmp::Ordering::Greater => self.weights[self.index(j, i)],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    fn pair_at(&self, k: usize) -> (usize, usize) {
        let i = self.offsets.partition_point(|&o| o <= k) - 1;
        (i, i + 1 + (k - self.offsets[i]))
    }

    fn draw(&self, rng: &mut SeededRng) -> (usize, usize) {
        let u = rng.uniform() * self.total;
        let mut k = self.cumulative.partition_point(|&c| c <= u);
        if k >= self.weights.len() {
            k = self.weights.iter().rposition(|&w| w > 0.0).expect("total > 0");
        }
        self.pair_at(k)
    }
}

/// Source of index pairs with exactly queryable probabilities.
#[derive(Clone, Debug)]
pub struct PairSampler {
    kind: SamplerKind,
    geometry: RowGeometry,
    /// Prefix sums of squared row norms.
    cumulative: Vec<f64>,
    last_nonzero: usize,
    volume: Option<VolumeTable>,
    /// Test hook: draws use a distorted row table.
    tampered: bool,
}

impl PairSampler {
    pub fn new(a: &DenseMatrix, kind: SamplerKind) -> Result<Self> {
        let geometry = row_geometry(a, kind == SamplerKind::Volume);
        Self::from_geometry(a, geometry, kind)
    }

    /// Builds the sampler reusing precomputed row geometry (the Gram matrix
    /// is only consulted for the volume law).
    pub fn from_geometry(a: &DenseMatrix, geometry: RowGeometry, kind: SamplerKind) -> Result<Self> {
        if geometry.nonzero_rows() < 2 {
            return Err(Error::DegenerateMatrix(
                "at least two nonzero rows are required".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(geometry.row_norms_sq.len());
        let mut acc = 0.0;
        for w in &geometry.row_norms_sq {
            acc += w;
            cumulative.push(acc);
        }
        let last_nonzero = geometry
            .row_norms_sq
            .iter()
            .rposition(|&w| w > 0.0)
            .expect("two nonzero rows");
        let volume = if kind == SamplerKind::Volume {
            let table = VolumeTable::build(a, &geometry);
            if table.total <= 0.0 {
                return Err(Error::DegenerateMatrix(
                    "all pair volumes vanish: rank(A) >= 2 required".into(),
                ));
            }
            Some(table)
        } else {
            None
        };
        Ok(Self {
            kind,
            geometry,
            cumulative,
            last_nonzero,
            volume,
            tampered: false,
        })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn geometry(&self) -> &RowGeometry {
        &self.geometry
    }

    pub fn num_rows(&self) -> usize {
        self.geometry.row_norms_sq.len()
    }

    /// Returns a copy whose draws no longer follow its reported law.
    /// Used as a negative control for goodness-of-fit checks.
    #[doc(hidden)]
    pub fn tampered(mut self) -> Self {
        self.tampered = true;
        self
    }

    /// `w_{ij} = ‖a_i‖²‖a_j‖² - ⟨a_i,a_j⟩²`; `None` unless this is a volume sampler.
    pub fn pair_weight(&self, i: usize, j: usize) -> Option<f64> {
        self.volume.as_ref().map(|v| v.weight(i, j))
    }

    /// `Σ_{i<j} w_{ij}`, the volume normalizer.
    pub fn pair_weight_total(&self) -> Option<f64> {
        self.volume.as_ref().map(|v| v.total)
    }

    #[inline]
    fn row_prob(&self, i: usize) -> f64 {
        self.geometry.row_norms_sq[i] / self.geometry.frob_sq
    }

    #[inline]
    fn draw_row(&self, rng: &mut SeededRng) -> usize {
        let mut u = rng.uniform() * self.geometry.frob_sq;
        if self.tampered {
            // squash mass toward low indices
            u *= u / self.geometry.frob_sq;
        }
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.last_nonzero)
    }

    /// Draws from rows `!= skip`, proportional to squared norms.
    fn draw_row_excluding(&self, skip: usize, rng: &mut SeededRng) -> usize {
        let w_skip = self.geometry.row_norms_sq[skip];
        let before = if skip == 0 { 0.0 } else { self.cumulative[skip - 1] };
        let u = rng.uniform() * (self.geometry.frob_sq - w_skip);
        let j = if u < before {
            self.cumulative.partition_point(|&c| c <= u)
        } else {
            let shifted = (u - before) + self.cumulative[skip];
            self.cumulative.partition_point(|&c| c <= shifted)
        };
        if j < self.num_rows() && j != skip {
            return j;
        }
        // rounding pushed past the end: last nonzero row other than `skip`
        (0..self.num_rows())
            .rev()
            .find(|&k| k != skip && self.geometry.row_norms_sq[k] > 0.0)
            .expect("two nonzero rows")
    }

    /// Ordered pair `(i1, i2)` under the sampler's law.
    pub fn sample_pair(&self, rng: &mut SeededRng) -> (usize, usize) {
        match self.kind {
            SamplerKind::Iid => (self.draw_row(rng), self.draw_row(rng)),
            SamplerKind::WithoutReplacement => {
                let i = self.draw_row(rng);
                (i, self.draw_row_excluding(i, rng))
            }
            SamplerKind::Volume => {
                let vol = self.volume.as_ref().expect("volume table");
                let (i, j) = if self.tampered {
                    // ignores volumes: row-norm pairs without replacement
                    let i = self.draw_row(rng);
                    (i, self.draw_row_excluding(i, rng))
                } else {
                    vol.draw(rng)
                };
                if rng.coin() {
                    (j, i)
                } else {
                    (i, j)
                }
            }
        }
    }

    /// Single row drawn proportionally to its squared norm.
    pub fn sample_row(&self, rng: &mut SeededRng) -> usize {
        self.draw_row(rng)
    }

    /// Exact probability of the ordered draw `(i1, i2)`.
    pub fn pair_probability(&self, i1: usize, i2: usize) -> f64 {
        match self.kind {
            SamplerKind::Iid => self.row_prob(i1) * self.row_prob(i2),
            SamplerKind::WithoutReplacement => {
                if i1 == i2 {
                    return 0.0;
                }
                let rest = self.geometry.frob_sq - self.geometry.row_norms_sq[i1];
                if rest <= 0.0 {
                    return 0.0;
                }
                self.row_prob(i1) * self.geometry.row_norms_sq[i2] / rest
            }
            SamplerKind::Volume => {
                let vol = self.volume.as_ref().expect("volume table");
                0.5 * vol.weight(i1, i2) / vol.total
            }
        }
    }

    /// Probability of the unordered pair `{i, j}`; both orders summed.
    pub fn unordered_probability(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.pair_probability(i, i)
        } else {
            self.pair_probability(i, j) + self.pair_probability(j, i)
        }
    }
}
