//! Collocation samplers: seeded uniform draws and a two-dimensional Sobol
//! sequence in natural (van der Corput) ordering, plus a CSV dump of the
//! resulting point sets.

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{Error, Point, Result};

/// How many points to draw on the interior, the initial slice `t = 0`, and
/// the two spatial faces combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleCounts {
    pub interior: usize,
    pub temporal: usize,
    pub spatial: usize,
}

/// One full collocation draw. Interior points are strictly inside
/// `D x (0, T)`; temporal points sit on `t = 0`; spatial points sit on the
/// faces `x = a` and `x = b`, the left face taking any odd remainder.
#[derive(Clone, Debug)]
pub struct CollocationSets {
    pub interior: Vec<Point>,
    pub temporal: Vec<Point>,
    pub spatial: Vec<Point>,
}

#[inline]
fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn check_geometry(domain: (f64, f64), t_final: f64) -> Result<()> {
    if !(domain.0 < domain.1) || !domain.0.is_finite() || !domain.1.is_finite() {
        return Err(Error::Config(format!("bad spatial domain [{}, {}]", domain.0, domain.1)));
    }
    if !(t_final > 0.0) {
        return Err(Error::Config(format!("final time must be positive, got {t_final}")));
    }
    Ok(())
}

/// Independent uniform draws from a seeded stream. Draw order is pinned:
/// interior (x then t per point), then temporal x's, then spatial t's for the
/// left face followed by the right face; reseeding reproduces bit-identical
/// sets.
pub fn sample_uniform(
    domain: (f64, f64),
    t_final: f64,
    counts: SampleCounts,
    seed: u64,
) -> Result<CollocationSets> {
    check_geometry(domain, t_final)?;
    let (a, b) = domain;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut interior = Vec::with_capacity(counts.interior);
    while interior.len() < counts.interior {
        let x = a + (b - a) * unit_f64(&mut rng);
        let t = t_final * unit_f64(&mut rng);
        // open box: rejection only ever trips on exact lattice hits
        if x > a && x < b && t > 0.0 {
            interior.push(Point::new(x, t));
        }
    }
    let temporal = (0..counts.temporal)
        .map(|_| Point::new(a + (b - a) * unit_f64(&mut rng), 0.0))
        .collect();
    let n_left = counts.spatial - counts.spatial / 2;
    let mut spatial = Vec::with_capacity(counts.spatial);
    for _ in 0..n_left {
        spatial.push(Point::new(a, t_final * unit_f64(&mut rng)));
    }
    for _ in 0..counts.spatial - n_left {
        spatial.push(Point::new(b, t_final * unit_f64(&mut rng)));
    }
    Ok(CollocationSets { interior, temporal, spatial })
}

/// Sobol sequence in one or two dimensions, natural ordering: the point at
/// index `n` XORs the direction numbers picked out by the set bits of `n`.
/// Dimension 0 reduces to the van der Corput base-2 sequence; dimension 1
/// uses the primitive polynomial `x + 1`. Streams skip index 0 (the origin).
#[derive(Clone, Debug)]
pub struct SobolState {
    dim: usize,
    index: u64,
    v: Vec<[u64; 64]>,
}

impl SobolState {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::Config(format!("Sobol sampler supports 1 or 2 dimensions, got {dim}")));
        }
        let mut v = Vec::with_capacity(dim);
        let mut v0 = [0u64; 64];
        for (j, slot) in v0.iter_mut().enumerate() {
            *slot = 1u64 << (63 - j);
        }
        v.push(v0);
        if dim == 2 {
            let mut v1 = [0u64; 64];
            v1[0] = 1u64 << 63;
            for j in 1..64 {
                v1[j] = v1[j - 1] ^ (v1[j - 1] >> 1);
            }
            v.push(v1);
        }
        Ok(SobolState { dim, index: 1, v })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index of the next point the stream will emit (starts at 1).
    pub fn index(&self) -> u64 {
        self.index
    }

    /// The raw sequence member at `index`, origin included. Unused
    /// coordinates are 0.
    pub fn point_at(&self, index: u64) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (d, dirs) in self.v.iter().enumerate() {
            let mut acc = 0u64;
            let mut n = index;
            let mut j = 0;
            while n != 0 {
                if n & 1 == 1 {
                    acc ^= dirs[j];
                }
                n >>= 1;
                j += 1;
            }
            // top 53 bits; exactly representable, and 0 only at the origin
            out[d] = (acc >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        }
        out
    }

    pub fn next_point(&mut self) -> Result<[f64; 2]> {
        if self.index == u64::MAX {
            return Err(Error::Exhausted);
        }
        let p = self.point_at(self.index);
        self.index += 1;
        Ok(p)
    }
}

/// Low-discrepancy collocation: interior points from a fresh 2D stream,
/// boundary coordinates from a fresh 1D stream (temporal x's first, then
/// spatial t's, left face before right). Deterministic by construction.
pub fn sample_sobol(domain: (f64, f64), t_final: f64, counts: SampleCounts) -> Result<CollocationSets> {
    check_geometry(domain, t_final)?;
    let (a, b) = domain;
    let mut plane = SobolState::new(2)?;
    let mut interior = Vec::with_capacity(counts.interior);
    for _ in 0..counts.interior {
        let p = plane.next_point()?;
        interior.push(Point::new(a + (b - a) * p[0], t_final * p[1]));
    }
    let mut line = SobolState::new(1)?;
    let mut temporal = Vec::with_capacity(counts.temporal);
    for _ in 0..counts.temporal {
        let p = line.next_point()?;
        temporal.push(Point::new(a + (b - a) * p[0], 0.0));
    }
    let n_left = counts.spatial - counts.spatial / 2;
    let mut spatial = Vec::with_capacity(counts.spatial);
    for i in 0..counts.spatial {
        let p = line.next_point()?;
        let x = if i < n_left { a } else { b };
        spatial.push(Point::new(x, t_final * p[0]));
    }
    Ok(CollocationSets { interior, temporal, spatial })
}

/// Dump every collocation point as `kind,x,t` rows (kinds `int`, `tb`, `sb`).
pub fn write_collocation_csv(sets: &CollocationSets, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "kind,x,t")?;
    for p in &sets.interior {
        writeln!(out, "int,{:.16e},{:.16e}", p.x, p.t)?;
    }
    for p in &sets.temporal {
        writeln!(out, "tb,{:.16e},{:.16e}", p.x, p.t)?;
    }
    for p in &sets.spatial {
        writeln!(out, "sb,{:.16e},{:.16e}", p.x, p.t)?;
    }
    out.flush()?;
    Ok(())
}
