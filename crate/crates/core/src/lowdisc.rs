//! Base-2 digital sequences (Sobol construction) and their randomizations.
//!
//! Direction numbers come from the bundled Joe–Kuo table (`data/new-joe-kuo-6.64`),
//! which covers dimensions 1 through [`MAX_DIMENSION`]. Points are produced in
//! natural (non-Gray-code) order, so point `n` is the XOR of the direction
//! numbers selected by the set bits of `n`; index 0 is the origin.
//!
//! Digits are kept as 64-bit binary fractions. The base sequence occupies the
//! top 32 bits; randomization acts on all 64, so the low digits of a randomized
//! point are uniformly filled. Coordinates are exposed as `f64` in `[0, 1)`.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;
use std::sync::OnceLock;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::mix64;

pub const MAX_DIMENSION: usize = 64;
const BITS: usize = 32;
const JOE_KUO: &str = include_str!("../data/new-joe-kuo-6.64");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Randomization {
    None,
    #[default]
    DigitalShift,
    OwenScramble,
}

impl fmt::Display for Randomization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Randomization::None => "none",
            Randomization::DigitalShift => "digital-shift",
            Randomization::OwenScramble => "owen-scramble",
        })
    }
}

impl FromStr for Randomization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Randomization::None),
            "digital-shift" => Ok(Randomization::DigitalShift),
            "owen-scramble" => Ok(Randomization::OwenScramble),
            other => Err(Error::InvalidArgument(format!(
                "unknown randomization `{other}` (expected none | digital-shift | owen-scramble)"
            ))),
        }
    }
}

/// `M` points in `[0, 1)^d`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dimension: usize,
    count: usize,
    digits: Vec<u64>,
    points: Vec<f64>,
    randomization: Randomization,
    seed: u64,
}

#[inline]
fn digits_to_unit(d: u64) -> f64 {
    (d >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl PointSet {
    fn from_digits(
        dimension: usize,
        count: usize,
        digits: Vec<u64>,
        randomization: Randomization,
        seed: u64,
    ) -> Self {
        let points = digits.iter().map(|&d| digits_to_unit(d)).collect();
        PointSet {
            dimension,
            count,
            digits,
            points,
            randomization,
            seed,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn randomization(&self) -> Randomization {
        self.randomization
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn point(&self, m: usize) -> &[f64] {
        &self.points[m * self.dimension..(m + 1) * self.dimension]
    }

    /// Raw 64-bit binary digits of point `m`.
    pub fn digits(&self, m: usize) -> &[u64] {
        &self.digits[m * self.dimension..(m + 1) * self.dimension]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dimension)
    }

    /// CSV with header `point_index,c0,...,c{d-1}`; values use shortest
    /// round-trip decimal formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "point_index")?;
        for j in 0..self.dimension {
            write!(w, ",c{j}")?;
        }
        writeln!(w)?;
        for (m, row) in self.rows().enumerate() {
            write!(w, "{m}")?;
            for x in row {
                write!(w, ",{x:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Reads rows written by [`PointSet::write_csv`].
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("reading point CSV", e))?;
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .skip(1)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn direction_table() -> &'static Vec<[u32; BITS]> {
    static TABLE: OnceLock<Vec<[u32; BITS]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(MAX_DIMENSION);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1 << (31 - k);
        }
        table.push(first);
        for line in JOE_KUO.lines().skip(1) {
            let fields: Vec<u32> = line
                .split_whitespace()
                .map(|t| t.parse().expect("malformed direction-number table"))
                .collect();
            if fields.is_empty() {
                continue;
            }
            let s = fields[1] as usize;
            let a = fields[2];
            let m = &fields[3..3 + s];
            let mut v = [0u32; BITS];
            for k in 0..BITS {
                v[k] = if k < s {
                    m[k] << (31 - k)
                } else {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for l in 1..s {
                        if (a >> (s - 1 - l)) & 1 == 1 {
                            x ^= v[k - l];
                        }
                    }
                    x
                };
            }
            table.push(v);
        }
        assert_eq!(table.len(), MAX_DIMENSION, "direction table size");
        table
    })
}

/// First `count` points of the unrandomized `dimension`-dimensional sequence.
pub fn generate_base(dimension: usize, count: usize) -> Result<PointSet> {
    if dimension == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if dimension > MAX_DIMENSION {
        return Err(Error::UnsupportedDimension {
            requested: dimension,
            max: MAX_DIMENSION,
        });
    }
    if count == 0 {
        return Err(Error::InvalidArgument("point count must be at least 1".into()));
    }
    if count as u64 > 1u64 << BITS {
        return Err(Error::InvalidArgument(format!(
            "point count {count} exceeds 2^{BITS}"
        )));
    }
    let table = direction_table();
    let mut digits = Vec::with_capacity(count * dimension);
    for n in 0..count as u64 {
        for dirs in &table[..dimension] {
            let mut x = 0u32;
            let mut bits = n;
            let mut k = 0;
            while bits != 0 {
                if bits & 1 == 1 {
                    x ^= dirs[k];
                }
                bits >>= 1;
                k += 1;
            }
            digits.push((x as u64) << 32);
        }
    }
    Ok(PointSet::from_digits(
        dimension,
        count,
        digits,
        Randomization::None,
        0,
    ))
}

/// Randomizes an unrandomized point set. `Randomization::None` returns a copy.
pub fn randomize(base: &PointSet, scheme: Randomization, seed: u64) -> Result<PointSet> {
    if base.randomization != Randomization::None {
        return Err(Error::InvalidArgument(format!(
            "point set is already randomized ({})",
            base.randomization
        )));
    }
    match scheme {
        Randomization::None => Ok(base.clone()),
        Randomization::DigitalShift => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shifts: Vec<u64> = (0..base.dimension).map(|_| rng.next_u64()).collect();
            let mut out = digital_shift(base, &shifts)?;
            out.seed = seed;
            Ok(out)
        }
        Randomization::OwenScramble => {
            let d = base.dimension;
            let digits = base
                .digits
                .iter()
                .enumerate()
                .map(|(idx, &x)| owen_scramble_digits(x, (idx % d) as u64, seed))
                .collect();
            Ok(PointSet::from_digits(
                d,
                base.count,
                digits,
                Randomization::OwenScramble,
                seed,
            ))
        }
    }
}

/// XORs coordinate `j` of every point with `shifts[j]` (64-bit binary fractions).
pub fn digital_shift(base: &PointSet, shifts: &[u64]) -> Result<PointSet> {
    if shifts.len() != base.dimension {
        return Err(Error::InvalidArgument(format!(
            "shift vector has {} entries for dimension {}",
            shifts.len(),
            base.dimension
        )));
    }
    let d = base.dimension;
    let digits = base
        .digits
        .iter()
        .enumerate()
        .map(|(idx, &x)| x ^ shifts[idx % d])
        .collect();
    Ok(PointSet::from_digits(
        d,
        base.count,
        digits,
        Randomization::DigitalShift,
        0,
    ))
}

/// Nested uniform scramble: digit `k` is flipped by a random bit that depends
/// on the coordinate, the level `k` and every digit above it.
fn owen_scramble_digits(x: u64, coord: u64, seed: u64) -> u64 {
    let coord_key = mix64(seed ^ mix64(coord.wrapping_add(0x5851_F42D_4C95_7F2D)));
    let mut out = 0u64;
    for level in 0..64u32 {
        let prefix = if level == 0 { 0 } else { x >> (64 - level) };
        let flip = mix64(coord_key ^ mix64(prefix ^ ((level as u64) << 58) ^ level as u64)) & 1;
        let bit = (x >> (63 - level)) & 1;
        out |= (bit ^ flip) << (63 - level);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairQuality {
    pub i: usize,
    pub j: usize,
    /// Pearson statistic over a 16×16 grid (256 bins for a 1-D set);
    /// 255 degrees of freedom under i.i.d. uniformity.
    pub chi_square: f64,
    /// L2-star discrepancy of the projection (Warnock's formula).
    pub l2_star_discrepancy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionReport {
    pub count: usize,
    /// Set when fewer points than bins (256) are available; the chi-square
    /// values are then not meaningful.
    pub insufficient_points: bool,
    pub pairs: Vec<PairQuality>,
}

pub const PROJECTION_CELLS: usize = 16;

/// Uniformity diagnostics for every one- or two-dimensional projection.
pub fn low_dimension_projection_quality(ps: &PointSet) -> ProjectionReport {
    let rows: Vec<&[f64]> = ps.rows().collect();
    projection_quality_of_rows(&rows, ps.dimension)
}

/// Same diagnostics for arbitrary rows (e.g. pseudo-random comparison sets).
pub fn projection_quality_of_rows(rows: &[&[f64]], dimension: usize) -> ProjectionReport {
    let n = rows.len();
    let bins = PROJECTION_CELLS * PROJECTION_CELLS;
    let mut pairs = Vec::new();
    let pair_list: Vec<(usize, usize)> = if dimension == 1 {
        vec![(0, 0)]
    } else {
        (0..dimension)
            .flat_map(|i| (i + 1..dimension).map(move |j| (i, j)))
            .collect()
    };
    let expected = n as f64 / bins as f64;
    for (i, j) in pair_list {
        let mut counts = vec![0usize; bins];
        for r in rows {
            let cell = if i == j {
                ((r[i] * bins as f64) as usize).min(bins - 1)
            } else {
                let ci = ((r[i] * PROJECTION_CELLS as f64) as usize).min(PROJECTION_CELLS - 1);
                let cj = ((r[j] * PROJECTION_CELLS as f64) as usize).min(PROJECTION_CELLS - 1);
                ci * PROJECTION_CELLS + cj
            };
            counts[cell] += 1;
        }
        let chi_square = if n == 0 {
            f64::NAN
        } else {
            counts
                .iter()
                .map(|&c| {
                    let diff = c as f64 - expected;
                    diff * diff / expected
                })
                .sum()
        };
        let coords: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| if i == j { vec![r[i]] } else { vec![r[i], r[j]] })
            .collect();
        pairs.push(PairQuality {
            i,
            j,
            chi_square,
            l2_star_discrepancy: l2_star(&coords),
        });
    }
    ProjectionReport {
        count: n,
        insufficient_points: n < bins,
        pairs,
    }
}

fn l2_star(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    if n == 0 {
        return f64::NAN;
    }
    let s = points[0].len() as i32;
    let nf = n as f64;
    let single: f64 = points
        .iter()
        .map(|p| p.iter().map(|&x| (1.0 - x * x) / 2.0).product::<f64>())
        .sum();
    let mut double = 0.0;
    for p in points {
        for q in points {
            double += p
                .iter()
                .zip(q)
                .map(|(&x, &y)| 1.0 - x.max(y))
                .product::<f64>();
        }
    }
    let sq = 3f64.powi(-s) - 2.0 / nf * single + double / (nf * nf);
    sq.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_counts(ps: &PointSet, i: usize, j: usize, bits_i: u32, bits_j: u32) -> Vec<usize> {
        let mut counts = vec![0; 1 << (bits_i + bits_j)];
        for m in 0..ps.count() {
            let d = ps.digits(m);
            let bi = if bits_i == 0 { 0 } else { d[i] >> (64 - bits_i) };
            let bj = if bits_j == 0 { 0 } else { d[j] >> (64 - bits_j) };
            counts[((bi << bits_j) | bj) as usize] += 1;
        }
        counts
    }

    #[test]
    fn first_point_is_origin() {
        let ps = generate_base(1, 1).unwrap();
        assert_eq!(ps.point(0), &[0.0]);
    }

    #[test]
    fn natural_order_one_dimension() {
        let ps = generate_base(1, 4).unwrap();
        let xs: Vec<f64> = ps.rows().map(|r| r[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 0.25, 0.75]);
    }

    #[test]
    fn two_dimensional_nets() {
        for &k in &[2u32, 4, 6] {
            let ps = generate_base(2, 1 << k).unwrap();
            for bi in 0..=k {
                let counts = box_counts(&ps, 0, 1, bi, k - bi);
                assert!(counts.iter().all(|&c| c == 1), "k={k} bi={bi}");
            }
        }
    }

    #[test]
    fn dimension_limits() {
        assert!(generate_base(64, 4).is_ok());
        assert!(matches!(
            generate_base(65, 4),
            Err(Error::UnsupportedDimension { requested: 65, .. })
        ));
        assert!(generate_base(0, 4).is_err());
        assert!(generate_base(3, 0).is_err());
    }

    #[test]
    fn zero_shift_is_identity_and_half_shift_moves_origin() {
        let base = generate_base(3, 8).unwrap();
        let same = digital_shift(&base, &[0, 0, 0]).unwrap();
        assert_eq!(same.rows().collect::<Vec<_>>(), base.rows().collect::<Vec<_>>());
        let one = generate_base(1, 1).unwrap();
        let shifted = digital_shift(&one, &[1u64 << 63]).unwrap();
        assert_eq!(shifted.point(0), &[0.5]);
    }

    #[test]
    fn randomization_is_seed_deterministic() {
        let base = generate_base(5, 32).unwrap();
        for scheme in [Randomization::DigitalShift, Randomization::OwenScramble] {
            let a = randomize(&base, scheme, 11).unwrap();
            let b = randomize(&base, scheme, 11).unwrap();
            let c = randomize(&base, scheme, 12).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.points, c.points);
            assert!(a.points.iter().all(|&x| (0.0..1.0).contains(&x)));
        }
    }

    #[test]
    fn randomizing_twice_is_rejected() {
        let base = generate_base(2, 4).unwrap();
        let r = randomize(&base, Randomization::DigitalShift, 1).unwrap();
        assert!(randomize(&r, Randomization::DigitalShift, 2).is_err());
    }

    #[test]
    fn owen_scramble_keeps_net_property() {
        let base = generate_base(2, 16).unwrap();
        let ps = randomize(&base, Randomization::OwenScramble, 99).unwrap();
        for bi in 0..=4 {
            assert!(box_counts(&ps, 0, 1, bi, 4 - bi).iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn single_point_report_is_flagged() {
        let ps = generate_base(2, 1).unwrap();
        let report = low_dimension_projection_quality(&ps);
        assert!(report.insufficient_points);
    }

    #[test]
    fn parse_scheme() {
        assert_eq!("owen-scramble".parse::<Randomization>().unwrap(), Randomization::OwenScramble);
        assert!("sobol".parse::<Randomization>().is_err());
    }
}
