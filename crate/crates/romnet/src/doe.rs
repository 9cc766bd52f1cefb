//! Design-of-experiments generators on the unit hypercube and the
//! transformation to thermal-loading coordinates.
//!
//! Two designs are used: a Sobol' sequence (Gray-code construction with
//! published direction numbers, dimensions up to 21) and a Maximum
//! Projection Latin hypercube optimized by simulated annealing over
//! within-column swaps.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    Sobol,
    MaxProjLhs,
    Random,
}

/// A set of points in the unit hypercube.
#[derive(Clone, Debug)]
pub struct Design {
    pub points: Vec<Vec<f64>>,
    pub kind: DesignKind,
    pub seed: u64,
}

impl Design {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }
}

/// Joe-Kuo direction-number table (new-joe-kuo-6) for dimensions 2..=21:
/// (degree s, polynomial coefficients a, initial m values).
const DIRECTIONS: [(u32, u32, &[u32]); 20] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
];

pub const SOBOL_MAX_DIM: usize = DIRECTIONS.len() + 1;

const SOBOL_BITS: u32 = 32;

fn direction_vectors(dim_index: usize) -> Vec<u32> {
    let mut v = vec![0u32; SOBOL_BITS as usize];
    if dim_index == 0 {
        for (j, vj) in v.iter_mut().enumerate() {
            *vj = 1 << (31 - j as u32);
        }
        return v;
    }
    let (s, a, m) = DIRECTIONS[dim_index - 1];
    let s = s as usize;
    for j in 0..SOBOL_BITS as usize {
        if j < s {
            v[j] = m[j] << (31 - j as u32);
        } else {
            let mut value = v[j - s] ^ (v[j - s] >> s);
            for k in 1..s {
                if (a >> (s - 1 - k)) & 1 == 1 {
                    value ^= v[j - k];
                }
            }
            v[j] = value;
        }
    }
    v
}

/// Sobol' sequence in `d` dimensions (Gray-code order), dropping the first
/// `skip` points. The default skip of 1 removes the all-zeros point, whose
/// image under the loading transformation is unbounded.
pub fn sobol(n: usize, d: usize, skip: usize) -> Result<Design> {
    if d == 0 || d > SOBOL_MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "sobol dimension {d} outside 1..={SOBOL_MAX_DIM} (direction-number table bound)"
        )));
    }
    let vectors: Vec<Vec<u32>> = (0..d).map(direction_vectors).collect();
    let mut state = vec![0u32; d];
    let mut points = Vec::with_capacity(n);
    let denom = (1u64 << SOBOL_BITS) as f64;
    if skip == 0 {
        // The sequence starts at the all-zeros point x_0.
        points.push(vec![0.0; d]);
    }
    for index in 1..(skip + n) {
        let bit = index.trailing_zeros() as usize;
        for (k, s) in state.iter_mut().enumerate() {
            *s ^= vectors[k][bit];
        }
        if index >= skip {
            points.push(state.iter().map(|&x| x as f64 / denom).collect());
        }
    }
    Ok(Design {
        points,
        kind: DesignKind::Sobol,
        seed: 0,
    })
}

/// Uniform random design (baseline for discrepancy comparisons).
pub fn random_design(n: usize, d: usize, seed: u64) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    Design {
        points,
        kind: DesignKind::Random,
        seed,
    }
}

/// Maximum-projection criterion `ψ(D) = Σ_{i<j} Π_k (x_ik − x_jk)^{-2}`
/// (to be minimized).
pub fn maxproj_criterion(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut prod = 1.0;
            for (a, b) in points[i].iter().zip(&points[j]) {
                let diff = a - b;
                prod *= diff * diff;
            }
            acc += 1.0 / prod;
        }
    }
    acc
}

/// Change of ψ caused by swapping rows `r1`, `r2` in column `c`.
fn swap_delta(points: &[Vec<f64>], c: usize, r1: usize, r2: usize) -> f64 {
    let n = points.len();
    let mut delta = 0.0;
    for j in 0..n {
        if j == r1 || j == r2 {
            continue; // the (r1, r2) pair term is invariant under the swap
        }
        for (row, other) in [(r1, r2), (r2, r1)] {
            let mut old_prod = 1.0;
            let mut new_prod = 1.0;
            for k in 0..points[row].len() {
                let d_old = points[row][k] - points[j][k];
                let d_new = if k == c {
                    points[other][k] - points[j][k]
                } else {
                    d_old
                };
                old_prod *= d_old * d_old;
                new_prod *= d_new * d_new;
            }
            delta += 1.0 / new_prod - 1.0 / old_prod;
        }
    }
    delta
}

/// Centered Latin hypercube optimized by simulated annealing over
/// within-column swaps against the maximum-projection criterion. Returns
/// the best design encountered.
pub fn maxproj_lhs(n: usize, d: usize, seed: u64, iterations: usize) -> Result<Design> {
    if n < 2 {
        return Err(Error::InvalidInput("maxproj_lhs needs n >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strata: Vec<f64> = (0..n).map(|i| (2 * i + 1) as f64 / (2 * n) as f64).collect();
    let mut points = vec![vec![0.0; d]; n];
    for c in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        // Fisher-Yates with the seeded generator.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        for (row, &p) in perm.iter().enumerate() {
            points[row][c] = strata[p];
        }
    }

    let mut psi = maxproj_criterion(&points);
    let mut best = points.clone();
    let mut best_psi = psi;

    // Temperature scale from probe swaps.
    let mut probe = Vec::new();
    for _ in 0..32 {
        let c = rng.gen_range(0..d);
        let r1 = rng.gen_range(0..n);
        let mut r2 = rng.gen_range(0..n);
        if r1 == r2 {
            r2 = (r2 + 1) % n;
        }
        probe.push(swap_delta(&points, c, r1, r2).abs());
    }
    probe.sort_by(f64::total_cmp);
    let t0 = probe[probe.len() / 2].max(psi * 1e-6).max(f64::MIN_POSITIVE);
    let t_end = t0 * 1e-6;
    let cooling = if iterations > 1 {
        (t_end / t0).powf(1.0 / (iterations as f64 - 1.0))
    } else {
        1.0
    };

    let mut temperature = t0;
    for _ in 0..iterations {
        let c = rng.gen_range(0..d);
        let r1 = rng.gen_range(0..n);
        let mut r2 = rng.gen_range(0..n);
        if r1 == r2 {
            r2 = (r2 + 1) % n;
        }
        let delta = swap_delta(&points, c, r1, r2);
        let accept = delta < 0.0 || rng.gen_range(0.0..1.0) < (-delta / temperature).exp();
        if accept {
            let tmp = points[r1][c];
            points[r1][c] = points[r2][c];
            points[r2][c] = tmp;
            psi += delta;
            if psi < best_psi {
                best_psi = psi;
                best = points.clone();
            }
        }
        temperature *= cooling;
    }

    Ok(Design {
        points: best,
        kind: DesignKind::MaxProjLhs,
        seed,
    })
}

/// Inverse of the standard normal distribution function (Wichura's AS 241,
/// rational approximations accurate well beyond 1e-9).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must be in (0, 1)");
    fn horner(coeffs: &[f64], r: f64) -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c)
    }
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_3e3,
        1.373_169_376_550_946e4,
        4.592_195_393_154_987e4,
        6.726_577_092_700_87e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_7e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_545_5e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_048_7e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_88e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-6,
        1.421_511_758_316_446e-9,
        2.044_263_103_389_939_8e-15,
    ];

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        horner(&C, r) / horner(&D, r)
    } else {
        let r = r - 5.0;
        horner(&E, r) / horner(&F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Standard normal distribution function via the complementary error
/// function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Loading coordinates of Υ-space: a Bernoulli indicator and four standard
/// normal coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadingCoords(pub [f64; 5]);

/// Transforms a uniform hypercube point: `Υ₀ = 1_{χ₀ > 1/2}` and
/// `Υ_i = Φ⁻¹(χ_i)`. Coordinates at exactly zero are clipped to 1e-12.
pub fn to_loading_coords(point: &[f64]) -> Result<LoadingCoords> {
    if point.len() != 5 {
        return Err(Error::InvalidInput("loading transform expects 5 coordinates".into()));
    }
    if point.iter().any(|&x| !(0.0..1.0).contains(&x)) {
        return Err(Error::InvalidInput("hypercube point outside [0, 1)".into()));
    }
    let mut out = [0.0; 5];
    out[0] = if point[0] > 0.5 { 1.0 } else { 0.0 };
    for i in 1..5 {
        let mut chi = point[i];
        if chi < 1e-12 {
            log::warn!("clipping loading coordinate χ_{i} = {chi:.3e} to 1e-12");
            chi = 1e-12;
        }
        out[i] = normal_quantile(chi);
    }
    Ok(LoadingCoords(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Independent 1-D oracle: Gray-code radical-inverse recursion.
    fn van_der_corput_gray(n: usize) -> Vec<f64> {
        let mut x = 0u32;
        let mut out = Vec::new();
        for index in 1..=n {
            x ^= 1 << (31 - index.trailing_zeros());
            out.push(x as f64 / 2f64.powi(32));
        }
        out
    }

    #[test]
    fn sobol_dim1_matches_recursion_oracle() {
        let design = sobol(16, 1, 1).unwrap();
        let oracle = van_der_corput_gray(16);
        for (p, o) in design.points.iter().zip(oracle) {
            assert_eq!(p[0], o);
        }
        assert_eq!(design.points[0][0], 0.5);
        assert_eq!(design.points[1][0], 0.75);
        assert_eq!(design.points[2][0], 0.25);
    }

    #[test]
    fn sobol_skip_zero_starts_at_origin() {
        let design = sobol(3, 2, 0).unwrap();
        assert_eq!(design.points[0], vec![0.0, 0.0]);
        assert_eq!(design.points[1], vec![0.5, 0.5]);
    }

    #[test]
    fn sobol_marginals_are_stratified() {
        let design = sobol(120, 5, 1).unwrap();
        for k in 0..5 {
            let mut bins = [0usize; 10];
            for p in &design.points {
                bins[((p[k] * 10.0) as usize).min(9)] += 1;
            }
            for (b, &count) in bins.iter().enumerate() {
                assert!(
                    (count as i64 - 12).abs() <= 2,
                    "dimension {k} bin {b} has {count} points"
                );
            }
        }
    }

    #[test]
    fn sobol_rejects_dimensions_beyond_the_table() {
        assert!(sobol(8, SOBOL_MAX_DIM, 1).is_ok());
        assert!(sobol(8, SOBOL_MAX_DIM + 1, 1).is_err());
    }

    /// Star discrepancy in two dimensions, evaluated on the corner grid of
    /// the point coordinates.
    fn star_discrepancy_2d(points: &[Vec<f64>]) -> f64 {
        let n = points.len() as f64;
        let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let mut ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        xs.push(1.0);
        ys.push(1.0);
        let mut worst = 0.0_f64;
        for &x in &xs {
            for &y in &ys {
                let strict = points.iter().filter(|p| p[0] < x && p[1] < y).count() as f64;
                let closed = points.iter().filter(|p| p[0] <= x && p[1] <= y).count() as f64;
                worst = worst.max((strict / n - x * y).abs());
                worst = worst.max((closed / n - x * y).abs());
            }
        }
        worst
    }

    #[test]
    fn sobol_beats_uniform_sampling_on_star_discrepancy() {
        let d_sobol = star_discrepancy_2d(&sobol(128, 2, 1).unwrap().points);
        let mut uniform: Vec<f64> = (0..20)
            .map(|seed| star_discrepancy_2d(&random_design(128, 2, seed).points))
            .collect();
        uniform.sort_by(f64::total_cmp);
        let median = uniform[10];
        assert!(
            d_sobol < median,
            "sobol discrepancy {d_sobol} not below uniform median {median}"
        );
    }

    #[test]
    fn lhs_two_points_are_centered_strata() {
        let design = maxproj_lhs(2, 1, 7, 50).unwrap();
        let mut column: Vec<f64> = design.points.iter().map(|p| p[0]).collect();
        column.sort_by(f64::total_cmp);
        assert_eq!(column, vec![0.25, 0.75]);
    }

    #[test]
    fn lhs_columns_hit_every_stratum_once() {
        let n = 17;
        let design = maxproj_lhs(n, 4, 3, 400).unwrap();
        for c in 0..4 {
            let mut column: Vec<f64> = design.points.iter().map(|p| p[c]).collect();
            column.sort_by(f64::total_cmp);
            for (i, v) in column.iter().enumerate() {
                assert_relative_eq!(*v, (2 * i + 1) as f64 / (2 * n) as f64, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn annealing_does_not_worsen_the_criterion() {
        let n = 20;
        let d = 5;
        let seed = 11;
        // Reconstruct the unoptimized start: zero iterations.
        let initial = maxproj_lhs(n, d, seed, 0).unwrap();
        let optimized = maxproj_lhs(n, d, seed, 4000).unwrap();
        let psi0 = maxproj_criterion(&initial.points);
        let psi1 = maxproj_criterion(&optimized.points);
        assert!(psi1 <= psi0, "criterion got worse: {psi0} -> {psi1}");
    }

    #[test]
    fn designs_are_deterministic() {
        let a = maxproj_lhs(16, 5, 42, 2000).unwrap();
        let b = maxproj_lhs(16, 5, 42, 2000).unwrap();
        assert_eq!(a.points, b.points);
        let c = random_design(16, 5, 9);
        let d = random_design(16, 5, 9);
        assert_eq!(c.points, d.points);
    }

    #[test]
    fn quantile_reference_values() {
        assert_eq!(normal_quantile(0.5), 0.0);
        assert_abs_diff_eq!(normal_quantile(0.975), 1.959964, epsilon = 1e-5);
        assert_abs_diff_eq!(normal_quantile(0.025), -1.959964, epsilon = 1e-5);
        assert_abs_diff_eq!(normal_quantile(0.8413447460685429), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn quantile_round_trip_against_erfc() {
        let mut p = 1e-6;
        while p < 1.0 - 1e-6 {
            let x = normal_quantile(p);
            assert_abs_diff_eq!(normal_cdf(x), p, epsilon = 1e-8);
            p += 0.0037;
        }
        for p in [1e-6, 1e-4, 0.999_9, 1.0 - 1e-6] {
            assert_abs_diff_eq!(normal_cdf(normal_quantile(p)), p, epsilon = 1e-8);
        }
    }

    #[test]
    fn loading_transform_cases() {
        let LoadingCoords(ups) = to_loading_coords(&[0.3, 0.5, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(ups, [0.0, 0.0, 0.0, 0.0, 0.0]);
        let LoadingCoords(ups) = to_loading_coords(&[0.7, 0.5, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(ups[0], 1.0);
        let LoadingCoords(ups) = to_loading_coords(&[0.1, 0.975, 0.5, 0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(ups[1], 1.959964, epsilon = 1e-5);
        // χ = 0 is clipped, not -inf.
        let LoadingCoords(ups) = to_loading_coords(&[0.0, 0.0, 0.5, 0.5, 0.5]).unwrap();
        assert!(ups[1].is_finite() && ups[1] < -6.0);
        assert!(to_loading_coords(&[1.0, 0.5, 0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn transformed_sample_moments() {
        let design = random_design(100_000, 5, 123);
        let mut mean = [0.0_f64; 5];
        let mut var = [0.0_f64; 5];
        let n = design.n() as f64;
        let coords: Vec<LoadingCoords> = design
            .points
            .iter()
            .map(|p| to_loading_coords(p).unwrap())
            .collect();
        for LoadingCoords(u) in &coords {
            for k in 0..5 {
                mean[k] += u[k] / n;
            }
        }
        for LoadingCoords(u) in &coords {
            for k in 0..5 {
                var[k] += (u[k] - mean[k]).powi(2) / (n - 1.0);
            }
        }
        assert_abs_diff_eq!(mean[0], 0.5, epsilon = 0.02);
        for k in 1..5 {
            assert_abs_diff_eq!(mean[k], 0.0, epsilon = 0.02);
            assert_abs_diff_eq!(var[k], 1.0, epsilon = 0.05);
        }
    }
}
