//! Synthetic embeddings with planted target and noise factors:
//! `I = R_t T_t + R_n T_n + residual`, with a controlled coupling between the
//! two subspaces and known class labels for both factors.
//!
//! Everything is a pure function of the seed. Per-sample randomness comes
//! from counter-indexed ChaCha streams, so generation order (and thread
//! count) never changes the output.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::aobo::OrthogonalBasis;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, matmul, spectral_norm, Matrix};
use crate::nsdp::SubspaceConfig;
use crate::par::Execution;

/// Mixes a seed with a tag so independent consumers get unrelated streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `rows` orthonormal random vectors in `R^dim` (Gaussian + Gram-Schmidt).
pub fn random_orthonormal(rows: usize, dim: usize, rng: &mut impl Rng) -> Result<Matrix> {
    if rows == 0 || rows > dim {
        return invalid(format!("cannot draw {rows} orthonormal vectors in dimension {dim}"));
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while out.len() < rows {
        let mut v = gaussian_vec(rng, dim);
        for _ in 0..2 {
            for b in &out {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            out.push(v);
        }
    }
    Matrix::from_rows(&out)
}

/// Target basis on `k_t` coordinates and noise basis on the next `p`, with
/// the first noise row tilted toward the first target row
/// (`n₁ ← eps·t₁ + √(1−eps²)·n₁`) so the single non-zero principal cosine is
/// exactly `eps`. The seed picks a signed permutation of coordinates, which
/// keeps every entry exact.
pub fn coupled_bases(d: usize, k_t: usize, p: usize, eps: f64, seed: u64) -> Result<SubspaceConfig> {
    if k_t == 0 || p == 0 {
        return invalid("target and noise dimensions must be positive");
    }
    if k_t + p > d {
        return invalid(format!("k_t + p = {} exceeds d = {d}", k_t + p));
    }
    if !(0.0..1.0).contains(&eps) {
        return invalid(format!("coupling {eps} outside [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xB45E));
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut rng);
    let signs: Vec<f64> = (0..d)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let place = |v: &[f64]| {
        let mut out = vec![0.0; d];
        for (i, &x) in v.iter().enumerate() {
            out[perm[i]] = signs[i] * x;
        }
        out
    };
    let axis = |i: usize| {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    };

    let target: Vec<Vec<f64>> = (0..k_t).map(|i| place(&axis(i))).collect();
    let mut noise: Vec<Vec<f64>> = (0..p).map(|j| place(&axis(k_t + j))).collect();
    let mut tilted = vec![0.0; d];
    tilted[0] = eps;
    tilted[k_t] = (1.0 - eps * eps).sqrt();
    noise[0] = place(&tilted);

    let target = OrthogonalBasis::new(Matrix::from_rows(&target)?, vec![1.0; k_t], k_t)?;
    let noise = OrthogonalBasis::new(Matrix::from_rows(&noise)?, vec![1.0; p], p)?;
    let cross = crate::linalg::matmul_nt(target.vectors(), noise.vectors())?;
    let got = spectral_norm(&cross)?;
    if (got - eps).abs() > 1e-9 {
        return Err(Error::Numeric(format!("planted coupling {eps} realized as {got}")));
    }
    SubspaceConfig::new(target, noise)
}

/// Parameters of the redundant "text" matrices accompanying a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextSpec {
    pub n_texts: usize,
    pub redundancy_noise: f64,
    pub ambiguity_leak: f64,
}

impl Default for TextSpec {
    fn default() -> Self {
        TextSpec {
            n_texts: 50,
            redundancy_noise: 0.05,
            ambiguity_leak: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub k_t: usize,
    pub p: usize,
    pub classes_target: usize,
    pub classes_noise: usize,
    pub samples: usize,
    pub coupling_eps: f64,
    pub residual_sigma: f64,
    pub class_separation: f64,
    pub seed: u64,
    #[serde(default)]
    pub text: TextSpec,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k_t == 0 || self.p == 0 || self.k_t + self.p > self.d {
            return invalid(format!(
                "need 1 <= k_t, 1 <= p and k_t + p <= d (got k_t={}, p={}, d={})",
                self.k_t, self.p, self.d
            ));
        }
        if !(0.0..1.0).contains(&self.coupling_eps) {
            return invalid(format!("coupling_eps {} outside [0, 1)", self.coupling_eps));
        }
        if !(self.residual_sigma >= 0.0 && self.residual_sigma.is_finite()) {
            return invalid("residual_sigma must be finite and non-negative");
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return invalid("class_separation must be finite and non-negative");
        }
        if self.classes_target < 2 || self.classes_noise < 2 {
            return invalid("each factor needs at least 2 classes");
        }
        if self.classes_target > self.k_t || self.classes_noise > self.p {
            return invalid(format!(
                "class centroids need one direction each: {} target classes in {} dims, {} noise classes in {} dims",
                self.classes_target, self.k_t, self.classes_noise, self.p
            ));
        }
        if self.samples < self.classes_target.max(self.classes_noise) {
            return invalid("fewer samples than classes");
        }
        if self.text.n_texts < self.k_t.max(self.p) {
            return invalid("n_texts must be at least the basis size");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub embeddings: Matrix,
    pub true_r_t: Matrix,
    pub true_r_n: Matrix,
    pub residual: Matrix,
    pub target_labels: Vec<usize>,
    pub noise_labels: Vec<usize>,
    pub bases: SubspaceConfig,
    pub raw_target_text: Matrix,
    pub raw_noise_text: Matrix,
}

impl SyntheticDataset {
    /// `true_R_t T_t + true_R_n T_n + residual`.
    pub fn reconstruct(&self) -> Result<Matrix> {
        let t = matmul(&self.true_r_t, self.bases.target.vectors())?;
        let n = matmul(&self.true_r_n, self.bases.noise.vectors())?;
        t.add(&n)?.add(&self.residual)
    }
}

/// Class centroids `sep/√2 · (q_c − mean q)` from random orthonormal `q_c`,
/// so every pair of centroids is exactly `sep` apart.
fn centroids(classes: usize, dim: usize, sep: f64, rng: &mut impl Rng) -> Result<Matrix> {
    let q = random_orthonormal(classes, dim, rng)?;
    let mut mean = vec![0.0; dim];
    for row in q.row_iter() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / classes as f64);
    }
    let scale = sep / 2f64.sqrt();
    let rows: Vec<Vec<f64>> = q
        .row_iter()
        .map(|row| row.iter().zip(&mean).map(|(v, m)| scale * (v - m)).collect())
        .collect();
    Matrix::from_rows(&rows)
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let seed = spec.seed;
    let bases = coupled_bases(spec.d, spec.k_t, spec.p, spec.coupling_eps, seed)?;

    let mut crng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let target_centroids = centroids(spec.classes_target, spec.k_t, spec.class_separation, &mut crng)?;
    let noise_centroids = centroids(spec.classes_noise, spec.p, spec.class_separation, &mut crng)?;

    let m = spec.samples;
    let target_labels: Vec<usize> = (0..m).map(|i| i % spec.classes_target).collect();
    // Noise classes are balanced but independent of the target classes.
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 2)));
    let mut noise_labels = vec![0; m];
    for (pos, &i) in order.iter().enumerate() {
        noise_labels[i] = pos % spec.classes_noise;
    }

    // Jitter has unit expected squared norm in each factor.
    let (jt, jn) = (1.0 / (spec.k_t as f64).sqrt(), 1.0 / (spec.p as f64).sqrt());
    let sample_seed = derive_seed(seed, 3);
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Execution::default().map(m, |i| {
        let mut rng = stream(sample_seed, i as u64);
        let mut rt = gaussian_vec(&mut rng, spec.k_t);
        rt.iter_mut()
            .zip(target_centroids.row(target_labels[i]))
            .for_each(|(v, c)| *v = *v * jt + c);
        let mut rn = gaussian_vec(&mut rng, spec.p);
        rn.iter_mut()
            .zip(noise_centroids.row(noise_labels[i]))
            .for_each(|(v, c)| *v = *v * jn + c);
        let res: Vec<f64> = gaussian_vec(&mut rng, spec.d)
            .into_iter()
            .map(|v| v * spec.residual_sigma)
            .collect();
        (rt, rn, res)
    });

    let flat = |f: fn(&(Vec<f64>, Vec<f64>, Vec<f64>)) -> &Vec<f64>, cols: usize| {
        Matrix::from_parts(m, cols, rows.iter().flat_map(|r| f(r).iter().copied()).collect())
    };
    let true_r_t = flat(|r| &r.0, spec.k_t);
    let true_r_n = flat(|r| &r.1, spec.p);
    let residual = flat(|r| &r.2, spec.d);

    let embeddings = matmul(&true_r_t, bases.target.vectors())?
        .add(&matmul(&true_r_n, bases.noise.vectors())?)?
        .add(&residual)?;

    let t = spec.text;
    let raw_target_text = redundant_text_matrix(
        &bases.target,
        t.n_texts,
        t.redundancy_noise,
        t.ambiguity_leak,
        &bases.noise,
        derive_seed(seed, 4),
    )?;
    let raw_noise_text = redundant_text_matrix(
        &bases.noise,
        t.n_texts,
        t.redundancy_noise,
        t.ambiguity_leak,
        &bases.target,
        derive_seed(seed, 5),
    )?;

    Ok(SyntheticDataset {
        spec: spec.clone(),
        embeddings,
        true_r_t,
        true_r_n,
        residual,
        target_labels,
        noise_labels,
        bases,
        raw_target_text,
        raw_noise_text,
    })
}

/// Text-like rows for a criterion: each row is a random unit combination of
/// `basis` rows, plus `redundancy_noise` times an isotropic Gaussian with unit
/// expected norm, plus `ambiguity_leak` times a random row of `other`, then
/// L2-normalized.
pub fn redundant_text_matrix(
    basis: &OrthogonalBasis,
    n_texts: usize,
    redundancy_noise: f64,
    ambiguity_leak: f64,
    other: &OrthogonalBasis,
    seed: u64,
) -> Result<Matrix> {
    if n_texts < basis.k() {
        return invalid(format!(
            "n_texts = {n_texts} is smaller than the basis size {}",
            basis.k()
        ));
    }
    if basis.dim() != other.dim() {
        return Err(Error::Shape("basis and other basis differ in dimension".into()));
    }
    let d = basis.dim();
    let noise_scale = redundancy_noise / (d as f64).sqrt();
    let rows: Vec<Vec<f64>> = Execution::default().map(n_texts, |i| {
        let mut rng = stream(seed, i as u64);
        let mut coef = gaussian_vec(&mut rng, basis.k());
        let cn = dot(&coef, &coef).sqrt().max(f64::MIN_POSITIVE);
        coef.iter_mut().for_each(|c| *c /= cn);
        let mut v = vec![0.0; d];
        for (c, b) in coef.iter().zip(basis.vectors().row_iter()) {
            v.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
        }
        for x in v.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *x += noise_scale * g;
        }
        let j = rng.random_range(0..other.k());
        v.iter_mut()
            .zip(other.vectors().row(j))
            .for_each(|(x, y)| *x += ambiguity_leak * y);
        let n = dot(&v, &v).sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    });
    Matrix::from_rows(&rows)
}

/// A matrix with `k` strong singular directions and weak noise directions.
#[derive(Debug, Clone)]
pub struct PlantedRank {
    pub matrix: Matrix,
    /// `k × d` orthonormal basis of the strong right singular subspace.
    pub basis: Matrix,
    pub singular_values: Vec<f64>,
}

/// `n × d` matrix `U diag(σ) Vᵀ` with random orthonormal `U`, `V`. The first
/// `k` singular values are drawn from `[1, 2]`; the remaining
/// `min(n, d) − k` from `[0, 1/ratio]`, so the weakest signal direction is at
/// least `ratio` times the strongest noise direction.
pub fn planted_rank_matrix(n: usize, d: usize, k: usize, ratio: f64, seed: u64) -> Result<PlantedRank> {
    let r = n.min(d);
    if k == 0 || k > r {
        return invalid(format!("planted rank {k} must be in 1..={r}"));
    }
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return invalid("signal/noise ratio must be finite and >= 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5EED));
    let u = random_orthonormal(r, n, &mut rng)?;
    let v = random_orthonormal(r, d, &mut rng)?;
    let mut sv: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..2.0)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let mut tail: Vec<f64> = (k..r).map(|_| rng.random_range(0.0..1.0 / ratio)).collect();
    tail.sort_by(|a, b| b.total_cmp(a));
    sv.extend(tail);

    let mut data = vec![0.0; n * d];
    for (j, &s) in sv.iter().enumerate() {
        for i in 0..n {
            let c = u.get(j, i) * s;
            for (o, &vv) in data[i * d..(i + 1) * d].iter_mut().zip(v.row(j)) {
                *o += c * vv;
            }
        }
    }
    Ok(PlantedRank {
        matrix: Matrix::new(n, d, data)?,
        basis: v.row_block(0, k)?,
        singular_values: sv,
    })
}
