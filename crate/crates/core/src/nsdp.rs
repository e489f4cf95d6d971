//! Null-space denoising: project embeddings onto the orthogonal complement of
//! the non-target (noise) subspace, then read off coordinates in the target
//! basis.

use serde::Serialize;

use crate::aobo::{optimize_basis, BasisOptions, OrthogonalBasis, TruncationReport};
use crate::error::{invalid, shape_err, Error, Result};
use crate::linalg::{matmul, matmul_nt, numerical_rank, svd, Matrix};
use crate::theory::BenefitCostReport;

/// Target and noise bases over a shared embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceConfig {
    pub target: OrthogonalBasis,
    pub noise: OrthogonalBasis,
}

impl SubspaceConfig {
    pub fn new(target: OrthogonalBasis, noise: OrthogonalBasis) -> Result<Self> {
        if target.dim() != noise.dim() {
            return shape_err(format!(
                "target dimension {} differs from noise dimension {}",
                target.dim(),
                noise.dim()
            ));
        }
        Ok(SubspaceConfig { target, noise })
    }
}

/// Orthonormal rows spanning the complement of the noise subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct NullBasis {
    vectors: Matrix,
    noise_rank: usize,
}

impl NullBasis {
    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn noise_rank(&self) -> usize {
        self.noise_rank
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }
}

/// Orthonormal basis for the sum of the input subspaces.
pub fn merge_noise_bases(bases: &[OrthogonalBasis]) -> Result<OrthogonalBasis> {
    let Some(first) = bases.first() else {
        return invalid("no noise bases to merge");
    };
    if let Some(b) = bases.iter().find(|b| b.dim() != first.dim()) {
        return shape_err(format!(
            "noise bases disagree on dimension: {} vs {}",
            first.dim(),
            b.dim()
        ));
    }
    let stacked = Matrix::vstack(&bases.iter().map(|b| b.vectors()).collect::<Vec<_>>())?;
    let dec = svd(&stacked)?;
    let rank = numerical_rank(&dec.singular_values, stacked.rows(), stacked.cols()).max(1);
    OrthogonalBasis::new(
        dec.right_t.row_block(0, rank)?,
        dec.singular_values[..rank].to_vec(),
        rank,
    )
}

/// Trailing `d − r` right singular vectors of the noise basis.
pub fn null_space_basis(noise: &OrthogonalBasis) -> Result<NullBasis> {
    let d = noise.dim();
    let dec = svd(noise.vectors())?;
    let r = numerical_rank(&dec.singular_values, noise.k(), d);
    if r >= d {
        return Err(Error::EmptyNullSpace { rank: r, dim: d });
    }
    Ok(NullBasis {
        vectors: dec.right_t.row_block(r, d)?,
        noise_rank: r,
    })
}

/// `Ĩ = I T_nullᵀ T_null`. The rows of `T_null` are orthonormal, so the
/// general projector's inverse Gram factor is the identity and is omitted.
pub fn denoise(embeddings: &Matrix, null: &NullBasis) -> Result<Matrix> {
    if embeddings.cols() != null.dim() {
        return shape_err(format!(
            "embeddings have dimension {}, null basis has {}",
            embeddings.cols(),
            null.dim()
        ));
    }
    let coords = matmul_nt(embeddings, &null.vectors)?;
    matmul(&coords, &null.vectors)
}

/// `R_t = Ĩ T_tᵀ`: coordinates along each target basis vector.
pub fn extract_conditional(denoised: &Matrix, target: &OrthogonalBasis) -> Result<Matrix> {
    if denoised.cols() != target.dim() {
        return shape_err(format!(
            "embeddings have dimension {}, target basis has {}",
            denoised.cols(),
            target.dim()
        ));
    }
    matmul_nt(denoised, target.vectors())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineOptions {
    pub target: BasisOptions,
    pub noise: BasisOptions,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// `m × k*` conditional representations.
    pub conditional: Matrix,
    pub target_basis: OrthogonalBasis,
    pub target_report: TruncationReport,
    pub noise_reports: Vec<TruncationReport>,
    /// Merged noise basis; `None` when no noise texts were given.
    pub noise_basis: Option<OrthogonalBasis>,
    /// Benefit/cost terms for the realized bases, with `R_t ≈ I T_tᵀ` and
    /// `R_n ≈ I T_nᵀ`.
    pub benefit_cost: Option<BenefitCostReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary<'a> {
    pub target: &'a TruncationReport,
    pub noise: &'a [TruncationReport],
    pub benefit_cost: Option<&'a BenefitCostReport>,
}

impl PipelineOutput {
    pub fn summary(&self) -> PipelineSummary<'_> {
        PipelineSummary {
            target: &self.target_report,
            noise: &self.noise_reports,
            benefit_cost: self.benefit_cost.as_ref(),
        }
    }
}

/// End to end: optimize the target and noise text bases, merge the noise
/// bases, denoise the embeddings and extract target coordinates. With no
/// noise texts this is plain projection onto the optimized target basis.
pub fn pipeline(
    embeddings: &Matrix,
    raw_target_text: &Matrix,
    raw_noise_texts: &[Matrix],
    opts: &PipelineOptions,
) -> Result<PipelineOutput> {
    let d = embeddings.cols();
    for (what, m) in std::iter::once(("target text", raw_target_text))
        .chain(raw_noise_texts.iter().map(|m| ("noise text", m)))
    {
        if m.cols() != d {
            return shape_err(format!("{what} has dimension {}, embeddings have {d}", m.cols()));
        }
    }
    let (target_basis, target_report) = optimize_basis(raw_target_text, &opts.target)?;

    if raw_noise_texts.is_empty() {
        let conditional = extract_conditional(embeddings, &target_basis)?;
        return Ok(PipelineOutput {
            conditional,
            target_basis,
            target_report,
            noise_reports: Vec::new(),
            noise_basis: None,
            benefit_cost: None,
        });
    }

    let mut noise_bases = Vec::with_capacity(raw_noise_texts.len());
    let mut noise_reports = Vec::with_capacity(raw_noise_texts.len());
    for text in raw_noise_texts {
        let (b, r) = optimize_basis(text, &opts.noise)?;
        noise_bases.push(b);
        noise_reports.push(r);
    }
    let noise = merge_noise_bases(&noise_bases)?;
    let null = null_space_basis(&noise)?;
    let denoised = denoise(embeddings, &null)?;
    let conditional = extract_conditional(&denoised, &target_basis)?;

    let r_t = matmul_nt(embeddings, target_basis.vectors())?;
    let r_n = matmul_nt(embeddings, noise.vectors())?;
    let benefit_cost = BenefitCostReport::evaluate(&r_t, &r_n, &target_basis, &noise)?;

    Ok(PipelineOutput {
        conditional,
        target_basis,
        target_report,
        noise_reports,
        noise_basis: Some(noise),
        benefit_cost: Some(benefit_cost),
    })
}
