//! Set kernels between bags of covariance matrices.
//!
//! Bags are built directly from concept covariances: positive bags hold one
//! instance of the positive concept among distractors, negative bags only
//! distractors. The decomposition shows where the similarity comes from.
//!
//! ```text
//! cargo run --example set_kernel
//! ```

use rand::Rng;
use spdmil::kernel::{gram_matrix, kernel_decomposition, mi_kernel};
use spdmil::signal::{segment_covariance, DEFAULT_COV_EPS};
use spdmil::synth::{generate_concepts, sample_gaussian, stream_rng, ConceptGeometry};
use spdmil::{Bag, Concept, KernelConfig, KernelKind, Label, Recording, Segment, SpdMatrix};

fn estimate(cov: &SpdMatrix, rng: &mut impl Rng) -> spdmil::Result<SpdMatrix> {
    let samples = sample_gaussian(cov, 256, rng)?;
    let names = (0..samples.len()).map(|i| format!("ch{i}")).collect();
    let rec = Recording::new("tmp", Label::Negative, 128.0, names, samples)?;
    Ok(segment_covariance(&rec, &Segment::new(0, 256), false, DEFAULT_COV_EPS)?.matrix)
}

fn main() -> spdmil::Result<()> {
    let (pos, dis) = generate_concepts(6, &ConceptGeometry::default(), 5)?;
    let mut rng = stream_rng(5, 1);
    let mut bags = Vec::new();
    for k in 0..6 {
        let label = if k < 3 { Label::Positive } else { Label::Negative };
        let mut instances = Vec::new();
        let mut tags = Vec::new();
        for slot in 0..4 {
            if label == Label::Positive && slot == 0 {
                instances.push(estimate(&pos[0], &mut rng)?);
                tags.push(Concept::Positive);
            } else {
                let c = &dis[rng.random_range(0..dis.len())];
                instances.push(estimate(c, &mut rng)?);
                tags.push(Concept::Negative);
            }
        }
        bags.push(Bag::new(format!("b{k}"), label, instances)?.with_hidden_labels(tags)?);
    }

    let cfg = KernelConfig::new(KernelKind::AiGaussian, 10.0);
    println!("K(b0, b1) = {:.4}  (both positive)", mi_kernel(&bags[0], &bags[1], &cfg)?);
    println!("K(b0, b3) = {:.4}  (positive vs negative)", mi_kernel(&bags[0], &bags[3], &cfg)?);
    let parts = kernel_decomposition(&bags[0], &bags[1], &cfg)?;
    println!(
        "split of K(b0, b1): pos-pos {:.4}, mixed {:.4}, neg-neg {:.4}",
        parts.positive_positive, parts.mixed, parts.negative_negative
    );

    for kind in [KernelKind::LeGaussian, KernelKind::AiGaussian, KernelKind::Isometric] {
        let gram = gram_matrix(&bags, &KernelConfig::new(kind, 10.0))?;
        let spec = gram.diagnostics;
        println!("{kind:?}: min eig {:.3e}, max eig {:.3e}", spec.min_eigenvalue, spec.max_eigenvalue);
    }
    Ok(())
}
