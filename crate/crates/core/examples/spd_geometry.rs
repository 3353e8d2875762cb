//! Distances, geodesics and means on the SPD manifold.
//!
//! ```text
//! cargo run --example spd_geometry
//! ```

use nalgebra::DVector;
use spdmil::spd::{
    dist_affine_invariant, dist_log_euclidean, geodesic_log_euclidean, geometric_mean, regularize_spd, Mat, SymMatrix,
};
use spdmil::synth::{random_orthogonal, random_spd, stream_rng};
use spdmil::{Metric, SpdMatrix};

fn main() -> spdmil::Result<()> {
    let mut rng = stream_rng(7, 0);
    let a = random_spd(&mut rng, 4, 50.0);
    let b = random_spd(&mut rng, 4, 50.0);

    println!("d_LE(a, b) = {:.6}", dist_log_euclidean(&a, &b)?);
    println!("d_AI(a, b) = {:.6}", dist_affine_invariant(&a, &b)?);

    // The affine-invariant distance ignores any change of basis; the log-Euclidean one
    // only rotations and uniform scaling.
    let w = random_orthogonal(&mut rng, 4) * Mat::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
    let (wa, wb) = (a.congruence(&w)?, b.congruence(&w)?);
    println!("d_AI(WaWᵀ, WbWᵀ) = {:.6}", dist_affine_invariant(&wa, &wb)?);
    println!("d_LE(WaWᵀ, WbWᵀ) = {:.6}", dist_log_euclidean(&wa, &wb)?);

    let mid = geodesic_log_euclidean(&a, &b, 0.5)?;
    println!(
        "midpoint is equidistant: {:.6} vs {:.6}",
        dist_log_euclidean(&a, &mid)?,
        dist_log_euclidean(&mid, &b)?
    );

    let cloud: Vec<SpdMatrix> = (0..12).map(|_| random_spd(&mut rng, 4, 20.0)).collect();
    for metric in [Metric::LogEuclidean, Metric::AffineInvariant] {
        let m = geometric_mean(&cloud, metric)?;
        println!("{metric} mean: trace {:.4}, condition {:.2}", m.trace(), m.condition_number());
    }

    // A rank-deficient estimate is shifted back into the cone.
    let singular = SymMatrix::from_diagonal(&[1.0, 0.5, 0.0, 0.0]);
    let fixed = regularize_spd(&singular, 1e-6)?;
    println!("regularized eigenvalues: {:?}", fixed.eigen().values.as_slice());
    Ok(())
}
