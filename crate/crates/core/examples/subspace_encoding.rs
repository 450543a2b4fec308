//! The encoding step by step for n = 5: a basis S, coefficients b, the main
//! direction a1 = sum_i b_i s_i, its null-space basis, and a decoded layer.
//!
//! cargo run --example subspace_encoding

use evonet::genome::decode;
use evonet::subspace::{combine, null_space_basis};
use evonet::{BasisSet, Chromosome};
use ndarray::{arr1, arr2, Array2};

fn main() -> evonet::Result<()> {
    // Columns are s_1..s_5.
    let s = arr2(&[
        [-0.4861, -0.6498, 0.2718, 0.1572, 0.4927],
        [-0.4617, -0.2830, -0.1205, -0.6073, -0.5686],
        [-0.4438, 0.3468, 0.5339, 0.4669, -0.4240],
        [-0.4721, 0.6142, -0.0597, -0.3831, 0.4995],
        [-0.3614, 0.0075, -0.7893, 0.4916, -0.0681],
    ]);
    let b = arr1(&[0.7303, 0.4886, 0.5785, 0.2373, 0.4588]);
    let basis = BasisSet::from_rows(s.t().to_owned())?;

    let gram = basis.as_matrix().dot(&basis.as_matrix().t());
    let off = (&gram - &Array2::<f64>::eye(5)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("max |S^T S - I| = {off:.2e} (entries are printed to 4 places)");

    let a1 = combine(&basis, b.view())?;
    println!("a1 = {a1:.4}");

    let ns = null_space_basis(a1.view())?;
    for (j, row) in ns.as_matrix().rows().into_iter().enumerate() {
        println!("a{} = {row:.4}   a1.a{} = {:+.1e}", j + 2, j + 2, row.dot(&a1));
    }

    let chrom = Chromosome {
        coeffs: b.to_vec(),
        mask: vec![true, false, false, true],
        act: 1,
    };
    println!("chromosome {}", serde_json::to_string(&chrom)?);
    let layer = decode(&chrom, &basis)?;
    println!("decoded layer: {} units x {} inputs, {}", layer.units(), layer.input_dim(), layer.activation.name());
    Ok(())
}
