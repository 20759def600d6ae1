//! Randomized and property-based checks of the Frobenius block algebra:
//! global QR reconstruction and orthonormality, projector behaviour, and
//! the diamond-product/inner-product identities.

use parafun::matcore::{
    diamond_product, frobenius_inner, global_qr, project, BlockFamily, DenseMatrix,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_block(rng: &mut StdRng, n: usize, s: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n, s);
    for i in 0..n {
        for j in 0..s {
            m.set(i, j, rng.gen_range(-5.0..5.0));
        }
    }
    m
}

/// A block family with deliberately planted linear dependencies: exact
/// duplicates, linear combinations of earlier blocks, zero blocks, and
/// blocks scaled down to the elimination threshold.
fn deficient_family(rng: &mut StdRng) -> BlockFamily {
    let n = rng.gen_range(2..=10);
    let s = rng.gen_range(1..=4.min(n));
    let k = rng.gen_range(1..=6);
    let mut blocks: Vec<DenseMatrix> = Vec::with_capacity(k);
    for i in 0..k {
        let mode = if i == 0 { 0 } else { rng.gen_range(0..5) };
        let block = match mode {
            1 => blocks[rng.gen_range(0..i)].clone(),
            2 => {
                let a = &blocks[rng.gen_range(0..i)];
                let b = &blocks[rng.gen_range(0..i)];
                let mut c = a.scaled(rng.gen_range(-2.0..2.0));
                c.add_assign_scaled(b, rng.gen_range(-2.0..2.0));
                c
            }
            3 => DenseMatrix::zeros(n, s),
            4 => random_block(rng, n, s).scaled(1e-16),
            _ => random_block(rng, n, s),
        };
        blocks.push(block);
    }
    BlockFamily::new(blocks).unwrap()
}

fn assert_orthonormal(q: &BlockFamily, tol: f64) {
    if q.is_empty() {
        return;
    }
    let gram = diamond_product(q, q).unwrap();
    for i in 0..q.len() {
        for j in 0..q.len() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!(
                (gram.get(i, j) - expect).abs() <= tol,
                "gram({i},{j}) = {}",
                gram.get(i, j)
            );
        }
    }
}

#[test]
fn randomized_global_qr_reconstructs_and_orthonormalizes() {
    let mut rng = StdRng::seed_from_u64(0x5eed_a15e);
    for instance in 0..300 {
        let z = deficient_family(&mut rng);
        let res = global_qr(&z).unwrap();
        assert_orthonormal(&res.q, 1e-12);
        assert_eq!(res.q.len(), res.kept.len(), "instance {instance}");
        // Kept indices are strictly increasing and carry positive pivots;
        // eliminated rows of r vanish entirely.
        for w in res.kept.windows(2) {
            assert!(w[0] < w[1]);
        }
        for i in 0..z.len() {
            if res.kept.contains(&i) {
                assert!(res.r.get(i, i) > 0.0, "instance {instance} pivot {i}");
            } else {
                for j in 0..z.len() {
                    assert_eq!(res.r.get(i, j), 0.0, "instance {instance} row {i}");
                }
            }
            for j in 0..i {
                assert_eq!(res.r.get(i, j), 0.0, "lower triangle {i},{j}");
            }
            let rebuilt = res.reconstruct_block(i);
            let scale = f64::max(1.0, z.block(i).frobenius_norm());
            assert!(
                rebuilt.sub(z.block(i)).frobenius_norm() <= 1e-12 * scale,
                "instance {instance} block {i} reconstruction"
            );
        }
    }
}

#[test]
fn randomized_projector_is_idempotent_and_contractive() {
    let mut rng = StdRng::seed_from_u64(0x1d3a_77);
    for instance in 0..300 {
        let z = deficient_family(&mut rng);
        let res = global_qr(&z).unwrap();
        let (n, s) = z.block_shape();
        let y = random_block(&mut rng, n, s);
        let (p1, _) = project(&res.q, &y).unwrap();
        let (p2, _) = project(&res.q, &p1).unwrap();
        let scale = f64::max(1.0, y.frobenius_norm());
        assert!(
            p2.sub(&p1).frobenius_norm() <= 1e-12 * scale,
            "instance {instance} idempotence"
        );
        assert!(
            p1.frobenius_norm() <= y.frobenius_norm() * (1.0 + 1e-12),
            "instance {instance} contraction"
        );
        // The residual y - Py is F-orthogonal to every kept direction.
        let resid = y.sub(&p1);
        for m in 0..res.q.len() {
            let inner = frobenius_inner(res.q.block(m), &resid).unwrap();
            assert!(inner.abs() <= 1e-12 * scale, "instance {instance} dir {m}");
        }
    }
}

fn matrix_strategy(n: usize, s: usize) -> impl Strategy<Value = DenseMatrix> {
    proptest::collection::vec(-10.0f64..10.0, n * s)
        .prop_map(move |data| DenseMatrix::from_vec(n, s, data).unwrap())
}

proptest! {
    #[test]
    fn frobenius_inner_matches_trace_oracle(
        (a, b) in (2usize..5, 1usize..4).prop_flat_map(|(n, s)| {
            (matrix_strategy(n, s), matrix_strategy(n, s))
        })
    ) {
        let got = frobenius_inner(&a, &b).unwrap();
        // tr(b^T a) computed through an explicit product.
        let prod = b.transpose().mul(&a);
        let trace: f64 = (0..prod.rows()).map(|i| prod.get(i, i)).sum();
        let scale = f64::max(1.0, trace.abs());
        prop_assert!((got - trace).abs() <= 1e-10 * scale);
    }

    #[test]
    fn diamond_product_transposes_across_arguments(
        (a, b) in (2usize..5, 1usize..4, 1usize..4, 1usize..4).prop_flat_map(|(n, s, k, l)| {
            (
                proptest::collection::vec(matrix_strategy(n, s), k),
                proptest::collection::vec(matrix_strategy(n, s), l),
            )
        })
    ) {
        let fa = BlockFamily::new(a).unwrap();
        let fb = BlockFamily::new(b).unwrap();
        let ab = diamond_product(&fa, &fb).unwrap();
        let ba = diamond_product(&fb, &fa).unwrap();
        prop_assert_eq!(ab.shape(), (fa.len(), fb.len()));
        for i in 0..fa.len() {
            for j in 0..fb.len() {
                let diff = (ab.get(i, j) - ba.get(j, i)).abs();
                prop_assert!(diff <= 1e-12 * f64::max(1.0, ab.get(i, j).abs()));
            }
        }
    }

    #[test]
    fn global_qr_handles_arbitrary_families(
        blocks in (2usize..6, 1usize..4).prop_flat_map(|(n, s)| {
            proptest::collection::vec(matrix_strategy(n, s), 1..5)
        })
    ) {
        let z = BlockFamily::new(blocks).unwrap();
        let res = global_qr(&z).unwrap();
        assert_orthonormal(&res.q, 1e-12);
        for i in 0..z.len() {
            let rebuilt = res.reconstruct_block(i);
            let scale = f64::max(1.0, z.block(i).frobenius_norm());
            prop_assert!(rebuilt.sub(z.block(i)).frobenius_norm() <= 1e-12 * scale);
        }
    }
}
