use dae_core::linalg::{compute_lambda, top_singular_values};
use dae_core::{Rng, Stream};
use nalgebra::DMatrix;

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter());
    }
    out
}

fn centred(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    m
}

#[test]
fn recovers_constructed_spectrum() {
    let mut rng = Rng::new(1);
    let (n, d) = (120, 40);
    let sigma = [9.0, 5.0, 3.0, 1.5, 0.7];
    let k = sigma.len();
    // Centred orthonormal left factor, so centring leaves A unchanged.
    let u = centred(gaussian(n, k, &mut rng)).qr().q();
    let v = gaussian(d, k, &mut rng).qr().q();
    let a = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&sigma)) * v.transpose();

    let s = top_singular_values(&row_major(&a), n, d, k, &mut Rng::stream(0, Stream::Pca)).unwrap();
    for (got, want) in s.values.iter().zip(sigma) {
        assert!((got - want).abs() / want < 0.01, "{got} vs {want}");
    }
}

#[test]
fn matches_dense_svd_oracle() {
    for seed in 0..5 {
        let mut rng = Rng::new(seed);
        let (n, d, k) = (80, 30, 6);
        let a = gaussian(n, d, &mut rng);
        let want = centred(a.clone()).singular_values();
        let mut want: Vec<f64> = want.iter().copied().collect();
        want.sort_by(|x, y| y.total_cmp(x));

        let s = top_singular_values(&row_major(&a), n, d, k, &mut Rng::new(seed + 100)).unwrap();
        for (got, want) in s.values.iter().zip(&want) {
            assert!((got - want).abs() / want < 1e-6, "seed {seed}: {got} vs {want}");
        }
    }
}

#[test]
fn axis_std_ratio() {
    let mut rng = Rng::new(4);
    let n = 5000;
    let data: Vec<f64> = (0..n).flat_map(|_| [4.0 * rng.normal(), 2.0 * rng.normal()]).collect();
    let s = top_singular_values(&data, n, 2, 2, &mut Rng::new(0)).unwrap();
    let ratio = s.values[0] / s.values[1];
    assert!((ratio - 2.0).abs() / 2.0 < 0.05, "ratio {ratio}");
}

#[test]
fn subsampled_rows_keep_the_shape_of_the_spectrum() {
    let mut rng = Rng::new(5);
    let n = 12_000;
    let data: Vec<f32> = (0..n)
        .flat_map(|_| [3.0 * rng.normal() as f32, rng.normal() as f32, 0.0])
        .collect();
    let s = top_singular_values(&data, n, 3, 2, &mut Rng::new(0)).unwrap();
    let lambda = compute_lambda(&s, 0.005).unwrap();
    assert_eq!(lambda.weights(), &[1.0, 0.005]);
}
