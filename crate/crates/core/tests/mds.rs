use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use traceview_core::projection::{jacobi_eigen, mds_project, quality};
use traceview_core::DistanceMatrix;

fn euclid(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            points
                .iter()
                .map(|q| p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect()
        })
        .collect()
}

fn matrix(d: Vec<Vec<f64>>) -> DistanceMatrix {
    let labels = (0..d.len()).map(|i| format!("p{i}")).collect();
    DistanceMatrix::new(labels, d).unwrap()
}

fn centered_gram(d: &[Vec<f64>]) -> DMatrix<f64> {
    let n = d.len();
    let sq = DMatrix::from_fn(n, n, |i, j| d[i][j] * d[i][j]);
    let j = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    -0.5 * &j * sq * &j
}

/// Top-two classical scaling through nalgebra, returning pairwise layout distances.
fn oracle_layout_distances(d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let eig = SymmetricEigen::new(centered_gram(d));
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let coords: Vec<Vec<f64>> = (0..d.len())
        .map(|i| {
            order[..2]
                .iter()
                .map(|&k| eig.eigenvectors[(i, k)] * eig.eigenvalues[k].max(0.0).sqrt())
                .collect()
        })
        .collect();
    euclid(&coords)
}

fn random_planar(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rng.random_range(3..=12);
    (0..n)
        .map(|_| vec![rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
        .collect()
}

#[test]
fn jacobi_matches_nalgebra_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let n = rng.random_range(1..=15);
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(-5.0..5.0);
                a[i][j] = v;
                a[j][i] = v;
            }
        }
        let ours = jacobi_eigen(&a);
        let mut theirs: Vec<f64> = SymmetricEigen::new(DMatrix::from_fn(n, n, |i, j| a[i][j]))
            .eigenvalues
            .iter()
            .copied()
            .collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in ours.values.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        for (k, v) in ours.vectors.iter().enumerate() {
            let norm: f64 = v.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-9);
            for i in 0..n {
                let av: f64 = (0..n).map(|j| a[i][j] * v[j]).sum();
                assert!((av - ours.values[k] * v[i]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn planar_sets_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..200 {
        let d = euclid(&random_planar(&mut rng));
        let m = matrix(d.clone());
        let layout = mds_project(&m);
        assert!(layout.is_euclidean(), "case {case}");
        let q = quality(&m, &layout).unwrap();
        let max_err = q.pairs.iter().map(|p| (p.layout - p.computed).abs()).fold(0.0, f64::max);
        assert!(max_err <= 1e-6, "case {case}: {max_err}");
        assert!((q.mean_ratio.unwrap() - 1.0).abs() <= 1e-9, "case {case}");
        assert!(q.variance_ratio.unwrap() <= 1e-12, "case {case}");
    }
}

#[test]
fn equilateral_triangle_closed_form() {
    let s = 3.0;
    let m = matrix(vec![vec![0.0, s, s], vec![s, 0.0, s], vec![s, s, 0.0]]);
    let layout = mds_project(&m);
    assert!((layout.eigenvalues[0] - s * s / 2.0).abs() < 1e-12);
    assert!((layout.eigenvalues[1] - s * s / 2.0).abs() < 1e-12);
    for i in 0..3 {
        let r = layout.points[i].x.hypot(layout.points[i].y);
        assert!((r - s / 3f64.sqrt()).abs() < 1e-12);
        for j in 0..3 {
            if i != j {
                assert!((layout.distance(i, j) - s).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn collinear_points_closed_form() {
    let xs = [0.0, 1.0, 3.0, 6.0];
    let d: Vec<Vec<f64>> = xs.iter().map(|a| xs.iter().map(|b| f64::abs(a - b)).collect()).collect();
    let layout = mds_project(&matrix(d));
    let mean = xs.iter().sum::<f64>() / 4.0;
    let spread: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    assert!((layout.eigenvalues[0] - spread).abs() < 1e-12);
    assert!(layout.points[0].x > 0.0);
    let sign = (layout.points[0].x / (xs[0] - mean)).signum();
    for (p, x) in layout.points.iter().zip(xs) {
        assert!((p.x - sign * (x - mean)).abs() < 1e-12);
        assert_eq!(p.y, 0.0);
    }
}

#[test]
fn non_planar_layout_matches_oracle() {
    let pts = vec![vec![0.0, 0.0, 0.0], vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]];
    let d = euclid(&pts);
    let m = matrix(d.clone());
    let layout = mds_project(&m);
    let expected = oracle_layout_distances(&d);
    let mut ratios = Vec::new();
    for i in 0..4 {
        for j in i + 1..4 {
            assert!((layout.distance(i, j) - expected[i][j]).abs() < 1e-9);
            ratios.push(expected[i][j] / d[i][j]);
        }
    }
    let oracle_mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let q = quality(&m, &layout).unwrap();
    assert!((q.mean_ratio.unwrap() - oracle_mean).abs() < 1e-9);
    assert!(q.mean_ratio.unwrap() < 1.0);
    assert!(q.variance_ratio.unwrap() > 0.0);
}

#[test]
fn random_metrics_match_oracle_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(3..=10);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let d = euclid(&pts);
        let layout = mds_project(&matrix(d.clone()));
        let expected = oracle_layout_distances(&d);
        for i in 0..n {
            for j in 0..n {
                assert!((layout.distance(i, j) - expected[i][j]).abs() < 1e-7);
            }
        }
    }
}

#[test]
fn quality_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let n = rng.random_range(3..=9);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let d = euclid(&pts);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.swap(0, n / 2);
        let pd: Vec<Vec<f64>> = perm.iter().map(|&i| perm.iter().map(|&j| d[i][j]).collect()).collect();
        let (a, b) = (matrix(d), matrix(pd));
        let qa = quality(&a, &mds_project(&a)).unwrap();
        let qb = quality(&b, &mds_project(&b)).unwrap();
        assert!((qa.mean_ratio.unwrap() - qb.mean_ratio.unwrap()).abs() < 1e-9);
        assert!((qa.variance_ratio.unwrap() - qb.variance_ratio.unwrap()).abs() < 1e-9);
    }
}
