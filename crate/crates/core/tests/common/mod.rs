//! Generators and oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use ellipsoid_autocode::codegen::lower;
use ellipsoid_autocode::linalg::{int, ratio, Rational, RationalMatrix};
use ellipsoid_autocode::spec_model::{load_spec, ControllerSpec, MatrixForm, ObserverKind, ObserverSpec};
use num::{Signed, Zero};
use rand::Rng;

pub fn fixture(name: &str) -> ControllerSpec {
    load_spec(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)).expect("fixture loads")
}

/// Small rational `p/q`, `|p| ≤ 12`, `1 ≤ q ≤ 8`.
pub fn small<R: Rng>(rng: &mut R) -> Rational {
    ratio(rng.gen_range(-12..=12), rng.gen_range(1..=8))
}

pub fn nonzero<R: Rng>(rng: &mut R) -> Rational {
    loop {
        let v = small(rng);
        if !v.is_zero() {
            return v;
        }
    }
}

/// Small rational, zero with probability ~1/3 to exercise sparsity.
pub fn sparse<R: Rng>(rng: &mut R) -> Rational {
    if rng.gen_ratio(1, 3) {
        Rational::zero()
    } else {
        small(rng)
    }
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, f: fn(&mut R) -> Rational) -> RationalMatrix {
    RationalMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| f(rng)).collect()).unwrap()
}

/// Lower-triangular factor with positive diagonal.
pub fn random_factor<R: Rng>(rng: &mut R, n: usize) -> RationalMatrix {
    let mut l = RationalMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            l[(i, j)] = sparse(rng);
        }
        l[(i, i)] = ratio(rng.gen_range(1..=9), rng.gen_range(1..=4));
    }
    l
}

/// `L·Lᵀ` and `L` for a random positive definite matrix.
pub fn random_pd<R: Rng>(rng: &mut R, n: usize) -> (RationalMatrix, RationalMatrix) {
    let l = random_factor(rng, n);
    (l.mul(&l.transpose()).unwrap(), l)
}

/// `u` with `|u|² ≤ 1`; on the unit sphere about half the time.
pub fn unit_ball_point<R: Rng>(rng: &mut R, n: usize) -> Vec<Rational> {
    let mut u = vec![Rational::zero(); n];
    match rng.gen_range(0..3) {
        0 => {
            u[rng.gen_range(0..n)] = if rng.gen() { int(1) } else { int(-1) };
        }
        1 if n >= 2 => {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if i == j {
                u[i] = int(1);
            } else {
                u[i] = ratio(if rng.gen() { 3 } else { -3 }, 5);
                u[j] = ratio(if rng.gen() { 4 } else { -4 }, 5);
            }
        }
        _ => {
            let scale = int(n as i64);
            for v in &mut u {
                *v = ratio(rng.gen_range(-100..=100), 100) / &scale;
            }
        }
    }
    u
}

/// A point of `{L·u : |u| ≤ 1}`, i.e. of the Q-form ellipsoid `L·Lᵀ`.
pub fn point_in<R: Rng>(rng: &mut R, l: &RationalMatrix) -> Vec<Rational> {
    l.apply(&unit_ball_point(rng, l.cols())).unwrap()
}

pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> RationalMatrix {
    let mut m = RationalMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = small(rng);
            m[(i, j)] = v.clone();
            m[(j, i)] = v;
        }
    }
    m
}

/// Symmetric matrix that is PSD, singular, or barely indefinite, in roughly
/// equal proportion.
pub fn random_psd_candidate<R: Rng>(rng: &mut R, n: usize) -> RationalMatrix {
    let rank = rng.gen_range(0..=n);
    let g = random_matrix(rng, n, rank.max(1), small);
    let mut m = if rank == 0 { RationalMatrix::zeros(n, n) } else { g.mul(&g.transpose()).unwrap() };
    match rng.gen_range(0..3) {
        0 => {}
        1 => {
            let i = rng.gen_range(0..n);
            m[(i, i)] -= ratio(1, rng.gen_range(1..=50));
        }
        _ => {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let v = small(rng);
            m[(i, j)] += &v;
            if i != j {
                m[(j, i)] += v;
            }
        }
    }
    m
}

/// Determinant by fraction-exact Gaussian elimination.
pub fn det(m: &RationalMatrix) -> Rational {
    let n = m.rows();
    let mut a: Vec<Vec<Rational>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    let mut d = int(1);
    for c in 0..n {
        let Some(p) = (c..n).find(|&r| !a[r][c].is_zero()) else {
            return Rational::zero();
        };
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= &a[c][c];
        for r in c + 1..n {
            let f = &a[r][c] / &a[c][c];
            for k in c..n {
                let t = &f * &a[c][k];
                a[r][k] -= t;
            }
        }
    }
    d
}

/// PSD iff every principal minor is non-negative.
pub fn psd_by_minors(m: &RationalMatrix) -> bool {
    let n = m.rows();
    (1u32..1 << n).all(|mask| {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        !det(&m.principal(&idx).unwrap()).is_negative()
    })
}

/// Random controller with `n, m, k ≤ 4`, a P-form stability observer over the
/// states and a Q-form bound on the effective inputs. Some inputs carry a
/// reference signal.
pub fn random_spec<R: Rng>(rng: &mut R, index: usize) -> ControllerSpec {
    let (n, m, k) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
    let mut a = random_matrix(rng, n, n, sparse);
    for i in 0..n {
        a[(i, i)] = nonzero(rng);
    }
    let input_names: Vec<String> = (1..=m).map(|j| format!("y{j}")).collect();
    let references: BTreeMap<String, String> =
        input_names.iter().filter(|_| rng.gen()).map(|y| (y.clone(), format!("{y}_ref"))).collect();
    let mut spec = ControllerSpec {
        name: format!("ctl_{index}"),
        a,
        b: random_matrix(rng, n, m, sparse),
        c: random_matrix(rng, k, n, sparse),
        d: random_matrix(rng, k, m, sparse),
        state_names: (1..=n).map(|i| format!("mem{i}")).collect(),
        input_names,
        output_names: (1..=k).map(|r| format!("u{r}")).collect(),
        references,
        x0: vec![Rational::zero(); n],
        observers: Vec::new(),
    };
    let signals = lower(&spec).expect("random spec lowers").input_signals;
    let (p, _) = random_pd(rng, n);
    let mu = ratio(rng.gen_range(1..=99), 100);
    let bound = RationalMatrix::diagonal(&(0..m).map(|_| ratio(rng.gen_range(1..=9), 2)).collect::<Vec<_>>());
    spec.observers = vec![
        ObserverSpec {
            label: "Stability".into(),
            kind: ObserverKind::Auto,
            variables: spec.state_names.clone(),
            form: MatrixForm::P,
            matrix: p,
            mu: mu.clone(),
        },
        ObserverSpec {
            label: "InputBound".into(),
            kind: ObserverKind::Auto,
            variables: signals,
            form: MatrixForm::Q,
            matrix: bound,
            mu: int(1) - mu,
        },
    ];
    spec.validate().expect("random spec is valid");
    spec
}
