//! Floating-point simplex against an exact rational simplex.

#![allow(clippy::needless_range_loop)]

use linereconf_core::optimizer::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Q = BigRational;

#[derive(Debug, PartialEq)]
enum Exact {
    Optimal(Q),
    Infeasible,
    Unbounded,
}

fn q(v: f64) -> Q {
    Q::from_float(v).unwrap()
}

/// Textbook two-phase tableau simplex with Bland's rule, x >= 0.
/// Rows are `a·x = b` after slack insertion; `artificial` columns start at
/// `first_art`.
fn exact_solve(lp: &LinearProgram) -> Exact {
    let n = lp.num_vars();
    // rows: original rows plus finite upper bounds
    let mut rows: Vec<(Vec<Q>, Sense, Q)> = Vec::new();
    for r in &lp.rows {
        let mut a = vec![Q::zero(); n];
        let mut rhs = q(r.rhs);
        for &(j, v) in &r.coeffs {
            a[j] += q(v);
        }
        // shift lower bounds to zero
        for j in 0..n {
            rhs -= &a[j] * q(lp.lower[j]);
        }
        rows.push((a, r.sense, rhs));
    }
    for j in 0..n {
        if lp.upper[j].is_finite() {
            let mut a = vec![Q::zero(); n];
            a[j] = Q::one();
            rows.push((a, Sense::Le, q(lp.upper[j] - lp.lower[j])));
        }
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let first_art = n + n_slack;
    let total = first_art + m;
    let mut t: Vec<Vec<Q>> = vec![vec![Q::zero(); total + 1]; m + 1];
    let mut s = n;
    for (i, (a, sense, rhs)) in rows.iter().enumerate() {
        t[i][..n].clone_from_slice(&a[..n]);
        match sense {
            Sense::Le => {
                t[i][s] = Q::one();
                s += 1;
            }
            Sense::Ge => {
                t[i][s] = -Q::one();
                s += 1;
            }
            Sense::Eq => {}
        }
        t[i][total] = rhs.clone();
        if rhs.is_negative() {
            for v in t[i].iter_mut() {
                *v = -v.clone();
            }
        }
        t[i][first_art + i] = Q::one();
    }
    let mut basis: Vec<usize> = (0..m).map(|i| first_art + i).collect();
    // phase 1 objective: sum of artificials, expressed in nonbasics
    for i in 0..m {
        for c in 0..=total {
            let v = t[i][c].clone();
            t[m][c] -= v;
        }
    }
    for i in 0..m {
        t[m][first_art + i] = Q::zero();
    }
    let allowed_p1: Vec<bool> = vec![true; total];
    if !run(&mut t, &mut basis, &allowed_p1) {
        unreachable!("phase 1 is bounded");
    }
    if !t[m][total].is_zero() {
        return Exact::Infeasible;
    }
    // drive artificials out
    let mut i = 0;
    while i < t.len() - 1 {
        if basis[i] >= first_art {
            if let Some(c) = (0..first_art).find(|&c| !t[i][c].is_zero()) {
                pivot(&mut t, &mut basis, i, c);
            } else {
                t.remove(i);
                basis.remove(i);
                continue;
            }
        }
        i += 1;
    }
    let m = t.len() - 1;
    let mut obj = vec![Q::zero(); total + 1];
    for j in 0..n {
        obj[j] = q(lp.objective[j]);
    }
    for i in 0..m {
        let cb = obj[basis[i]].clone();
        if !cb.is_zero() {
            for c in 0..=total {
                let v = &cb * &t[i][c];
                obj[c] -= v;
            }
        }
    }
    t[m] = obj;
    let allowed: Vec<bool> = (0..total).map(|c| c < first_art).collect();
    if !run(&mut t, &mut basis, &allowed) {
        return Exact::Unbounded;
    }
    let mut value = -t[m][total].clone();
    for j in 0..n {
        value += q(lp.objective[j]) * q(lp.lower[j]);
    }
    Exact::Optimal(value)
}

fn pivot(t: &mut [Vec<Q>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c].clone();
    for v in t[r].iter_mut() {
        *v = &*v / &p;
    }
    let row = t[r].clone();
    for (i, other) in t.iter_mut().enumerate() {
        if i != r && !other[c].is_zero() {
            let f = other[c].clone();
            for (v, pv) in other.iter_mut().zip(&row) {
                *v -= &f * pv;
            }
        }
    }
    basis[r] = c;
}

fn run(t: &mut [Vec<Q>], basis: &mut [usize], allowed: &[bool]) -> bool {
    let m = t.len() - 1;
    let total = allowed.len();
    loop {
        let Some(c) = (0..total).find(|&c| allowed[c] && !basis.contains(&c) && t[m][c].is_negative())
        else {
            return true;
        };
        let mut leave: Option<(usize, Q)> = None;
        for i in 0..m {
            if t[i][c].is_positive() {
                let ratio = &t[i][total] / &t[i][c];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else { return false };
        pivot(t, basis, r, c);
    }
}

fn random_lp(seed: u64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=30);
    let m = rng.random_range(1..=15);
    let mut lp = LinearProgram::default();
    for _ in 0..n {
        let lower = rng.random_range(-3..=2) as f64;
        let upper = if rng.random_bool(0.8) {
            lower + rng.random_range(0..=10) as f64
        } else {
            f64::INFINITY
        };
        lp.add_var(rng.random_range(-9..=9) as f64, lower, upper);
    }
    for _ in 0..m {
        let k = rng.random_range(1..=n.min(8));
        let coeffs: Vec<(usize, f64)> = (0..k)
            .map(|_| (rng.random_range(0..n), rng.random_range(-9..=9) as f64))
            .collect();
        let sense = match rng.random_range(0..4) {
            0 => Sense::Ge,
            1 => Sense::Eq,
            _ => Sense::Le,
        };
        lp.add_row(coeffs, sense, rng.random_range(-20..=30) as f64);
    }
    lp
}

#[test]
fn simplex_matches_rational_oracle() {
    let mut counts = [0usize; 3];
    for seed in 0..400 {
        let lp = random_lp(seed);
        let exact = exact_solve(&lp);
        let got = solve_lp(&lp).unwrap();
        match (&exact, &got) {
            (Exact::Optimal(v), LpStatus::Optimal { x, objective }) => {
                let v: f64 = num_traits::ToPrimitive::to_f64(v).unwrap();
                assert!(
                    (v - objective).abs() <= 1e-6 * (1.0 + v.abs()),
                    "seed {seed}: {objective} vs exact {v}"
                );
                assert!(lp.max_violation(x) <= 1e-7, "seed {seed}");
                counts[0] += 1;
            }
            (Exact::Infeasible, LpStatus::Infeasible) => counts[1] += 1,
            (Exact::Unbounded, LpStatus::Unbounded) => counts[2] += 1,
            _ => panic!("seed {seed}: exact {exact:?}, simplex {got:?}"),
        }
    }
    // The generator should exercise every outcome.
    assert!(counts.iter().all(|c| *c > 0), "{counts:?}");
}
