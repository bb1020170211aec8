use music_vpr::stats::{paired_t_test, student_t_two_tailed_p};

/// Adaptive Simpson quadrature.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Two-tailed t tail by integrating the unnormalized density after the
/// substitution t = tan θ, normalized by the integral over the half line.
fn t_tail_oracle(t: f64, nu: f64) -> f64 {
    let g = move |th: f64| {
        let (s, c) = th.sin_cos();
        (c * c + s * s / nu).powf(-(nu + 1.0) / 2.0) * c.powf(nu - 1.0)
    };
    let half = std::f64::consts::FRAC_PI_2;
    let total = simpson(&g, 0.0, half, 1e-15);
    simpson(&g, t.abs().atan(), half, 1e-15) / total
}

fn normal_tail_oracle(t: f64) -> f64 {
    let phi = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    2.0 * simpson(&phi, t.abs(), 40.0, 1e-15)
}

#[test]
fn incomplete_beta_matches_quadrature() {
    for &nu in &[1u64, 2, 3, 5, 9, 20, 50, 200] {
        for &t in &[0.0, 0.3, 1.0, 1.7, 2.262, 3.0, 5.0, 8.0] {
            let p = student_t_two_tailed_p(t, nu).unwrap();
            let o = t_tail_oracle(t, nu as f64);
            assert!((p - o).abs() < 1e-8, "t={t} nu={nu}: {p} vs {o}");
        }
    }
}

#[test]
fn table_critical_value() {
    let p = student_t_two_tailed_p(2.262, 9).unwrap();
    assert!((p - 0.05).abs() < 1e-3);
    assert!((t_tail_oracle(2.262, 9.0) - 0.05).abs() < 1e-3);
}

#[test]
fn symmetric_in_t() {
    for nu in 1..40u64 {
        for i in 0..60 {
            let t = i as f64 * 0.17;
            assert_eq!(
                student_t_two_tailed_p(t, nu).unwrap(),
                student_t_two_tailed_p(-t, nu).unwrap()
            );
        }
    }
}

#[test]
fn strictly_decreasing_in_abs_t() {
    for nu in [1u64, 2, 4, 9, 30, 120] {
        let mut prev = student_t_two_tailed_p(0.0, nu).unwrap();
        for i in 1..=80 {
            let p = student_t_two_tailed_p(i as f64 * 0.1, nu).unwrap();
            assert!(p < prev, "nu={nu} step {i}: {p} !< {prev}");
            assert!((0.0..=1.0).contains(&p));
            prev = p;
        }
    }
}

#[test]
fn approaches_normal_for_many_dof() {
    for nu in [200u64, 500, 1000] {
        for i in 0..=40 {
            let t = i as f64 * 0.1;
            let p = student_t_two_tailed_p(t, nu).unwrap();
            assert!((p - normal_tail_oracle(t)).abs() < 5e-3, "t={t} nu={nu}");
        }
    }
}

#[test]
fn paired_test_sign_symmetry() {
    let a = [0.2, 0.5, 0.1, 0.9, 0.4];
    let b = [0.1, 0.1, 0.3, 0.2, 0.0];
    let ab = paired_t_test(&a, &b, 0.05).unwrap();
    let ba = paired_t_test(&b, &a, 0.05).unwrap();
    assert_eq!(ab.p_value, ba.p_value);
    assert_eq!(ab.t_statistic, -ba.t_statistic);
    assert_eq!(ab.reject_h0, ab.p_value < 0.05);
}
