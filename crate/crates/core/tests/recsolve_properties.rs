//! Closed forms and the recurrence solver against independent oracles:
//! term-by-term evaluation, text round trips, and plain unrolling. Also the
//! comparison harness's sign convention and purity.

use std::collections::BTreeMap;

use hcenergy::recsolve::{parse_closed_form, rat, solve_recurrence, verify_solution, ClosedForm, RecArg, RecCall, Recurrence, Special, TermKey};
use hcenergy::report::{compare, ingest_closed_form, parse_measurements, Format, Measurement};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARS: [&str; 2] = ["N", "M"];

fn frac(rng: &mut ChaCha8Rng, num: i64, den: i64) -> BigRational {
    rat(rng.gen_range(-num..=num)) / rat(rng.gen_range(1..=den))
}

fn random_key(rng: &mut ChaCha8Rng) -> TermKey {
    let mut k = TermKey::default();
    for v in VARS {
        let e = rng.gen_range(0..=3);
        if e > 0 && rng.gen_bool(0.5) {
            k.mono.insert(v.to_string(), e);
        }
    }
    if rng.gen_bool(0.35) {
        let v = VARS.choose(rng).unwrap().to_string();
        let s = match rng.gen_range(0..3) {
            0 => Special::Fib,
            1 => Special::Lucas,
            _ => {
                let bases = [rat(2), rat(3), -rat(1), rat(1) / rat(2), -rat(3) / rat(2), rat(5) / rat(3)];
                Special::Pow(bases.choose(rng).unwrap().clone())
            }
        };
        k.special.insert(v, s);
    }
    k
}

fn random_form(rng: &mut ChaCha8Rng) -> ClosedForm {
    let n = rng.gen_range(0..=5);
    ClosedForm::from_terms((0..n).map(|_| (random_key(rng), frac(rng, 200, 12))).collect::<Vec<_>>())
}

fn pow(b: &BigRational, e: i64) -> BigRational {
    let mut r = BigRational::one();
    for _ in 0..e {
        r *= b;
    }
    r
}

fn fib_lucas(n: i64) -> (BigRational, BigRational) {
    let (mut f, mut f1) = (rat(0), rat(1));
    let (mut l, mut l1) = (rat(2), rat(1));
    for _ in 0..n {
        (f, f1) = (f1.clone(), f + f1);
        (l, l1) = (l1.clone(), l + l1);
    }
    (f, l)
}

/// Evaluation straight from the term list.
fn eval_terms(cf: &ClosedForm, at: &BTreeMap<String, i64>) -> BigRational {
    let mut total = BigRational::zero();
    for (k, c) in cf.terms() {
        let mut t = c.clone();
        for (v, e) in &k.mono {
            t *= pow(&rat(at[v]), i64::from(*e));
        }
        for (v, s) in &k.special {
            t *= match s {
                Special::Pow(b) => pow(b, at[v]),
                Special::Fib => fib_lucas(at[v]).0,
                Special::Lucas => fib_lucas(at[v]).1,
            };
        }
        total += t;
    }
    total
}

fn sizes(at: &BTreeMap<String, i64>) -> BTreeMap<String, BigRational> {
    at.iter().map(|(k, v)| (k.clone(), rat(*v))).collect()
}

/// Values `0..=top` of `r` by iterating from the base cases.
fn unroll(r: &Recurrence, env: &BTreeMap<String, BigRational>, top: u32) -> Vec<BigRational> {
    let mut f: Vec<BigRational> = Vec::new();
    for n in 0..=top {
        let v = if n < r.start {
            r.base[&n].evaluate(env).unwrap()
        } else {
            let mut at = env.clone();
            at.insert(r.var.clone(), rat(n.into()));
            let mut v = r.rhs.evaluate(&at).unwrap();
            for c in &r.calls {
                let RecArg::Shift(k) = c.arg else { unreachable!() };
                v += &c.coeff * &f[(n - k) as usize];
            }
            v
        };
        f.push(v);
    }
    f
}

fn random_rhs(rng: &mut ChaCha8Rng) -> ClosedForm {
    let mut terms = vec![(TermKey::default(), frac(rng, 50, 4))];
    if rng.gen_bool(0.5) {
        terms.push((TermKey { mono: BTreeMap::from([("N".into(), rng.gen_range(1..=2))]), ..TermKey::default() }, frac(rng, 20, 3)));
    }
    if rng.gen_bool(0.3) {
        terms.push((TermKey { mono: BTreeMap::from([("M".into(), 1)]), ..TermKey::default() }, frac(rng, 20, 3)));
    }
    if rng.gen_bool(0.2) {
        let b = [rat(2), rat(3), rat(1) / rat(2)].choose(rng).unwrap().clone();
        terms.push((TermKey { special: BTreeMap::from([("N".into(), Special::Pow(b))]), ..TermKey::default() }, frac(rng, 10, 2)));
    }
    ClosedForm::from_terms(terms)
}

fn recurrence(calls: &[(BigRational, u32)], rhs: ClosedForm, bases: Vec<BigRational>) -> Recurrence {
    Recurrence {
        name: "f".into(),
        var: "N".into(),
        calls: calls.iter().map(|(c, k)| RecCall { coeff: c.clone(), arg: RecArg::Shift(*k) }).collect(),
        rhs,
        start: bases.len() as u32,
        base: bases.into_iter().enumerate().map(|(i, b)| (i as u32, ClosedForm::constant(b))).collect(),
    }
}

fn check_solution(r: &Recurrence, rng: &mut ChaCha8Rng) -> Result<(), TestCaseError> {
    let cf = solve_recurrence(r).map_err(|e| TestCaseError::fail(format!("{r}\nunsolved: {e}")))?;
    prop_assert!(verify_solution(&cf, r).is_ok());
    let env = BTreeMap::from([("M".to_string(), rat(rng.gen_range(0..9)))]);
    let want = unroll(r, &env, 30);
    for (n, w) in want.iter().enumerate() {
        let mut at = env.clone();
        at.insert("N".into(), rat(n as i64));
        prop_assert_eq!(&cf.evaluate(&at).unwrap(), w, "{}\nsolution {} at N={}", r, cf, n);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn canonical_forms_evaluate_termwise(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cf = random_form(&mut rng);
        let canon = cf.canonicalize();
        prop_assert_eq!(&canon.canonicalize(), &canon);
        for _ in 0..100 {
            let at: BTreeMap<String, i64> = VARS.iter().map(|v| (v.to_string(), rng.gen_range(0..=20))).collect();
            let want = eval_terms(&cf, &at);
            prop_assert_eq!(&cf.evaluate(&sizes(&at)).unwrap(), &want);
            prop_assert_eq!(&canon.evaluate(&sizes(&at)).unwrap(), &want);
        }
    }

    #[test]
    fn equal_forms_are_identical(seed in any::<u64>()) {
        // The same sum built from split, reordered, and cancelling terms.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cf = random_form(&mut rng);
        let mut pieces = Vec::new();
        for (k, c) in cf.terms() {
            let part = frac(&mut rng, 50, 5);
            pieces.push((k.clone(), part.clone()));
            pieces.push((k.clone(), c - part));
        }
        let junk = random_key(&mut rng);
        pieces.push((junk.clone(), rat(3)));
        pieces.push((junk, rat(-3)));
        pieces.shuffle(&mut rng);
        let rebuilt = ClosedForm::from_terms(pieces).canonicalize();
        prop_assert_eq!(&rebuilt, &cf.canonicalize());
        prop_assert_eq!(rebuilt.to_string(), cf.to_string());
    }

    #[test]
    fn printed_forms_parse_back(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cf = random_form(&mut rng);
        let text = cf.to_string();
        let back = parse_closed_form(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(&back, &cf, "{}", text);
        prop_assert_eq!(&ingest_closed_form(&text).unwrap(), &cf);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn first_order_recurrences_match_unrolling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = [rat(1), rat(1), rat(2), rat(3), -rat(1), rat(1) / rat(2), -rat(2) / rat(3)].choose(&mut rng).unwrap().clone();
        let r = recurrence(&[(a, 1)], random_rhs(&mut rng), vec![frac(&mut rng, 40, 3)]);
        check_solution(&r, &mut rng)?;
    }

    #[test]
    fn second_order_recurrences_match_unrolling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = if rng.gen_bool(0.4) {
            (rat(1), rat(1))
        } else {
            // Rational characteristic roots r1, r2: f(n) = (r1 + r2) f(n-1) - r1 r2 f(n-2).
            let roots = [rat(1), rat(2), rat(3), -rat(1), rat(1) / rat(2), -rat(1) / rat(3)];
            let (r1, r2) = (roots.choose(&mut rng).unwrap().clone(), roots.choose(&mut rng).unwrap().clone());
            (&r1 + &r2, -(&r1 * &r2))
        };
        let mut rhs = ClosedForm::constant(frac(&mut rng, 40, 4));
        if rng.gen_bool(0.3) {
            rhs = rhs.add(&ClosedForm::var("M"));
        }
        let calls: Vec<(BigRational, u32)> = [(a, 1), (b, 2)].into_iter().filter(|(c, _)| !c.is_zero()).collect();
        let r = recurrence(&calls, rhs, vec![frac(&mut rng, 30, 2), frac(&mut rng, 30, 2)]);
        check_solution(&r, &mut rng)?;
    }

    #[test]
    fn irrational_roots_other_than_the_golden_ratio_are_refused(a in 2i64..6, b in 1i64..4) {
        // x^2 = a x + b has irrational roots for these a, b unless a^2 + 4b is a square.
        let d = a * a + 4 * b;
        let s = (d as f64).sqrt() as i64;
        prop_assume!(s * s != d);
        let r = recurrence(&[(rat(a), 1), (rat(b), 2)], ClosedForm::constant(rat(1)), vec![rat(0), rat(1)]);
        prop_assert!(solve_recurrence(&r).is_err());
    }

    #[test]
    fn error_sign_follows_the_estimate(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cf = ClosedForm::var("N").scale(&frac(&mut rng, 90, 7).abs()).add(&ClosedForm::constant(rat(rng.gen_range(0..100))));
        let n = rng.gen_range(0..50);
        let hw = rat(rng.gen_range(1..5000));
        let row = Measurement { benchmark: "b".into(), sizes_text: format!("N={n}"), sizes: BTreeMap::from([("N".into(), rat(n))]), hw: hw.clone() };
        let c = compare(&[("b".into(), cf.clone())], &[row]).unwrap();
        let r = &c.rows[0];
        prop_assert_eq!(&r.estimated, &cf.evaluate(&BTreeMap::from([("N".into(), rat(n))])).unwrap());
        prop_assert_eq!(r.err_pct.is_negative(), r.estimated < hw);
        prop_assert_eq!(r.err_pct.is_zero(), r.estimated == hw);
    }
}

#[test]
fn comparison_output_is_byte_identical_across_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut csv = String::from("benchmark,sizes,hw_nj\n");
    let mut functions = Vec::new();
    for b in ["alpha", "beta", "gamma"] {
        functions.push((b.to_string(), random_form(&mut rng)));
        for _ in 0..4 {
            csv.push_str(&format!("{b},N={};M={},{}.{}\n", rng.gen_range(1..15), rng.gen_range(1..15), rng.gen_range(1..9000), rng.gen_range(0..10)));
        }
    }
    let rows = parse_measurements(&csv).unwrap();
    let render = |f: Format| compare(&functions, &rows).unwrap().render(f);
    for f in [Format::Text, Format::Csv] {
        let first = render(f);
        for _ in 0..5 {
            assert_eq!(render(f), first);
        }
    }
}
