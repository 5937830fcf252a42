use std::f64::consts::PI;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    comparison_report, empirical_gram_check, empirical_tail_check, heat_diag, heat_diag_report, heat_lower_bound,
    heat_tail_report, weyl_report, BoundReport, ComparisonQuery, Condition, DEFAULT_EPSILON,
};
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::manifold::SpectralManifold;
use crate::seed::mix_seed;
use crate::stats::binomial_sigma;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundSuite {
    Weyl,
    HeatDiag,
    HeatTail,
    Comparison,
    Gram,
    TailOp,
}

impl BoundSuite {
    pub const ALL: [BoundSuite; 6] = [
        BoundSuite::Weyl,
        BoundSuite::HeatDiag,
        BoundSuite::HeatTail,
        BoundSuite::Comparison,
        BoundSuite::Gram,
        BoundSuite::TailOp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BoundSuite::Weyl => "weyl",
            BoundSuite::HeatDiag => "heat-diag",
            BoundSuite::HeatTail => "heat-tail",
            BoundSuite::Comparison => "comparison",
            BoundSuite::Gram => "gram",
            BoundSuite::TailOp => "tail-op",
        }
    }
}

impl std::fmt::Display for BoundSuite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundSuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundSuite::ALL.into_iter().find(|b| b.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown bound suite '{s}' (expected weyl, heat-diag, heat-tail, comparison, gram, tail-op)"
            ))
        })
    }
}

/// One checked inequality `measured <= bound` at one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub suite: BoundSuite,
    pub manifold: String,
    pub parameters: String,
    #[serde(flatten)]
    pub report: BoundReport,
}

impl BoundRow {
    fn new(suite: BoundSuite, manifold: &SpectralManifold, parameters: String, report: BoundReport) -> Self {
        BoundRow { suite, manifold: manifold.kind().to_string(), parameters, report }
    }
}

pub fn any_asserted_failure(rows: &[BoundRow]) -> bool {
    rows.iter().any(|r| r.report.asserted_failure())
}

pub const WEYL_LAMBDAS: [f64; 5] = [4.0, 16.0, 64.0, 256.0, 1024.0];
pub const POINTS_PER_LAMBDA: usize = 20;

/// Runs one verification suite. Random points and trial streams derive
/// from `seed`.
pub fn report_bounds(suite: BoundSuite, seed: u64) -> Result<Vec<BoundRow>> {
    let stream = mix_seed(seed, suite as u64);
    match suite {
        BoundSuite::Weyl => weyl_suite(stream),
        BoundSuite::HeatDiag => heat_diag_suite(stream),
        BoundSuite::HeatTail => heat_tail_suite(stream),
        BoundSuite::Comparison => comparison_suite(),
        BoundSuite::Gram => gram_suite(stream),
        BoundSuite::TailOp => tail_suite(stream),
    }
}

fn weyl_suite(seed: u64) -> Result<Vec<BoundRow>> {
    let manifolds = [
        SpectralManifold::circle(),
        SpectralManifold::torus(2)?,
        SpectralManifold::sphere2(),
        SpectralManifold::sphere3(),
        SpectralManifold::torus(3)?,
    ];
    let mut rows = Vec::new();
    for (mi, m) in manifolds.iter().enumerate() {
        let pts = m.sample_uniform(POINTS_PER_LAMBDA, mix_seed(seed, mi as u64));
        for lambda in WEYL_LAMBDAS {
            for (k, x) in pts.iter().enumerate() {
                let report = weyl_report(m, x, lambda, DEFAULT_EPSILON)?;
                rows.push(BoundRow::new(BoundSuite::Weyl, m, format!("lambda={lambda};x={k}"), report));
            }
        }
    }
    Ok(rows)
}

fn heat_diag_suite(seed: u64) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    let s3 = SpectralManifold::sphere3();
    let x = s3.sample_uniform(1, seed)[0];
    // up to the gate t <= 6ε/((m-1)²κ) = 0.75, then past it
    let ts: Vec<f64> = (1..=20).map(|k| 0.75 * k as f64 / 20.0).chain([0.9, 1.5]).collect();
    for t in ts {
        rows.push(BoundRow::new(
            BoundSuite::HeatDiag,
            &s3,
            format!("t={t}"),
            heat_diag_report(&s3, t, &x, DEFAULT_EPSILON)?,
        ));
        let lower =
            heat_lower_bound(&ComparisonQuery { m: 3, k1: s3.ricci_lower_k1(), k2: s3.curvature_kappa(), r: 0.0, t })?;
        let report = BoundReport::new(lower, heat_diag(&s3, t, &x)?, vec![Condition::new("m >= 3", true)], None);
        rows.push(BoundRow::new(BoundSuite::HeatDiag, &s3, format!("t={t};lower"), report));
    }
    let s2 = SpectralManifold::sphere2();
    let y = s2.sample_uniform(1, mix_seed(seed, 2))[0];
    for t in [0.05, 0.25, 0.5, 1.0, 2.0, 3.0] {
        rows.push(BoundRow::new(
            BoundSuite::HeatDiag,
            &s2,
            format!("t={t}"),
            heat_diag_report(&s2, t, &y, DEFAULT_EPSILON)?,
        ));
    }
    Ok(rows)
}

fn heat_tail_suite(seed: u64) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    let cases = [
        (SpectralManifold::circle(), vec![0.1, 0.25, 0.5, 1.0, 2.0, 4.0]),
        (SpectralManifold::sphere3(), vec![0.05, 0.1, 0.25, 0.5, 0.75]),
    ];
    for (mi, (m, ts)) in cases.iter().enumerate() {
        let x = m.sample_uniform(1, mix_seed(seed, mi as u64))[0];
        let dim = m.dim() as f64;
        for &t in ts {
            // λ from the gate m/t upwards, plus one point below it
            for factor in [0.5, 1.0, 1.5, 2.0, 4.0, 8.0] {
                let lambda = factor * dim / t;
                let report = heat_tail_report(m, t, lambda, &x, DEFAULT_EPSILON)?;
                rows.push(BoundRow::new(BoundSuite::HeatTail, m, format!("t={t};lambda={lambda}"), report));
            }
        }
    }
    let c = SpectralManifold::circle();
    let x = c.sample_uniform(1, seed)[0];
    rows.push(BoundRow::new(
        BoundSuite::HeatTail,
        &c,
        "t=1;lambda=1".into(),
        heat_tail_report(&c, 1.0, 1.0, &x, DEFAULT_EPSILON)?,
    ));
    Ok(rows)
}

fn comparison_suite() -> Result<Vec<BoundRow>> {
    let s3 = SpectralManifold::sphere3();
    let mut rows = Vec::new();
    for t in [0.25, 0.5, 1.0] {
        let spec = KernelSpec::new(s3, KernelFamily::Heat { t })?;
        for k in 0..20 {
            let r = PI * k as f64 / 20.0;
            rows.push(BoundRow::new(
                BoundSuite::Comparison,
                &s3,
                format!("t={t};r={r};upper"),
                comparison_report(t, r)?,
            ));
            let q = ComparisonQuery { m: 3, k1: s3.ricci_lower_k1(), k2: s3.curvature_kappa(), r, t };
            let (x, y) = crate::bounds::sphere3_pair(r);
            let report =
                BoundReport::new(heat_lower_bound(&q)?, spec.eval(&x, &y)?, vec![Condition::new("m >= 3", true)], None)
                    .with_tolerance(spec.tau() * spec.diagonal());
            rows.push(BoundRow::new(BoundSuite::Comparison, &s3, format!("t={t};r={r};lower"), report));
        }
    }
    Ok(rows)
}

pub const CHECK_TRIALS: usize = 200;
pub const CHECK_DELTA: f64 = 0.05;

/// Failure rate against `δ + 3σ_binomial`.
fn rate_report(failure_rate: f64, n: usize, gate_n: f64) -> BoundReport {
    let bound = CHECK_DELTA + 3.0 * binomial_sigma(CHECK_DELTA, CHECK_TRIALS);
    BoundReport::new(failure_rate, bound, vec![Condition::new("n >= sample gate", n as f64 >= gate_n)], None)
}

fn gram_suite(seed: u64) -> Result<Vec<BoundRow>> {
    let cases = [
        (SpectralManifold::circle(), 5),
        (SpectralManifold::torus(2)?, 5),
        (SpectralManifold::sphere2(), 4),
        (SpectralManifold::sphere3(), 5),
    ];
    cases
        .par_iter()
        .enumerate()
        .map(|(i, (m, p))| {
            let gate = 7.0 * *p as f64 * (*p as f64 / CHECK_DELTA).ln();
            let n = gate.ceil() as usize;
            let check = empirical_gram_check(m, *p, n, CHECK_TRIALS, CHECK_DELTA, mix_seed(seed, i as u64))?;
            let q = &check.min_eig_quantiles;
            Ok(BoundRow::new(
                BoundSuite::Gram,
                m,
                format!("p={p};n={n};min_eig_q05={:.6};min_eig_q50={:.6}", q[0], q[2]),
                rate_report(1.0 - check.pass_rate, n, check.gate_n),
            ))
        })
        .collect()
}

fn tail_suite(seed: u64) -> Result<Vec<BoundRow>> {
    let cases = [
        (SpectralManifold::circle(), 1.0, 5),
        (SpectralManifold::sphere2(), 0.5, 4),
        (SpectralManifold::sphere3(), 0.5, 5),
    ];
    cases
        .par_iter()
        .enumerate()
        .map(|(i, (m, t, p))| {
            let spec = KernelSpec::new(*m, KernelFamily::Heat { t: *t })?;
            let probe = empirical_tail_check(m, &spec, *p, 1, 1, CHECK_DELTA, 0)?;
            let n = probe.gate_n.ceil().max(1.0) as usize;
            let check = empirical_tail_check(m, &spec, *p, n, CHECK_TRIALS, CHECK_DELTA, mix_seed(seed, i as u64))?;
            Ok(BoundRow::new(
                BoundSuite::TailOp,
                m,
                format!("t={t};p={p};n={n};tail_dim={}", check.tail_dim),
                rate_report(1.0 - check.pass_rate, n, check.gate_n),
            ))
        })
        .collect()
}
